#include "taxsim/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "taxsim/errors.hpp"

namespace taxsim {

std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr == b)
        throw ParseError("not a number: '" + s + "'");
    return v;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    CsvTable table;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (table.header.empty()) {
            table.header = std::move(fields);
        } else {
            if (fields.size() != table.header.size())
                throw ParseError("malformed row in " + path + ": expected " +
                                     std::to_string(table.header.size()) + " fields, got " +
                                     std::to_string(fields.size()),
                                 lineno);
            table.rows.push_back(std::move(fields));
            table.row_lines.push_back(lineno);
        }
    }
    if (table.header.empty()) throw ParseError("empty CSV file " + path);
    return table;
}

void write_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

bool KvConfig::has(const std::string& section, const std::string& key) const {
    auto it = sections.find(section);
    return it != sections.end() && it->second.count(key) > 0;
}

std::string KvConfig::get(const std::string& section, const std::string& key,
                          const std::string& fallback) const {
    auto it = sections.find(section);
    if (it == sections.end()) return fallback;
    auto jt = it->second.find(key);
    return jt == it->second.end() ? fallback : jt->second;
}

double KvConfig::get_double(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? parse_double(get(section, key)) : fallback;
}

long KvConfig::get_long(const std::string& section, const std::string& key, long fallback) const {
    return has(section, key) ? static_cast<long>(std::llround(parse_double(get(section, key)))) : fallback;
}

bool KvConfig::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string v = get(section, key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ParseError("not a boolean: '" + v + "'");
}

void KvConfig::set(const std::string& section, const std::string& key, const std::string& value) {
    sections[section][key] = value;
}

std::string KvConfig::to_string() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& [name, kv] : sections) {
        if (!first) out << "\n";
        first = false;
        out << "[" << name << "]\n";
        for (const auto& [k, v] : kv) {
            bool numeric = !v.empty() && v.find_first_not_of("0123456789+-.eE") == std::string::npos;
            bool boolean = v == "true" || v == "false";
            if (numeric || boolean)
                out << k << " = " << v << "\n";
            else
                out << k << " = \"" << v << "\"\n";
        }
    }
    return out.str();
}

KvConfig parse_kv_config(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ParseError("unterminated section header", lineno);
            section = trim(t.substr(1, t.size() - 2));
            cfg.sections[section];
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
            val = val.substr(1, val.size() - 2);
        if (key.empty()) throw ParseError("empty key", lineno);
        cfg.sections[section][key] = val;
    }
    return cfg;
}

KvConfig load_kv_config(const std::string& path) {
    return parse_kv_config(read_file(path));
}

std::vector<double> parse_grid(const std::string& text) {
    auto c1 = text.find(':');
    auto c2 = text.rfind(':');
    if (c1 == std::string::npos || c2 == c1)
        throw ParseError("grid must be lo:hi:step, got '" + text + "'");
    double lo = parse_double(text.substr(0, c1));
    double hi = parse_double(text.substr(c1 + 1, c2 - c1 - 1));
    double step = parse_double(text.substr(c2 + 1));
    if (step <= 0.0 || hi < lo) throw ParseError("bad grid '" + text + "'");
    std::vector<double> grid;
    for (long i = 0;; ++i) {
        double v = lo + step * static_cast<double>(i);
        if (v > hi + 1e-9) break;
        grid.push_back(std::min(v, hi));
    }
    return grid;
}

std::optional<std::string> env_var(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

void ensure_directory(const std::string& path) {
    std::filesystem::create_directories(path);
}

}  // namespace taxsim
