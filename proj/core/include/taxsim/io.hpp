#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace taxsim {

// Shortest round-trip decimal form of a double (parse(format(x)) == x), so
// values survive a CSV/JSON round trip bit-exactly.
std::string format_double(double x);
double parse_double(const std::string& s);  // throws ParseError

// Minimal RFC-4180-style CSV: fields containing comma/quote/newline are
// quoted, embedded quotes doubled.
std::string csv_escape(const std::string& field);
std::vector<std::string> split_csv_line(const std::string& line);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<long> row_lines;  // 1-based source line of each row

    int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);
void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// TOML-style key/value config: [section] headers, `key = value` lines where
// value is a number, a "quoted string" or true/false. Comments start with #.
struct KvConfig {
    std::map<std::string, std::map<std::string, std::string>> sections;

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback = "") const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_long(const std::string& section, const std::string& key, long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    void set(const std::string& section, const std::string& key, const std::string& value);

    std::string to_string() const;  // deterministic: sections and keys sorted
};

KvConfig parse_kv_config(const std::string& text);
KvConfig load_kv_config(const std::string& path);

// "lo:hi:step" inclusive grid used by sweep flags.
std::vector<double> parse_grid(const std::string& text);

std::optional<std::string> env_var(const char* name);
void ensure_directory(const std::string& path);

}  // namespace taxsim
