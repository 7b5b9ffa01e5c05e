#include "taxsim/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "taxsim/errors.hpp"
#include "taxsim/io.hpp"

namespace taxsim {

namespace fs = std::filesystem;

std::string default_data_dir() {
    if (auto env = env_var("TAXSIM_DATA")) return *env;
#ifdef TAXSIM_BUNDLED_DATA_DIR
    return TAXSIM_BUNDLED_DATA_DIR;
#else
    return "data";
#endif
}

void CalibrationData::validate() const {
    if (income_deciles.size() != 10)
        throw ConfigError("expected exactly 10 income deciles, got " +
                          std::to_string(income_deciles.size()));
    for (std::size_t i = 1; i < income_deciles.size(); ++i)
        if (income_deciles[i] <= income_deciles[i - 1])
            throw ConfigError("income deciles must be strictly ascending");
    tax_schedule.validate();
    enforcement_defaults.validate();
    if (sales_rate.rate < 0.0) throw ConfigError("sales tax rate must be >= 0");
    if (goods_catalog.empty()) throw ConfigError("goods catalog is empty");
    double wsum = 0.0;
    for (const auto& g : goods_catalog) {
        if (g.price <= 0.0) throw ConfigError("good price must be > 0: " + g.name);
        if (g.weight < 0.0) throw ConfigError("good weight must be >= 0: " + g.name);
        wsum += g.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-6)
        throw ConfigError("goods weights must normalize to 1 (got " + format_double(wsum) + ")");
}

static std::vector<Money> load_deciles(const std::string& path) {
    CsvTable t = read_csv(path);
    int ci = t.column("income");
    if (ci < 0) throw ParseError("deciles file missing 'income' column: " + path);
    std::vector<Money> deciles;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        try {
            deciles.push_back(parse_double(t.rows[r][ci]));
        } catch (const ParseError& e) {
            throw ParseError(std::string(e.what()) + " in " + path, t.row_lines[r]);
        }
    }
    if (deciles.size() != 10)
        throw ConfigError("expected exactly 10 income deciles in " + path + ", got " +
                          std::to_string(deciles.size()));
    return deciles;
}

static IncomeTaxSchedule load_brackets(const std::string& path) {
    CsvTable t = read_csv(path);
    int cl = t.column("lower_bound");
    int cr = t.column("rate");
    if (cl < 0 || cr < 0)
        throw ParseError("brackets file needs lower_bound,rate columns: " + path);
    IncomeTaxSchedule s;
    s.mode = IncomeTaxSchedule::Mode::progressive;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        try {
            s.brackets.push_back({parse_double(t.rows[r][cl]), parse_double(t.rows[r][cr])});
        } catch (const ParseError& e) {
            throw ParseError(std::string(e.what()) + " in " + path, t.row_lines[r]);
        }
    }
    if (s.brackets.size() == 1) s.mode = IncomeTaxSchedule::Mode::flat;
    s.validate();
    return s;
}

// Goods ship with relative-importance weights only; a synthetic unit price is
// derived from the normalized weight so cheap staples stay cheap and heavy
// categories (tuition, wireless service) cost more per purchase.
static std::vector<Good> load_goods(const std::string& path) {
    CsvTable t = read_csv(path);
    int ci = t.column("id");
    int cn = t.column("name");
    int cw = t.column("weight");
    if (ci < 0 || cn < 0 || cw < 0)
        throw ParseError("goods file needs id,name,weight columns: " + path);
    std::vector<Good> goods;
    double wsum = 0.0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        Good g;
        try {
            g.id = static_cast<int>(parse_double(t.rows[r][ci]));
            g.name = t.rows[r][cn];
            g.weight = parse_double(t.rows[r][cw]);
        } catch (const ParseError& e) {
            throw ParseError(std::string(e.what()) + " in " + path, t.row_lines[r]);
        }
        if (g.weight < 0.0) throw ParseError("negative weight in " + path, t.row_lines[r]);
        wsum += g.weight;
        goods.push_back(std::move(g));
    }
    if (goods.empty()) throw ConfigError("goods catalog is empty: " + path);
    if (wsum <= 0.0) throw ConfigError("goods weights sum to zero: " + path);
    for (auto& g : goods) {
        g.weight /= wsum;
        g.price = std::max(0.01, round_cents(1000.0 * g.weight));
    }
    return goods;
}

static std::map<std::string, std::vector<std::string>> load_personas(const std::string& dir) {
    std::map<std::string, std::vector<std::string>> corpus;
    if (!fs::exists(dir)) return corpus;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path());
        std::vector<std::string> snippets;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) snippets.push_back(line);
        }
        corpus[entry.path().stem().string()] = std::move(snippets);
    }
    return corpus;
}

CalibrationData load_calibration(const CalibrationPaths& paths) {
    const std::string base = default_data_dir();
    auto pick = [&](const std::string& given, const char* name) {
        return given.empty() ? (fs::path(base) / name).string() : given;
    };
    CalibrationData cal;
    cal.income_deciles = load_deciles(pick(paths.deciles_csv, "deciles.csv"));
    cal.tax_schedule = load_brackets(pick(paths.brackets_csv, "brackets.csv"));
    cal.goods_catalog = load_goods(pick(paths.goods_csv, "goods.csv"));
    cal.persona_corpus =
        load_personas(paths.persona_dir.empty() ? (fs::path(base) / "persona").string()
                                                : paths.persona_dir);
    cal.validate();
    return cal;
}

void emit_calibration(const CalibrationData& cal, const std::string& dir) {
    ensure_directory(dir);
    {
        std::ostringstream out;
        out << "decile,income\n";
        for (std::size_t i = 0; i < cal.income_deciles.size(); ++i)
            out << (i + 1) << "," << format_double(cal.income_deciles[i]) << "\n";
        write_file((fs::path(dir) / "deciles.csv").string(), out.str());
    }
    {
        std::ostringstream out;
        out << "lower_bound,rate\n";
        for (const auto& b : cal.tax_schedule.brackets)
            out << format_double(b.lower_bound) << "," << format_double(b.rate) << "\n";
        write_file((fs::path(dir) / "brackets.csv").string(), out.str());
    }
    {
        std::ostringstream out;
        out << "id,name,weight\n";
        for (const auto& g : cal.goods_catalog)
            out << g.id << "," << csv_escape(g.name) << "," << format_double(g.weight) << "\n";
        write_file((fs::path(dir) / "goods.csv").string(), out.str());
    }
    for (const auto& [id, snippets] : cal.persona_corpus) {
        std::ostringstream out;
        for (const auto& s : snippets) out << s << "\n";
        write_file((fs::path(dir) / "persona" / (id + ".txt")).string(), out.str());
    }
}

}  // namespace taxsim
