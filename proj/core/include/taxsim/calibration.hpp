#pragma once

#include <map>
#include <string>
#include <vector>

#include "taxsim/econ.hpp"

namespace taxsim {

// File locations for calibration inputs. Empty fields fall back to the
// bundled defaults (data/ in the source tree, overridable with TAXSIM_DATA).
struct CalibrationPaths {
    std::string deciles_csv;
    std::string brackets_csv;
    std::string goods_csv;
    std::string persona_dir;
};

struct CalibrationData {
    std::vector<Money> income_deciles;  // exactly 10, ascending, annual USD
    std::vector<Good> goods_catalog;    // weights normalized to sum 1
    IncomeTaxSchedule tax_schedule;
    SalesTaxRate sales_rate{0.0644};
    EnforcementPolicy enforcement_defaults;
    std::map<std::string, std::vector<std::string>> persona_corpus;  // id -> snippets

    void validate() const;
};

std::string default_data_dir();

CalibrationData load_calibration(const CalibrationPaths& paths = {});

// Writes deciles/brackets/goods CSVs and persona files so that loading the
// emitted directory reproduces `cal` exactly.
void emit_calibration(const CalibrationData& cal, const std::string& dir);

}  // namespace taxsim
