#include "taxsim/econ.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "taxsim/errors.hpp"

namespace taxsim {

double IncomeTaxSchedule::top_marginal_rate() const {
    double top = 0.0;
    for (const auto& b : brackets) top = std::max(top, b.rate);
    return top;
}

void IncomeTaxSchedule::validate() const {
    if (brackets.empty()) throw ConfigError("income tax schedule has no brackets");
    if (brackets.front().lower_bound != 0.0)
        throw ConfigError("first bracket must start at 0");
    for (std::size_t i = 0; i < brackets.size(); ++i) {
        const auto& b = brackets[i];
        if (b.rate < 0.0 || b.rate > 1.0)
            throw ConfigError("bracket rate outside [0,1]");
        if (i > 0 && b.lower_bound <= brackets[i - 1].lower_bound)
            throw ConfigError("bracket lower bounds must be strictly increasing");
    }
    if (mode == Mode::flat && brackets.size() != 1)
        throw ConfigError("flat schedule must have exactly one bracket");
}

IncomeTaxSchedule IncomeTaxSchedule::flat(double rate) {
    IncomeTaxSchedule s;
    s.mode = Mode::flat;
    s.brackets = {{0.0, rate}};
    return s;
}

PublicGoodsFunction PublicGoodsFunction::linear(double k, Mode m) {
    PublicGoodsFunction f;
    f.kind = Kind::linear;
    f.mode = m;
    f.linear_k = k;
    return f;
}

PublicGoodsFunction PublicGoodsFunction::capitalist(Mode m) {
    PublicGoodsFunction f;
    f.kind = Kind::capitalist_log;
    f.mode = m;
    return f;
}

PublicGoodsFunction PublicGoodsFunction::socialist(Money tau_star, Mode m) {
    PublicGoodsFunction f;
    f.kind = Kind::socialist;
    f.mode = m;
    f.tau_star = tau_star;
    return f;
}

PublicGoodsFunction PublicGoodsFunction::custom(std::vector<std::pair<Money, double>> pts, Mode m) {
    PublicGoodsFunction f;
    f.kind = Kind::custom_table;
    f.mode = m;
    f.table = std::move(pts);
    return f;
}

const char* PublicGoodsFunction::kind_name() const {
    switch (kind) {
        case Kind::linear: return "linear";
        case Kind::capitalist_log: return "capitalist_log";
        case Kind::socialist: return "socialist";
        case Kind::custom_table: return "custom_table";
    }
    return "?";
}

void EnforcementPolicy::validate() const {
    if (audit_probability < 0.0 || audit_probability > 1.0)
        throw ConfigError("audit probability outside [0,1]");
    if (penalty_rate < 0.0) throw ConfigError("penalty rate must be >= 0");
    if (fixed_fine < 0.0) throw ConfigError("fixed fine must be >= 0");
    if (audit_period < 1) throw ConfigError("audit period must be >= 1");
}

Money compute_income_tax(Money gross, const IncomeTaxSchedule& schedule) {
    if (gross < 0.0) throw DomainError("gross income must be >= 0");
    schedule.validate();
    if (schedule.mode == IncomeTaxSchedule::Mode::flat)
        return schedule.brackets.front().rate * gross;

    // Bracket thresholds as published are the first taxable dollar of each
    // bracket, so the continuous bracket edge sits one dollar below.
    double tax = 0.0;
    const auto& br = schedule.brackets;
    for (std::size_t i = 0; i < br.size(); ++i) {
        double lo = (i == 0) ? 0.0 : br[i].lower_bound - 1.0;
        double hi = (i + 1 < br.size()) ? br[i + 1].lower_bound - 1.0
                                        : std::numeric_limits<double>::infinity();
        double portion = std::clamp(gross, lo, hi) - lo;
        tax += br[i].rate * portion;
    }
    return tax;
}

Money compute_sales_tax(Money price, const SalesTaxRate& rate) {
    if (price < 0.0) throw DomainError("price must be >= 0");
    if (rate.rate < 0.0) throw DomainError("sales tax rate must be >= 0");
    return rate.rate * price;
}

double public_goods_value(const PublicGoodsFunction& f, Money tau) {
    switch (f.kind) {
        case PublicGoodsFunction::Kind::linear:
            return f.linear_k * tau;
        case PublicGoodsFunction::Kind::capitalist_log:
            return tau * std::log(std::max(tau, 1.0));
        case PublicGoodsFunction::Kind::socialist:
            return tau * (f.tau_star - std::log(std::max(tau, 1.0)));
        case PublicGoodsFunction::Kind::custom_table: {
            const auto& t = f.table;
            if (t.empty()) return 0.0;
            if (tau <= t.front().first) return t.front().second;
            if (tau >= t.back().first) return t.back().second;
            for (std::size_t i = 1; i < t.size(); ++i) {
                if (tau <= t[i].first) {
                    double x0 = t[i - 1].first, x1 = t[i].first;
                    double y0 = t[i - 1].second, y1 = t[i].second;
                    double w = (x1 > x0) ? (tau - x0) / (x1 - x0) : 0.0;
                    return y0 + w * (y1 - y0);
                }
            }
            return t.back().second;
        }
    }
    return 0.0;
}

Money compute_penalty(Money evasion_gap, const EnforcementPolicy& policy) {
    if (evasion_gap < 0.0) throw DomainError("evasion gap must be >= 0");
    if (evasion_gap == 0.0) return 0.0;
    return policy.penalty_rate * evasion_gap + policy.fixed_fine;
}

}  // namespace taxsim
