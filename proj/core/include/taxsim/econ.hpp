#pragma once

#include <string>
#include <vector>

#include "taxsim/money.hpp"

namespace taxsim {

// One income-tax bracket. `lower_bound` is the first taxable dollar of the
// bracket (0, 11001, 44726, ... for the bundled federal schedule); the
// bracket covers income above lower_bound-1 up to the next bracket's
// lower_bound-1.
struct TaxBracket {
    Money lower_bound = 0.0;
    double rate = 0.0;  // fraction in [0,1]
};

struct IncomeTaxSchedule {
    enum class Mode { progressive, flat };
    Mode mode = Mode::progressive;
    std::vector<TaxBracket> brackets;

    double top_marginal_rate() const;
    void validate() const;  // throws ConfigError on non-increasing bounds etc.

    static IncomeTaxSchedule flat(double rate);
};

struct SalesTaxRate {
    double rate = 0.0;  // fraction >= 0, constant across all goods
};

// Maps tax dollars to perceived utility. Log variants clamp their argument
// with max(tau, 1) so they stay finite and non-negative near zero.
struct PublicGoodsFunction {
    enum class Kind { linear, capitalist_log, socialist, custom_table };
    enum class Mode { individual, pooled };

    Kind kind = Kind::linear;
    Mode mode = Mode::individual;
    double linear_k = 1.0;                                    // linear: k * tau
    Money tau_star = 0.0;                                     // socialist: tau * (tau_star - ln tau)
    std::vector<std::pair<Money, double>> table;              // custom: piecewise-linear, non-decreasing

    static PublicGoodsFunction linear(double k, Mode m = Mode::individual);
    static PublicGoodsFunction capitalist(Mode m = Mode::individual);
    static PublicGoodsFunction socialist(Money tau_star, Mode m = Mode::individual);
    static PublicGoodsFunction custom(std::vector<std::pair<Money, double>> pts, Mode m = Mode::individual);

    const char* kind_name() const;
};

struct EnforcementPolicy {
    double audit_probability = 0.0;  // P(xi) in [0,1]
    double penalty_rate = 0.75;      // alpha >= 0, proportional to the discovered gap
    Money fixed_fine = 100000.0;     // charged only when a positive gap is found
    long audit_period = 365;         // steps between audit rounds, >= 1

    void validate() const;
};

struct Good {
    int id = 0;
    std::string name;
    Money price = 0.0;    // > 0
    double weight = 0.0;  // relative-importance fraction; catalog normalizes to 1
};

// Total income tax owed on a gross amount. Progressive mode sums
// rate * (portion of gross inside each bracket); flat mode is a single
// bracket over everything.
Money compute_income_tax(Money gross, const IncomeTaxSchedule& schedule);

// Tax added on top of the price and paid by the buyer.
Money compute_sales_tax(Money price, const SalesTaxRate& rate);

// Utility of `tau` tax dollars under `f`. Pooled-mode callers pass the
// aggregate tax and divide by population size themselves.
double public_goods_value(const PublicGoodsFunction& f, Money tau);

// Penalty for a discovered evasion gap: penalty_rate * gap + fixed_fine when
// gap > 0, zero on a clean audit. Back taxes themselves are waived, never
// collected.
Money compute_penalty(Money evasion_gap, const EnforcementPolicy& policy);

}  // namespace taxsim
