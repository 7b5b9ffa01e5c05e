#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "taxsim/calibration.hpp"
#include "taxsim/dqn.hpp"
#include "taxsim/econ.hpp"
#include "taxsim/llm.hpp"
#include "taxsim/money.hpp"
#include "taxsim/rng.hpp"

namespace taxsim {

struct TransactionRecord {
    enum class Kind { income, purchase, tax_payment, penalty, public_good_utility };
    long step = 0;
    Kind kind = Kind::income;
    Money amount = 0.0;
    Money tax_owed = 0.0;
    Money tax_paid = 0.0;  // in [0, tax_owed]
    std::string text_form; // rendered line for the LLM history (income/purchase only)
};

struct AgentLedger {
    std::vector<TransactionRecord> history;
    Money taxes_owed_cum = 0.0;
    Money taxes_paid_cum = 0.0;
    Money waived_cum = 0.0;   // back taxes forgiven by audits
    Money evasion_gap = 0.0;  // owed - paid - waived, reset to 0 by an audit
    std::optional<long> first_evasion_step;
};

// One desired good: quantity bought per salary period, split across
// `events_per_period` purchase events.
struct Desire {
    int good_index = 0;  // index into the goods catalog
    long quantity_per_event = 1;
    int events_per_period = 1;
};

struct AgentState {
    int id = 0;
    Money balance = 0.0;
    long salary_period = 30;    // theta, steps between salaries
    Money salary = 0.0;         // per period
    Money salary_annual = 0.0;
    int decile = 0;             // 0-based index into the income deciles
    std::vector<Desire> desires;
    double risk = 0.0;          // zeta in [0,1]
    long horizon = 365;         // eta in [1,1095]
    double cognition = 0.99;    // upsilon in [0.80, 0.99]
    std::vector<std::string> persona;  // newest first
    AgentLedger ledger;
};

struct GovernmentState {
    Money budget = 0.0;
    SalesTaxRate sales_tax;
    IncomeTaxSchedule income_tax;
    PublicGoodsFunction public_goods;
    EnforcementPolicy enforcement;
    Money waived_back_taxes_cum = 0.0;
    bool budget_violation = false;  // reported, never a crash
};

// Optional per-run trait pins; unset traits are sampled from their
// calibrated ranges per agent.
struct TraitOverrides {
    std::optional<double> zeta;
    std::optional<long> eta;
    std::optional<double> upsilon;
};

struct SimulationConfig {
    long population = 1;    // N in [1, 1000]
    long steps = 365;       // T in [365, 7300], one day per step
    std::uint64_t seed = 0;
    // m0 = fraction * N * mean monthly salary; NaN draws U[0.05, 0.15].
    double initial_budget_fraction = std::numeric_limits<double>::quiet_NaN();
    double welfare_discount = 0.001;  // rho per step
    BackendSpec decision_backend = BackendSpec::scripted(ComplianceProfile::full_pay);

    PublicGoodsFunction public_goods = PublicGoodsFunction::linear(1.0);
    std::optional<EnforcementPolicy> enforcement;  // unset -> calibration defaults
    TraitOverrides traits;
    DqnConfig dqn;  // zeta/gamma/noise_std/seed filled per agent

    std::string persona_id = "random";
    int persona_snippets = 20;     // base persona truncation
    int synthetic_snippets = 0;    // k evasion-promoting lines prepended
    int desired_goods = 6;         // kappa
    int purchase_events_per_good = 4;  // per salary period
    double spend_fraction = 0.80;  // of net monthly salary
    double initial_balance_months = 2.0;

    void validate() const;  // throws ConfigError on out-of-range values
};

struct StepEvents {
    long salaries_paid = 0;
    long purchases = 0;
    long audits = 0;
    long penalties_charged = 0;
    long decisions = 0;
    Money taxes_collected = 0.0;
    Money penalties_collected = 0.0;
};

struct AgentMetrics {
    int agent_id = 0;
    std::optional<long> delta;  // first evasion step
    double obar = 0.0;          // agent-level informal share
    int decile = 0;
};

struct RunMetrics {
    std::optional<long> delta;                 // population-level first evasion
    std::vector<double> informal_size_series;  // cumulative O per step
    std::vector<double> informal_share_series; // O / total economy so far
    std::vector<double> budget_series;
    std::vector<long> audit_series;
    std::vector<Money> penalty_series;
    double informal_share = 0.0;  // terminal Obar in [0,1]
    double welfare = 0.0;         // sum_t sum_a u / (1+rho)^t
    std::vector<AgentMetrics> per_agent;
    long total_audits = 0;
    long total_decisions = 0;
    Money total_penalties = 0.0;
    bool balance_went_negative = false;
    bool budget_violation = false;
    bool conservation_ok = true;
    double max_conservation_residual = 0.0;  // relative to gross step flow
};

struct RunResult {
    SimulationConfig config;
    RunMetrics metrics;
    std::vector<AgentState> agents;
    GovernmentState government;
};

class World {
public:
    World(SimulationConfig config, const CalibrationData& calibration);
    ~World();
    World(World&&) noexcept;
    World& operator=(World&&) noexcept;

    StepEvents step();  // advances one day; throws BackendError with agent/step context
    RunResult run();    // runs all remaining steps and finalizes

    long current_step() const { return step_; }
    const std::vector<AgentState>& agents() const { return agents_; }
    const GovernmentState& government() const { return government_; }
    const SimulationConfig& config() const { return config_; }

private:
    struct Brain;

    DecisionContext make_context(const AgentState& a, const Brain& b, DecisionKind kind,
                                 Money owed) const;
    Money decide(AgentState& a, Brain& b, DecisionKind kind, Money owed);
    void post_informal_accounting(AgentState& a, std::size_t idx, Money value, Money owed,
                                  Money paid);
    RunMetrics finalize();

    SimulationConfig config_;
    CalibrationData calibration_;
    GovernmentState government_;
    std::vector<AgentState> agents_;
    std::vector<Brain> brains_;
    std::unique_ptr<BackendSession> backend_;
    Rng rng_;
    long step_ = 0;

    // informal-economy accounting
    double o_numer_ = 0.0;
    double o_denom_ = 0.0;
    std::vector<double> agent_numer_;
    std::vector<double> agent_denom_;
    std::vector<Money> tax_paid_this_step_;
    RunMetrics metrics_;
    double welfare_ = 0.0;
};

RunResult run(const SimulationConfig& config, const CalibrationData& calibration);

// Metric accessors named after the reported quantities.
double informal_share(const RunMetrics& metrics);
std::optional<long> first_evasion_time(const RunMetrics& metrics);

// Exports: full snapshot (config echo, ledgers, series) and the per-step
// metric series with columns step,O,informal_share_so_far,government_budget,
// audits,penalties.
std::string run_snapshot_json(const RunResult& result);
std::string run_metrics_csv(const RunResult& result);

}  // namespace taxsim
