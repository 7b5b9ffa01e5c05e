#include "taxsim/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "taxsim/errors.hpp"
#include "taxsim/io.hpp"

#include <json.hpp>

namespace taxsim {

void SimulationConfig::validate() const {
    if (population < 1 || population > 1000)
        throw ConfigError("population must be in [1, 1000]");
    if (steps < 365 || steps > 7300)
        throw ConfigError("steps must be in [365, 7300]");
    if (!std::isnan(initial_budget_fraction) &&
        (initial_budget_fraction < 0.05 || initial_budget_fraction > 0.15))
        throw ConfigError("initial budget fraction must be in [0.05, 0.15]");
    if (welfare_discount <= 0.0 || welfare_discount >= 1.0)
        throw ConfigError("welfare discount must be in (0,1)");
    if (traits.zeta && (*traits.zeta < 0.0 || *traits.zeta > 1.0))
        throw ConfigError("zeta must be in [0,1]");
    if (traits.eta && (*traits.eta < 0 || *traits.eta > 1095))
        throw ConfigError("eta must be in [0, 1095]");
    if (traits.upsilon && (*traits.upsilon <= 0.0 || *traits.upsilon > 1.0))
        throw ConfigError("upsilon must be in (0, 1]");
    if (desired_goods < 1 || purchase_events_per_good < 1)
        throw ConfigError("desire schedule must have at least one event");
    if (spend_fraction < 0.0 || spend_fraction > 1.0)
        throw ConfigError("spend fraction must be in [0,1]");
}

struct World::Brain {
    std::unique_ptr<DqnPolicy> policy;
    DqnPolicy::RewardWindow window;             // accumulates since last decision
    std::vector<std::string> outcomes;          // rendered (decision, reward) lines, newest first
    std::string pending_outcome;                // decision half of the next outcome line
    struct PurchaseEvent {
        long day = 0;  // offset within the salary period
        int desire = 0;
    };
    std::vector<PurchaseEvent> schedule;
    long last_audit_step = -1;
};

World::~World() = default;
World::World(World&&) noexcept = default;
World& World::operator=(World&&) noexcept = default;

World::World(SimulationConfig config, const CalibrationData& calibration)
    : config_(std::move(config)),
      calibration_(calibration),
      rng_(derive_seed(config_.seed, "world")) {
    config_.validate();
    calibration_.validate();

    government_.sales_tax = calibration_.sales_rate;
    government_.income_tax = calibration_.tax_schedule;
    government_.public_goods = config_.public_goods;
    government_.enforcement =
        config_.enforcement ? *config_.enforcement : calibration_.enforcement_defaults;
    government_.enforcement.validate();

    const long n = config_.population;

    // Stratified decile assignment: a fresh random permutation of the ten
    // deciles per block of ten agents, truncated to N. N=1000 gives exactly
    // 100 agents per decile; N=1 draws a uniformly random decile.
    std::vector<int> decile_of(n);
    {
        std::vector<int> block(10);
        for (long i = 0; i < n; ++i) {
            if (i % 10 == 0) {
                std::iota(block.begin(), block.end(), 0);
                rng_.shuffle(block);
            }
            decile_of[i] = block[i % 10];
        }
    }

    std::vector<std::string> base_persona;
    if (auto it = calibration_.persona_corpus.find(config_.persona_id);
        it != calibration_.persona_corpus.end())
        base_persona = it->second;
    if (static_cast<int>(base_persona.size()) > config_.persona_snippets)
        base_persona.resize(config_.persona_snippets);

    double mean_salary = 0.0;
    agents_.reserve(n);
    brains_.reserve(n);
    for (long i = 0; i < n; ++i) {
        AgentState a;
        a.id = static_cast<int>(i);
        a.decile = decile_of[i];
        a.salary_annual = calibration_.income_deciles[a.decile];
        a.salary = round_cents(a.salary_annual / 12.0);
        a.salary_period = 30;
        a.risk = config_.traits.zeta ? *config_.traits.zeta : rng_.uniform();
        a.horizon = config_.traits.eta ? *config_.traits.eta : rng_.uniform_int(1, 1095);
        a.cognition = config_.traits.upsilon ? *config_.traits.upsilon : rng_.uniform(0.80, 0.99);
        a.balance = round_cents(config_.initial_balance_months * a.salary);
        a.persona.assign(config_.synthetic_snippets, kSyntheticEvasionSnippet);
        a.persona.insert(a.persona.end(), base_persona.begin(), base_persona.end());
        mean_salary += a.salary;

        // Desired bundle: goods drawn with probability proportional to their
        // CPI weights; quantities sized so one period's purchases spend about
        // spend_fraction of the net salary.
        Brain brain;
        const Money monthly_tax = compute_income_tax(a.salary_annual, government_.income_tax) / 12.0;
        const Money net_monthly = std::max(0.0, a.salary - monthly_tax);
        const int kappa = static_cast<int>(
            std::min<std::size_t>(config_.desired_goods, calibration_.goods_catalog.size()));
        const int events = config_.purchase_events_per_good;
        std::vector<double> weights;
        weights.reserve(calibration_.goods_catalog.size());
        for (const auto& g : calibration_.goods_catalog) weights.push_back(g.weight);
        const Money per_event = config_.spend_fraction * net_monthly /
                                static_cast<double>(std::max(1, kappa * events));
        for (int d = 0; d < kappa; ++d) {
            std::size_t gi = rng_.weighted_index(weights);
            weights[gi] = 0.0;  // without replacement
            Desire desire;
            desire.good_index = static_cast<int>(gi);
            desire.quantity_per_event = std::max<long>(
                1, std::llround(per_event / calibration_.goods_catalog[gi].price));
            desire.events_per_period = events;
            a.desires.push_back(desire);
        }
        const int total_events = kappa * events;
        for (int e = 0; e < total_events; ++e) {
            Brain::PurchaseEvent ev;
            ev.day = e * a.salary_period / total_events;
            ev.desire = e % kappa;  // interleave goods across the period
            brain.schedule.push_back(ev);
        }

        DqnConfig dqn = config_.dqn;
        dqn.zeta = a.risk;
        dqn.gamma = gamma_from_eta(a.horizon);
        dqn.noise_std = 1.0 - a.cognition;
        dqn.seed = derive_seed(config_.seed, "dqn", static_cast<std::uint64_t>(i));
        brain.policy = std::make_unique<DqnPolicy>(dqn);

        agents_.push_back(std::move(a));
        brains_.push_back(std::move(brain));
    }
    mean_salary /= static_cast<double>(n);

    double fraction = config_.initial_budget_fraction;
    if (std::isnan(fraction)) fraction = rng_.uniform(0.05, 0.15);
    government_.budget = round_cents(fraction * static_cast<double>(n) * mean_salary);

    backend_ = make_backend_session(config_.decision_backend);

    agent_numer_.assign(n, 0.0);
    agent_denom_.assign(n, 0.0);
    tax_paid_this_step_.assign(n, 0.0);
}

DecisionContext World::make_context(const AgentState& a, const Brain& b, DecisionKind kind,
                                    Money owed) const {
    DecisionContext ctx;
    ctx.agent_id = a.id;
    ctx.balance = a.balance;
    ctx.salary_monthly = a.salary;
    ctx.salary_annual = a.salary_annual;
    ctx.persona = a.persona;
    ctx.sales_tax = government_.sales_tax;
    ctx.income_tax = government_.income_tax;
    ctx.public_goods = government_.public_goods;
    ctx.enforcement = government_.enforcement;
    ctx.owed_amount = owed;
    ctx.kind = kind;
    ctx.cumulative_gap = a.ledger.evasion_gap;
    ctx.step = step_;
    ctx.steps_since_audit = step_ - b.last_audit_step;
    // Last 20 transaction lines, newest first.
    for (auto it = a.ledger.history.rbegin();
         it != a.ledger.history.rend() && ctx.history.size() < 20; ++it)
        if (!it->text_form.empty()) ctx.history.push_back(it->text_form);
    ctx.outcomes = b.outcomes;
    return ctx;
}

Money World::decide(AgentState& a, Brain& b, DecisionKind kind, Money owed) {
    // Render the previous decision's outcome now that its reward window is
    // complete; this is the in-context learning signal fed back to the LLM.
    if (!b.pending_outcome.empty()) {
        const double reward = compute_reward(b.window.utility, b.window.penalty, b.window.cost);
        b.outcomes.insert(b.outcomes.begin(),
                          b.pending_outcome + "; reward " + format_money(reward));
        if (b.outcomes.size() > 20) b.outcomes.resize(20);
        b.pending_outcome.clear();
    }

    DecisionContext ctx = make_context(a, b, kind, owed);
    LlmSuggestion suggestion;
    try {
        suggestion = backend_->suggest(ctx);
    } catch (const std::exception& e) {
        throw BackendError("decision backend failed for agent " + std::to_string(a.id) +
                           " at step " + std::to_string(step_) + ": " + e.what());
    }
    const Money paid =
        b.policy->decide_and_learn(ctx, suggestion, b.window, a.cognition, rng_);
    b.window = {};
    b.pending_outcome =
        "paid " + format_money(paid) + " of " + format_money(owed) + " owed";
    return paid;
}

void World::post_informal_accounting(AgentState& a, std::size_t idx, Money value, Money owed,
                                     Money paid) {
    // A transaction joins the informal economy in proportion to its unpaid
    // tax: contribution (unpaid/owed) * (value + owed).
    const double weight = value + owed;
    o_denom_ += weight;
    agent_denom_[idx] += weight;
    if (owed > 0.0) {
        const double unpaid_frac = std::clamp((owed - paid) / owed, 0.0, 1.0);
        o_numer_ += unpaid_frac * weight;
        agent_numer_[idx] += unpaid_frac * weight;
    }
    a.ledger.taxes_owed_cum += owed;
    a.ledger.taxes_paid_cum += paid;
    a.ledger.evasion_gap =
        a.ledger.taxes_owed_cum - a.ledger.taxes_paid_cum - a.ledger.waived_cum;
    if (!a.ledger.first_evasion_step && a.ledger.evasion_gap > kCentTol)
        a.ledger.first_evasion_step = step_;
}

StepEvents World::step() {
    StepEvents events;
    const long n = config_.population;
    std::fill(tax_paid_this_step_.begin(), tax_paid_this_step_.end(), 0.0);

    Money salary_in = 0.0;
    Money sink_in = 0.0;
    Money gov_in = 0.0;
    Money agents_delta = 0.0;

    // (1) salaries and income-tax decisions
    for (long i = 0; i < n; ++i) {
        AgentState& a = agents_[i];
        if (step_ % a.salary_period != 0) continue;
        Brain& b = brains_[i];
        const Money owed =
            round_cents(compute_income_tax(a.salary_annual, government_.income_tax) / 12.0);
        Money paid = 0.0;
        if (owed > 0.0) {
            paid = decide(a, b, DecisionKind::income_tax, owed);
            ++events.decisions;
        }
        a.balance += a.salary - paid;
        government_.budget += paid;
        salary_in += a.salary;
        gov_in += paid;
        agents_delta += a.salary - paid;
        tax_paid_this_step_[i] += paid;
        b.window.cost += paid;
        TransactionRecord rec;
        rec.step = step_;
        rec.kind = TransactionRecord::Kind::income;
        rec.amount = a.salary;
        rec.tax_owed = owed;
        rec.tax_paid = paid;
        rec.text_form = "Obtained an income " + format_money(a.salary) + " at time " +
                        std::to_string(step_);
        a.ledger.history.push_back(std::move(rec));
        post_informal_accounting(a, i, a.salary, owed, paid);
        ++events.salaries_paid;
    }

    // (2) purchases and sales-tax decisions; the supply side is an
    // accounting sink, only the buyer's reporting decision is modeled
    for (long i = 0; i < n; ++i) {
        AgentState& a = agents_[i];
        Brain& b = brains_[i];
        const long day = step_ % a.salary_period;
        for (const auto& ev : b.schedule) {
            if (ev.day != day) continue;
            const Desire& d = a.desires[ev.desire];
            const Good& good = calibration_.goods_catalog[d.good_index];
            const Money price = round_cents(good.price * static_cast<double>(d.quantity_per_event));
            const Money owed = round_cents(compute_sales_tax(price, government_.sales_tax));
            Money paid = 0.0;
            if (owed > 0.0) {
                paid = decide(a, b, DecisionKind::sales_tax, owed);
                ++events.decisions;
            }
            a.balance -= price + paid;
            government_.budget += paid;
            sink_in += price;
            gov_in += paid;
            agents_delta -= price + paid;
            tax_paid_this_step_[i] += paid;
            b.window.cost += price + paid;
            TransactionRecord rec;
            rec.step = step_;
            rec.kind = TransactionRecord::Kind::purchase;
            rec.amount = price;
            rec.tax_owed = owed;
            rec.tax_paid = paid;
            rec.text_form = "buy a product for a price " + format_money(price);
            a.ledger.history.push_back(std::move(rec));
            post_informal_accounting(a, i, price, owed, paid);
            ++events.purchases;
        }
    }

    // (3) random audits: discovered gaps are penalized and then waived
    Money penalties_this_step = 0.0;
    if (step_ % government_.enforcement.audit_period == 0) {
        for (long i = 0; i < n; ++i) {
            if (!rng_.bernoulli(government_.enforcement.audit_probability)) continue;
            AgentState& a = agents_[i];
            Brain& b = brains_[i];
            ++events.audits;
            b.last_audit_step = step_;
            if (a.ledger.evasion_gap > kCentTol) {
                const Money gap = a.ledger.evasion_gap;
                const Money penalty = round_cents(compute_penalty(gap, government_.enforcement));
                a.balance -= penalty;
                government_.budget += penalty;
                government_.waived_back_taxes_cum += gap;
                a.ledger.waived_cum += gap;
                a.ledger.evasion_gap = 0.0;
                b.window.penalty += penalty;
                gov_in += penalty;
                agents_delta -= penalty;
                penalties_this_step += penalty;
                ++events.penalties_charged;
                TransactionRecord rec;
                rec.step = step_;
                rec.kind = TransactionRecord::Kind::penalty;
                rec.amount = penalty;
                a.ledger.history.push_back(std::move(rec));
            }
        }
    }

    // (4) public goods: individual mode values an agent's own payment,
    // pooled mode shares the valuation of the aggregate equally
    const double discount = std::pow(1.0 + config_.welfare_discount, static_cast<double>(step_));
    if (government_.public_goods.mode == PublicGoodsFunction::Mode::pooled) {
        Money total = 0.0;
        for (long i = 0; i < n; ++i) total += tax_paid_this_step_[i];
        const double u = public_goods_value(government_.public_goods, total) /
                         static_cast<double>(n);
        if (u != 0.0) {
            for (long i = 0; i < n; ++i) {
                brains_[i].window.utility += u;
                TransactionRecord rec;
                rec.step = step_;
                rec.kind = TransactionRecord::Kind::public_good_utility;
                rec.amount = u;
                agents_[i].ledger.history.push_back(std::move(rec));
            }
            welfare_ += static_cast<double>(n) * u / discount;
        }
    } else {
        for (long i = 0; i < n; ++i) {
            const double u = public_goods_value(government_.public_goods, tax_paid_this_step_[i]);
            if (u == 0.0) continue;
            brains_[i].window.utility += u;
            TransactionRecord rec;
            rec.step = step_;
            rec.kind = TransactionRecord::Kind::public_good_utility;
            rec.amount = u;
            agents_[i].ledger.history.push_back(std::move(rec));
            welfare_ += u / discount;
        }
    }

    // (5) metrics and flow conservation
    events.taxes_collected = gov_in - penalties_this_step;
    events.penalties_collected = penalties_this_step;
    const double gross = std::abs(salary_in) + std::abs(sink_in) + std::abs(gov_in) + 1.0;
    const double residual = std::abs(agents_delta + gov_in + sink_in - salary_in) / gross;
    metrics_.max_conservation_residual = std::max(metrics_.max_conservation_residual, residual);
    if (residual > 1e-6) metrics_.conservation_ok = false;
    for (const auto& a : agents_)
        if (a.balance < 0.0) metrics_.balance_went_negative = true;
    if (government_.budget < -kCentTol) {
        government_.budget_violation = true;
        metrics_.budget_violation = true;
    }

    metrics_.informal_size_series.push_back(o_numer_);
    metrics_.informal_share_series.push_back(o_denom_ > 0.0 ? o_numer_ / o_denom_ : 0.0);
    metrics_.budget_series.push_back(government_.budget);
    metrics_.audit_series.push_back(events.audits);
    metrics_.penalty_series.push_back(penalties_this_step);
    metrics_.total_audits += events.audits;
    metrics_.total_decisions += events.decisions;
    metrics_.total_penalties += penalties_this_step;

    ++step_;
    return events;
}

RunMetrics World::finalize() {
    for (long i = 0; i < config_.population; ++i) {
        Brain& b = brains_[i];
        b.policy->finish_run(b.window, agents_[i].cognition, rng_, agents_[i].salary);
        b.window = {};
    }
    metrics_.informal_share = o_denom_ > 0.0 ? o_numer_ / o_denom_ : 0.0;
    metrics_.welfare = welfare_;
    metrics_.per_agent.clear();
    std::optional<long> population_delta;
    for (long i = 0; i < config_.population; ++i) {
        AgentMetrics am;
        am.agent_id = agents_[i].id;
        am.decile = agents_[i].decile;
        am.delta = agents_[i].ledger.first_evasion_step;
        am.obar = agent_denom_[i] > 0.0 ? agent_numer_[i] / agent_denom_[i] : 0.0;
        if (am.delta && (!population_delta || *am.delta < *population_delta))
            population_delta = am.delta;
        metrics_.per_agent.push_back(am);
    }
    metrics_.delta = population_delta;
    return metrics_;
}

RunResult World::run() {
    while (step_ < config_.steps) step();
    RunResult result;
    result.metrics = finalize();
    result.config = config_;
    result.agents = agents_;
    result.government = government_;
    return result;
}

RunResult run(const SimulationConfig& config, const CalibrationData& calibration) {
    World world(config, calibration);
    return world.run();
}

double informal_share(const RunMetrics& metrics) { return metrics.informal_share; }

std::optional<long> first_evasion_time(const RunMetrics& metrics) { return metrics.delta; }

static const char* kind_name(TransactionRecord::Kind k) {
    switch (k) {
        case TransactionRecord::Kind::income: return "income";
        case TransactionRecord::Kind::purchase: return "purchase";
        case TransactionRecord::Kind::tax_payment: return "tax_payment";
        case TransactionRecord::Kind::penalty: return "penalty";
        case TransactionRecord::Kind::public_good_utility: return "public_good_utility";
    }
    return "?";
}

std::string run_snapshot_json(const RunResult& result) {
    nlohmann::json j;
    j["config"] = {
        {"population", result.config.population},
        {"steps", result.config.steps},
        {"seed", result.config.seed},
        {"welfare_discount", result.config.welfare_discount},
        {"public_goods", result.government.public_goods.kind_name()},
        {"public_goods_mode",
         result.government.public_goods.mode == PublicGoodsFunction::Mode::pooled ? "pooled"
                                                                                  : "individual"},
        {"audit_probability", result.government.enforcement.audit_probability},
        {"penalty_rate", result.government.enforcement.penalty_rate},
        {"fixed_fine", result.government.enforcement.fixed_fine},
        {"audit_period", result.government.enforcement.audit_period},
        {"backend", result.config.decision_backend.kind == BackendSpec::Kind::remote_chat
                        ? std::string("remote")
                        : "scripted:" + profile_to_string(
                                            result.config.decision_backend.scripted.profile)},
    };
    j["metrics"] = {
        {"informal_share", result.metrics.informal_share},
        {"welfare", result.metrics.welfare},
        {"total_audits", result.metrics.total_audits},
        {"total_decisions", result.metrics.total_decisions},
        {"total_penalties", result.metrics.total_penalties},
        {"balance_went_negative", result.metrics.balance_went_negative},
        {"budget_violation", result.metrics.budget_violation},
        {"conservation_ok", result.metrics.conservation_ok},
    };
    if (result.metrics.delta) j["metrics"]["delta"] = *result.metrics.delta;
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& a : result.agents) {
        nlohmann::json ledger = nlohmann::json::array();
        for (const auto& r : a.ledger.history)
            ledger.push_back({{"step", r.step},
                              {"kind", kind_name(r.kind)},
                              {"amount", r.amount},
                              {"tax_owed", r.tax_owed},
                              {"tax_paid", r.tax_paid}});
        nlohmann::json aj{{"id", a.id},
                          {"decile", a.decile + 1},
                          {"balance", a.balance},
                          {"salary", a.salary},
                          {"taxes_owed_cum", a.ledger.taxes_owed_cum},
                          {"taxes_paid_cum", a.ledger.taxes_paid_cum},
                          {"waived_cum", a.ledger.waived_cum},
                          {"evasion_gap", a.ledger.evasion_gap},
                          {"ledger", std::move(ledger)}};
        if (a.ledger.first_evasion_step) aj["first_evasion_step"] = *a.ledger.first_evasion_step;
        agents.push_back(std::move(aj));
    }
    j["agents"] = std::move(agents);
    j["series"] = {
        {"O", result.metrics.informal_size_series},
        {"informal_share", result.metrics.informal_share_series},
        {"government_budget", result.metrics.budget_series},
    };
    return j.dump(2);
}

std::string run_metrics_csv(const RunResult& result) {
    std::ostringstream out;
    out << "step,O,informal_share_so_far,government_budget,audits,penalties\n";
    const auto& m = result.metrics;
    for (std::size_t t = 0; t < m.informal_size_series.size(); ++t) {
        out << t << "," << format_double(m.informal_size_series[t]) << ","
            << format_double(m.informal_share_series[t]) << ","
            << format_double(m.budget_series[t]) << "," << m.audit_series[t] << ","
            << format_double(m.penalty_series[t]) << "\n";
    }
    return out.str();
}

}  // namespace taxsim
