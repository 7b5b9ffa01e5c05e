#include "taxsim/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "taxsim/errors.hpp"
#include "taxsim/io.hpp"
#include "taxsim/rng.hpp"

#include <json.hpp>

namespace taxsim {

std::uint64_t run_seed(std::uint64_t master, const std::string& experiment_kind,
                       std::uint64_t cell_index, std::uint64_t repetition) {
    return derive_seed(master, experiment_kind, cell_index, repetition);
}

Money socialist_tau_star(const CalibrationData& cal) {
    const Money top = cal.income_deciles.back();
    return compute_income_tax(top, cal.tax_schedule) + cal.sales_rate.rate * top;
}

namespace {

struct Task {
    std::string cell;
    int repetition = 0;
    SimulationConfig config;
};

// Standard per-run metric rows. delta is censored at T when no evasion
// occurred; delta_censored records how often.
std::vector<RunRecord> standard_records(const std::string& experiment, const Task& task,
                                        const RunResult& run) {
    const auto& m = run.metrics;
    std::vector<std::pair<std::string, double>> metrics{
        {"obar", m.informal_share},
        {"delta", m.delta ? static_cast<double>(*m.delta)
                          : static_cast<double>(run.config.steps)},
        {"delta_censored", m.delta ? 0.0 : 1.0},
        {"evaded", m.delta ? 1.0 : 0.0},
        {"welfare", m.welfare},
        {"audits", static_cast<double>(m.total_audits)},
        {"penalties", m.total_penalties},
        {"budget_final", run.government.budget},
        {"conservation_ok", m.conservation_ok ? 1.0 : 0.0},
    };
    std::vector<RunRecord> out;
    out.reserve(metrics.size());
    for (auto& [name, value] : metrics)
        out.push_back({experiment, task.cell, task.repetition, name, value});
    return out;
}

using PostFn = std::function<std::vector<RunRecord>(const Task&, const RunResult&)>;

// Runs every task, repetitions and cells in parallel up to `workers`
// threads; output order is the task order regardless of scheduling.
ExperimentResult run_tasks(const std::string& experiment, const std::vector<Task>& tasks,
                           const CalibrationData& cal, int workers, const PostFn& post) {
    std::vector<std::vector<RunRecord>> per_task(tasks.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                RunResult run = taxsim::run(tasks[i].config, cal);
                per_task[i] = post(tasks[i], run);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const int nthreads = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    ExperimentResult result;
    result.experiment = experiment;
    for (auto& records : per_task)
        result.records.insert(result.records.end(), records.begin(), records.end());
    return result;
}

// Validation/persona/dose runs pin the bounded-rationality traits so the
// outcome isolates the reward structure; heterogeneity experiments sample
// them per agent instead.
void pin_traits(SimulationConfig& cfg) {
    cfg.traits.zeta = 0.0;
    cfg.traits.eta = 14;
    cfg.traits.upsilon = 0.9;
}

SimulationConfig base_config(const ExperimentOptions& opts, long default_population) {
    SimulationConfig cfg;
    cfg.population = opts.population > 0 ? opts.population : default_population;
    cfg.steps = opts.steps > 0 ? opts.steps : 365;
    return cfg;
}

BackendSpec pick_backend(const ExperimentOptions& opts, ComplianceProfile fallback,
                         std::uint64_t seed, int dose_k = 0) {
    BackendSpec spec = opts.backend ? *opts.backend
                                    : BackendSpec::scripted(fallback);
    if (spec.kind == BackendSpec::Kind::scripted_persona) {
        spec.scripted.seed = derive_seed(seed, "backend");
        if (spec.scripted.profile == ComplianceProfile::dose_response && dose_k > 0)
            spec.scripted.dose_k = dose_k;
    }
    return spec;
}

}  // namespace

ExperimentResult run_validation(const std::string& config_id, const ExperimentOptions& opts,
                                const CalibrationData& cal) {
    struct ValidationCase {
        const char* id;
        double nu_k;
        double audit_p;
        ComplianceProfile stub;
    };
    // III/IV are reward-indifferent; the half_pay stub supplies the
    // theoretical indifference point as the anchor suggestion.
    static const ValidationCase cases[] = {
        {"I", 2.0, 0.0, ComplianceProfile::full_pay},
        {"II", 1.0, 1.0, ComplianceProfile::full_pay},
        {"III", 1.0, 0.0, ComplianceProfile::half_pay},
        {"IV", 0.0, 1.0, ComplianceProfile::half_pay},
    };

    std::vector<const ValidationCase*> selected;
    for (const auto& c : cases)
        if (config_id == "all" || config_id == c.id) selected.push_back(&c);
    if (selected.empty())
        throw ConfigError("unknown validation config '" + config_id + "' (I, II, III, IV or all)");

    const int reps = opts.repetitions > 0 ? opts.repetitions : 20;
    std::vector<Task> tasks;
    for (const auto* c : selected) {
        const std::uint64_t cell_index = static_cast<std::uint64_t>(c - cases);
        for (int r = 0; r < reps; ++r) {
            Task task;
            task.cell = std::string("config=") + c->id;
            task.repetition = r;
            SimulationConfig cfg = base_config(opts, 1);
            cfg.seed = run_seed(opts.seed, "validation", cell_index, r);
            cfg.public_goods = PublicGoodsFunction::linear(c->nu_k);
            EnforcementPolicy enforcement;
            enforcement.audit_probability = c->audit_p;
            enforcement.penalty_rate = 1.0;  // penalty equals the evaded taxes
            enforcement.fixed_fine = 0.0;
            enforcement.audit_period = 1;
            cfg.enforcement = enforcement;
            pin_traits(cfg);
            cfg.decision_backend = pick_backend(opts, c->stub, cfg.seed);
            tasks.push_back(std::move(task));
        }
    }
    return run_tasks("validation", tasks, cal, opts.workers,
                     [](const Task& t, const RunResult& r) {
                         return standard_records("validation", t, r);
                     });
}

ExperimentResult run_persona_experiment(ComplianceProfile profile, const ExperimentOptions& opts,
                                        const CalibrationData& cal) {
    const int reps = opts.repetitions > 0 ? opts.repetitions : 100;
    const std::uint64_t cell_index = static_cast<std::uint64_t>(profile);
    std::string persona_id = profile_to_string(profile);
    if (!cal.persona_corpus.count(persona_id)) persona_id = "random";

    std::vector<Task> tasks;
    for (int r = 0; r < reps; ++r) {
        Task task;
        task.cell = "profile=" + profile_to_string(profile);
        task.repetition = r;
        SimulationConfig cfg = base_config(opts, 1);
        cfg.seed = run_seed(opts.seed, "persona", cell_index, r);
        cfg.public_goods = PublicGoodsFunction::linear(1.0);
        EnforcementPolicy enforcement = cal.enforcement_defaults;
        enforcement.audit_probability = 0.0;
        cfg.enforcement = enforcement;
        cfg.persona_id = persona_id;
        pin_traits(cfg);
        cfg.decision_backend = pick_backend(opts, profile, cfg.seed);
        tasks.push_back(std::move(task));
    }
    return run_tasks("persona", tasks, cal, opts.workers,
                     [](const Task& t, const RunResult& r) {
                         return standard_records("persona", t, r);
                     });
}

double persona_backend_incidence(ComplianceProfile profile, int trials, std::uint64_t seed) {
    DecisionContext ctx;
    ctx.owed_amount = 1000.0;
    ctx.salary_monthly = 6000.0;
    ctx.salary_annual = 72000.0;
    long evaded = 0;
    for (int i = 0; i < trials; ++i) {
        BackendSpec spec = BackendSpec::scripted(profile, derive_seed(seed, "trial", i));
        LlmSuggestion s = suggest(spec, ctx);
        if (s.amount < ctx.owed_amount - kCentTol) ++evaded;
    }
    return static_cast<double>(evaded) / static_cast<double>(trials);
}

ExperimentResult run_dose_response(int k_min, int k_max, const ExperimentOptions& opts,
                                   const CalibrationData& cal) {
    if (k_min < 0 || k_max < k_min) throw ConfigError("bad synthetic-message range");
    const int reps = opts.repetitions > 0 ? opts.repetitions : 30;
    std::vector<Task> tasks;
    for (int k = k_min; k <= k_max; ++k) {
        for (int r = 0; r < reps; ++r) {
            Task task;
            char cell[32];
            std::snprintf(cell, sizeof(cell), "k=%02d", k);
            task.cell = cell;
            task.repetition = r;
            SimulationConfig cfg = base_config(opts, 1);
            cfg.seed = run_seed(opts.seed, "dose", static_cast<std::uint64_t>(k), r);
            cfg.public_goods = PublicGoodsFunction::linear(1.0);
            EnforcementPolicy enforcement = cal.enforcement_defaults;
            enforcement.audit_probability = 0.0;
            cfg.enforcement = enforcement;
            cfg.synthetic_snippets = k;
            pin_traits(cfg);
            cfg.decision_backend =
                pick_backend(opts, ComplianceProfile::dose_response, cfg.seed, k);
            if (cfg.decision_backend.kind == BackendSpec::Kind::scripted_persona)
                cfg.decision_backend.scripted.dose_k = k;
            tasks.push_back(std::move(task));
        }
    }
    return run_tasks("dose", tasks, cal, opts.workers, [](const Task& t, const RunResult& r) {
        return standard_records("dose", t, r);
    });
}

ExperimentResult run_decile_analysis(const std::string& variant, const ExperimentOptions& opts,
                                     const CalibrationData& cal) {
    PublicGoodsFunction nu;
    std::uint64_t cell_index = 0;
    if (variant == "0.75") {
        nu = PublicGoodsFunction::linear(0.75, PublicGoodsFunction::Mode::pooled);
        cell_index = 0;
    } else if (variant == "1.25") {
        nu = PublicGoodsFunction::linear(1.25, PublicGoodsFunction::Mode::pooled);
        cell_index = 1;
    } else if (variant == "capitalist") {
        nu = PublicGoodsFunction::capitalist(PublicGoodsFunction::Mode::pooled);
        cell_index = 2;
    } else if (variant == "socialist") {
        nu = PublicGoodsFunction::socialist(socialist_tau_star(cal),
                                            PublicGoodsFunction::Mode::pooled);
        cell_index = 3;
    } else {
        throw ConfigError("unknown decile variant '" + variant +
                          "' (0.75, 1.25, capitalist, socialist)");
    }

    const int reps = opts.repetitions > 0 ? opts.repetitions : 10;
    std::vector<Task> tasks;
    for (int r = 0; r < reps; ++r) {
        Task task;
        task.cell = "nu=" + variant;
        task.repetition = r;
        SimulationConfig cfg = base_config(opts, 100);
        cfg.seed = run_seed(opts.seed, "decile", cell_index, r);
        cfg.public_goods = nu;
        EnforcementPolicy enforcement = cal.enforcement_defaults;
        enforcement.audit_probability = 0.1;
        enforcement.audit_period = 30;
        cfg.enforcement = enforcement;
        cfg.decision_backend = pick_backend(opts, ComplianceProfile::law_abiding, cfg.seed);
        tasks.push_back(std::move(task));
    }

    const std::string variant_copy = variant;
    return run_tasks(
        "decile", tasks, cal, opts.workers,
        [variant_copy](const Task& t, const RunResult& r) {
            std::vector<RunRecord> out = standard_records("decile", t, r);
            // Per-decile aggregates within the run.
            for (int d = 0; d < 10; ++d) {
                std::vector<double> obars, deltas;
                long censored = 0;
                for (const auto& am : r.metrics.per_agent) {
                    if (am.decile != d) continue;
                    obars.push_back(am.obar);
                    if (am.delta) {
                        deltas.push_back(static_cast<double>(*am.delta));
                    } else {
                        deltas.push_back(static_cast<double>(r.config.steps));
                        ++censored;
                    }
                }
                if (obars.empty()) continue;
                char cell[48];
                std::snprintf(cell, sizeof(cell), "nu=%s/decile=%02d", variant_copy.c_str(),
                              d + 1);
                const double obar_mean =
                    std::accumulate(obars.begin(), obars.end(), 0.0) / obars.size();
                const double delta_mean =
                    std::accumulate(deltas.begin(), deltas.end(), 0.0) / deltas.size();
                out.push_back({"decile", cell, t.repetition, "obar", obar_mean});
                out.push_back({"decile", cell, t.repetition, "delta", delta_mean});
                out.push_back({"decile", cell, t.repetition, "delta_censored",
                               static_cast<double>(censored)});
            }
            return out;
        });
}

ExperimentResult run_sweep(const std::vector<double>& nu_grid, const std::vector<double>& p_grid,
                           const ExperimentOptions& opts, const CalibrationData& cal) {
    if (nu_grid.empty() || p_grid.empty()) throw ConfigError("sweep grids must be non-empty");
    if (!std::is_sorted(nu_grid.begin(), nu_grid.end()) ||
        !std::is_sorted(p_grid.begin(), p_grid.end()))
        throw ConfigError("sweep grids must be sorted ascending");

    const int reps = opts.repetitions > 0 ? opts.repetitions : 10;
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < nu_grid.size(); ++i) {
        for (std::size_t j = 0; j < p_grid.size(); ++j) {
            const std::uint64_t cell_index = i * p_grid.size() + j;
            for (int r = 0; r < reps; ++r) {
                Task task;
                char cell[64];
                std::snprintf(cell, sizeof(cell), "nu=%.4f,p=%.4f", nu_grid[i], p_grid[j]);
                task.cell = cell;
                task.repetition = r;
                SimulationConfig cfg = base_config(opts, 100);
                cfg.seed = run_seed(opts.seed, "sweep", cell_index, r);
                cfg.public_goods =
                    PublicGoodsFunction::linear(nu_grid[i], PublicGoodsFunction::Mode::pooled);
                EnforcementPolicy enforcement = cal.enforcement_defaults;
                enforcement.audit_probability = p_grid[j];
                enforcement.audit_period = 30;
                cfg.enforcement = enforcement;
                pin_traits(cfg);
                cfg.decision_backend =
                    pick_backend(opts, ComplianceProfile::risk_sensitive, cfg.seed);
                tasks.push_back(std::move(task));
            }
        }
    }
    return run_tasks("sweep", tasks, cal, opts.workers, [](const Task& t, const RunResult& r) {
        return standard_records("sweep", t, r);
    });
}

std::string results_csv(const ExperimentResult& result) {
    std::ostringstream out;
    out << "experiment,cell,repetition,metric,value\n";
    for (const auto& rec : result.records)
        out << csv_escape(rec.experiment) << "," << csv_escape(rec.cell) << "," << rec.repetition
            << "," << csv_escape(rec.metric) << "," << format_double(rec.value) << "\n";
    return out.str();
}

ExperimentResult parse_results_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty results csv");
    ExperimentResult result;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 5) throw ParseError("expected 5 fields in results csv", lineno);
        RunRecord rec;
        rec.experiment = fields[0];
        rec.cell = fields[1];
        rec.repetition = static_cast<int>(parse_double(fields[2]));
        rec.metric = fields[3];
        rec.value = parse_double(fields[4]);
        if (result.experiment.empty()) result.experiment = rec.experiment;
        result.records.push_back(std::move(rec));
    }
    return result;
}

std::vector<std::string> cells_in_order(const ExperimentResult& result) {
    std::vector<std::string> cells;
    std::set<std::string> seen;
    for (const auto& rec : result.records)
        if (seen.insert(rec.cell).second) cells.push_back(rec.cell);
    return cells;
}

std::vector<double> cell_metric_values(const ExperimentResult& result, const std::string& cell,
                                       const std::string& metric) {
    std::vector<double> values;
    for (const auto& rec : result.records)
        if (rec.cell == cell && rec.metric == metric) values.push_back(rec.value);
    return values;
}

std::optional<double> cell_metric_mean(const ExperimentResult& result, const std::string& cell,
                                       const std::string& metric) {
    auto values = cell_metric_values(result, cell, metric);
    if (values.empty()) return std::nullopt;
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
}

std::string summary_json(const ExperimentResult& result) {
    // Group by cell and metric; maps keep the output deterministic.
    std::map<std::string, std::map<std::string, std::vector<double>>> by_cell;
    for (const auto& rec : result.records) by_cell[rec.cell][rec.metric].push_back(rec.value);

    nlohmann::json cells;
    for (const auto& [cell, metrics] : by_cell) {
        nlohmann::json cj;
        for (const auto& [metric, values] : metrics) {
            Aggregate agg = aggregate(values);
            cj[metric] = {{"mean", agg.mean}, {"std", agg.stddev},   {"p5", agg.p5},
                          {"p50", agg.p50},   {"p95", agg.p95},      {"n", agg.n},
                          {"single_run", agg.single_run}};
        }
        // Validation cells also report the rank test against the theoretical
        // outcome (0 for I/II, the 0.5 indifference point for III/IV).
        if (cell.rfind("config=", 0) == 0 && metrics.count("obar")) {
            const std::string id = cell.substr(7);
            const double expected = (id == "I" || id == "II") ? 0.0 : 0.5;
            const auto& obars = metrics.at("obar");
            if (obars.size() >= 2) {
                std::vector<double> reference(obars.size(), expected);
                MannWhitneyResult mw = mann_whitney_u(obars, reference);
                cj["mw_vs_expected"] = {{"expected", expected},
                                        {"u", mw.u},
                                        {"p", mw.p},
                                        {"exact", mw.exact}};
            }
        }
        cells[cell] = std::move(cj);
    }
    nlohmann::json j{{"experiment", result.experiment}, {"cells", std::move(cells)}};
    return j.dump(2);
}

std::string heatmap_csv(const ExperimentResult& result) {
    std::map<std::pair<double, double>, std::pair<std::vector<double>, std::vector<double>>>
        cells;  // (nu, p) -> (deltas, obars)
    for (const auto& rec : result.records) {
        double nu = 0.0, p = 0.0;
        if (std::sscanf(rec.cell.c_str(), "nu=%lf,p=%lf", &nu, &p) != 2) continue;
        auto& entry = cells[{nu, p}];
        if (rec.metric == "delta") entry.first.push_back(rec.value);
        if (rec.metric == "obar") entry.second.push_back(rec.value);
    }
    std::ostringstream out;
    out << "nu_ratio,p,delta_mean,obar_mean\n";
    for (const auto& [key, entry] : cells) {
        const auto mean = [](const std::vector<double>& v) {
            return v.empty() ? 0.0
                             : std::accumulate(v.begin(), v.end(), 0.0) /
                                   static_cast<double>(v.size());
        };
        out << format_double(key.first) << "," << format_double(key.second) << ","
            << format_double(mean(entry.first)) << "," << format_double(mean(entry.second))
            << "\n";
    }
    return out.str();
}

}  // namespace taxsim
