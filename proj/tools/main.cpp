// taxsim CLI: experiment battery for the tax-compliance agent simulation.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <thread>

#include "taxsim/calibration.hpp"
#include "taxsim/errors.hpp"
#include "taxsim/experiments.hpp"
#include "taxsim/io.hpp"
#include "taxsim/world.hpp"

namespace fs = std::filesystem;
using namespace taxsim;

namespace {

struct GlobalFlags {
    std::uint64_t seed = 0;
    int reps = 0;
    long population = 0;
    long steps = 0;
    std::string backend;
    std::string out = "out";
    int workers = 0;
    std::string data_dir;
};

ExperimentOptions make_options(const GlobalFlags& g) {
    ExperimentOptions opts;
    opts.seed = g.seed;
    opts.repetitions = g.reps;
    opts.population = g.population;
    opts.steps = g.steps;
    opts.workers = g.workers > 0
                       ? g.workers
                       : std::max(1u, std::min(4u, std::thread::hardware_concurrency()));
    if (!g.backend.empty()) {
        if (g.backend == "remote") {
            opts.backend = BackendSpec::remote_from_env();
        } else if (g.backend.rfind("scripted:", 0) == 0) {
            opts.backend = BackendSpec::scripted(profile_from_string(g.backend.substr(9)));
        } else {
            throw ConfigError("--backend must be scripted:<profile> or remote");
        }
    }
    return opts;
}

CalibrationData load_cal(const GlobalFlags& g) {
    CalibrationPaths paths;
    if (!g.data_dir.empty()) {
        paths.deciles_csv = (fs::path(g.data_dir) / "deciles.csv").string();
        paths.brackets_csv = (fs::path(g.data_dir) / "brackets.csv").string();
        paths.goods_csv = (fs::path(g.data_dir) / "goods.csv").string();
        paths.persona_dir = (fs::path(g.data_dir) / "persona").string();
    }
    return load_calibration(paths);
}

std::string make_out_dir(const std::string& base, const std::string& experiment) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
    fs::path dir = fs::path(base) / experiment / stamp;
    for (int suffix = 1; fs::exists(dir); ++suffix)
        dir = fs::path(base) / experiment / (std::string(stamp) + "-" + std::to_string(suffix));
    fs::create_directories(dir);
    return dir.string();
}

KvConfig config_echo(const GlobalFlags& g, const ExperimentOptions& opts,
                     const std::string& experiment, const std::string& dir,
                     const std::map<std::string, std::string>& extra = {}) {
    KvConfig echo;
    echo.set("simulation", "population", std::to_string(opts.population));
    echo.set("simulation", "steps", std::to_string(opts.steps));
    echo.set("simulation", "seed", std::to_string(opts.seed));
    echo.set("experiment", "kind", experiment);
    echo.set("experiment", "repetitions", std::to_string(opts.repetitions));
    echo.set("experiment", "workers", std::to_string(opts.workers));
    for (const auto& [k, v] : extra) echo.set("experiment", k, v);
    if (opts.backend && opts.backend->kind == BackendSpec::Kind::remote_chat) {
        echo.set("backend", "kind", "remote");
        echo.set("backend", "model", opts.backend->remote.model);
    } else if (opts.backend) {
        echo.set("backend", "kind", "scripted");
        echo.set("backend", "profile", profile_to_string(opts.backend->scripted.profile));
    } else {
        echo.set("backend", "kind", "scripted");
        echo.set("backend", "profile", "experiment default");
    }
    echo.set("output", "dir", dir);
    (void)g;
    return echo;
}

std::string write_experiment_outputs(const ExperimentResult& result, const GlobalFlags& g,
                                     const ExperimentOptions& opts,
                                     const std::map<std::string, std::string>& extra = {},
                                     bool with_heatmap = false) {
    const std::string dir = make_out_dir(g.out, result.experiment);
    write_file((fs::path(dir) / "results.csv").string(), results_csv(result));
    write_file((fs::path(dir) / "summary.json").string(), summary_json(result));
    write_file((fs::path(dir) / "config_echo.toml").string(),
               config_echo(g, opts, result.experiment, dir, extra).to_string());
    if (with_heatmap)
        write_file((fs::path(dir) / "heatmap.csv").string(), heatmap_csv(result));
    return dir;
}

void print_cell_means(const ExperimentResult& result) {
    for (const auto& cell : cells_in_order(result)) {
        auto obar = cell_metric_mean(result, cell, "obar");
        auto delta = cell_metric_mean(result, cell, "delta");
        if (!obar && !delta) continue;
        std::printf("  %-28s", cell.c_str());
        if (obar) std::printf("  mean obar %.4f", *obar);
        if (delta) std::printf("  mean delta %.1f", *delta);
        std::printf("\n");
    }
}

int cmd_run_simulation(const GlobalFlags& g, SimulationConfig cfg) {
    const CalibrationData cal = load_cal(g);
    if (g.population > 0) cfg.population = g.population;
    if (g.steps > 0) cfg.steps = g.steps;
    if (g.seed != 0 || cfg.seed == 0) cfg.seed = g.seed;
    ExperimentOptions opts = make_options(g);
    if (opts.backend) cfg.decision_backend = *opts.backend;
    if (cfg.decision_backend.kind == BackendSpec::Kind::scripted_persona &&
        cfg.decision_backend.scripted.seed == 0)
        cfg.decision_backend.scripted.seed = derive_seed(cfg.seed, "backend");

    RunResult result = run(cfg, cal);
    const std::string dir = make_out_dir(g.out, "run");
    write_file((fs::path(dir) / "snapshot.json").string(), run_snapshot_json(result));
    write_file((fs::path(dir) / "metrics.csv").string(), run_metrics_csv(result));
    opts.population = cfg.population;
    opts.steps = cfg.steps;
    opts.seed = cfg.seed;
    write_file((fs::path(dir) / "config_echo.toml").string(),
               config_echo(g, opts, "run", dir).to_string());
    std::printf("run finished: obar %.4f, welfare %.2f, audits %ld\n",
                result.metrics.informal_share, result.metrics.welfare,
                result.metrics.total_audits);
    if (result.metrics.delta) std::printf("  first evasion at step %ld\n", *result.metrics.delta);
    std::printf("wrote %s\n", dir.c_str());
    return 0;
}

SimulationConfig config_from_spec(const KvConfig& spec) {
    SimulationConfig cfg;
    cfg.population = spec.get_long("simulation", "population", cfg.population);
    cfg.steps = spec.get_long("simulation", "steps", cfg.steps);
    cfg.seed = static_cast<std::uint64_t>(spec.get_long("simulation", "seed", 0));
    cfg.welfare_discount =
        spec.get_double("simulation", "welfare_discount", cfg.welfare_discount);
    if (spec.has("simulation", "initial_budget_fraction"))
        cfg.initial_budget_fraction = spec.get_double("simulation", "initial_budget_fraction", 0.1);
    cfg.persona_id = spec.get("simulation", "persona", cfg.persona_id);
    cfg.synthetic_snippets = static_cast<int>(
        spec.get_long("simulation", "synthetic_snippets", cfg.synthetic_snippets));

    const std::string pg = spec.get("simulation", "public_goods", "linear");
    const auto mode = spec.get("simulation", "public_goods_mode", "individual") == "pooled"
                          ? PublicGoodsFunction::Mode::pooled
                          : PublicGoodsFunction::Mode::individual;
    if (pg == "linear")
        cfg.public_goods =
            PublicGoodsFunction::linear(spec.get_double("simulation", "public_goods_k", 1.0), mode);
    else if (pg == "capitalist")
        cfg.public_goods = PublicGoodsFunction::capitalist(mode);
    else if (pg == "socialist")
        cfg.public_goods = PublicGoodsFunction::socialist(
            spec.get_double("simulation", "tau_star", 10.0), mode);
    else
        throw ConfigError("unknown public_goods kind in spec: " + pg);

    if (spec.has("simulation", "audit_probability") || spec.has("simulation", "penalty_rate") ||
        spec.has("simulation", "fixed_fine") || spec.has("simulation", "audit_period")) {
        EnforcementPolicy e;
        e.audit_probability = spec.get_double("simulation", "audit_probability", 0.1);
        e.penalty_rate = spec.get_double("simulation", "penalty_rate", 0.75);
        e.fixed_fine = spec.get_double("simulation", "fixed_fine", 100000.0);
        e.audit_period = spec.get_long("simulation", "audit_period", 365);
        cfg.enforcement = e;
    }
    if (spec.has("simulation", "zeta")) cfg.traits.zeta = spec.get_double("simulation", "zeta", 0.0);
    if (spec.has("simulation", "eta")) cfg.traits.eta = spec.get_long("simulation", "eta", 365);
    if (spec.has("simulation", "upsilon"))
        cfg.traits.upsilon = spec.get_double("simulation", "upsilon", 0.99);

    const std::string backend_kind = spec.get("backend", "kind", "scripted");
    if (backend_kind == "remote") {
        cfg.decision_backend = BackendSpec::remote_from_env();
    } else {
        cfg.decision_backend = BackendSpec::scripted(
            profile_from_string(spec.get("backend", "profile", "full_pay")), 0,
            static_cast<int>(spec.get_long("backend", "dose_k", 0)));
    }
    return cfg;
}

int dispatch_spec_file(GlobalFlags g, const std::string& path);

int cmd_validate(const GlobalFlags& g, const std::string& config_id) {
    const CalibrationData cal = load_cal(g);
    ExperimentOptions opts = make_options(g);
    ExperimentResult result = run_validation(config_id, opts, cal);
    opts.population = opts.population > 0 ? opts.population : 1;
    opts.steps = opts.steps > 0 ? opts.steps : 365;
    opts.repetitions = opts.repetitions > 0 ? opts.repetitions : 20;
    const std::string dir =
        write_experiment_outputs(result, g, opts, {{"config", config_id}});
    std::printf("validation (%s):\n", config_id.c_str());
    print_cell_means(result);
    std::printf("wrote %s\n", dir.c_str());
    return 0;
}

int cmd_persona(const GlobalFlags& g, const std::string& profile_name) {
    const CalibrationData cal = load_cal(g);
    ExperimentOptions opts = make_options(g);
    std::vector<std::string> profiles;
    if (profile_name == "all")
        profiles = {"law_abiding", "random", "law_breaking"};
    else
        profiles = {profile_name};

    for (const auto& name : profiles) {
        ComplianceProfile profile = profile_from_string(name);
        ExperimentResult result = run_persona_experiment(profile, opts, cal);
        const double backend_incidence = persona_backend_incidence(profile, 1000, opts.seed);
        ExperimentOptions echo = opts;
        echo.population = echo.population > 0 ? echo.population : 1;
        echo.steps = echo.steps > 0 ? echo.steps : 365;
        echo.repetitions = echo.repetitions > 0 ? echo.repetitions : 100;
        const std::string dir = write_experiment_outputs(result, g, echo, {{"profile", name}});
        const std::string cell = "profile=" + name;
        auto run_incidence = cell_metric_mean(result, cell, "evaded");
        std::printf("persona %-13s backend incidence %.3f, run incidence %.3f\n", name.c_str(),
                    backend_incidence, run_incidence.value_or(0.0));
        print_cell_means(result);
        std::printf("wrote %s\n", dir.c_str());
    }
    return 0;
}

int cmd_dose(const GlobalFlags& g, int k_min, int k_max) {
    const CalibrationData cal = load_cal(g);
    ExperimentOptions opts = make_options(g);
    ExperimentResult result = run_dose_response(k_min, k_max, opts, cal);
    ExperimentOptions echo = opts;
    echo.population = echo.population > 0 ? echo.population : 1;
    echo.steps = echo.steps > 0 ? echo.steps : 365;
    echo.repetitions = echo.repetitions > 0 ? echo.repetitions : 30;
    const std::string dir = write_experiment_outputs(
        result, g, echo,
        {{"k_min", std::to_string(k_min)}, {"k_max", std::to_string(k_max)}});
    std::printf("dose response k in [%d, %d]:\n", k_min, k_max);
    print_cell_means(result);
    std::printf("wrote %s\n", dir.c_str());
    return 0;
}

int cmd_decile(const GlobalFlags& g, const std::string& variant) {
    const CalibrationData cal = load_cal(g);
    ExperimentOptions opts = make_options(g);
    std::vector<std::string> variants;
    if (variant == "all")
        variants = {"0.75", "1.25", "capitalist", "socialist"};
    else
        variants = {variant};
    for (const auto& v : variants) {
        ExperimentResult result = run_decile_analysis(v, opts, cal);
        ExperimentOptions echo = opts;
        echo.population = echo.population > 0 ? echo.population : 100;
        echo.steps = echo.steps > 0 ? echo.steps : 365;
        echo.repetitions = echo.repetitions > 0 ? echo.repetitions : 10;
        const std::string dir = write_experiment_outputs(result, g, echo, {{"variant", v}});
        std::printf("decile analysis nu=%s:\n", v.c_str());
        print_cell_means(result);
        std::printf("wrote %s\n", dir.c_str());
    }
    return 0;
}

int cmd_sweep(const GlobalFlags& g, const std::string& nu_grid_text,
              const std::string& p_grid_text) {
    const CalibrationData cal = load_cal(g);
    ExperimentOptions opts = make_options(g);
    const auto nu_grid = parse_grid(nu_grid_text);
    const auto p_grid = parse_grid(p_grid_text);
    ExperimentResult result = run_sweep(nu_grid, p_grid, opts, cal);
    ExperimentOptions echo = opts;
    echo.population = echo.population > 0 ? echo.population : 100;
    echo.steps = echo.steps > 0 ? echo.steps : 365;
    echo.repetitions = echo.repetitions > 0 ? echo.repetitions : 10;
    const std::string dir = write_experiment_outputs(
        result, g, echo, {{"nu_grid", nu_grid_text}, {"p_grid", p_grid_text}}, true);
    std::printf("sweep %zux%zu cells:\n", nu_grid.size(), p_grid.size());
    print_cell_means(result);
    std::printf("wrote %s\n", dir.c_str());
    return 0;
}

int cmd_report(const std::string& in_path, std::string out_path) {
    fs::path input(in_path);
    if (fs::is_directory(input)) input /= "results.csv";
    ExperimentResult result = parse_results_csv(read_file(input.string()));
    if (out_path.empty()) out_path = (input.parent_path() / "summary.report.json").string();
    write_file(out_path, summary_json(result));
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int dispatch_spec_file(GlobalFlags g, const std::string& path) {
    KvConfig spec = load_kv_config(path);
    const std::string kind = spec.get("experiment", "kind", "run");
    if (spec.has("experiment", "repetitions") && g.reps == 0)
        g.reps = static_cast<int>(spec.get_long("experiment", "repetitions", 0));
    if (spec.has("simulation", "population") && g.population == 0)
        g.population = spec.get_long("simulation", "population", 0);
    if (spec.has("simulation", "steps") && g.steps == 0)
        g.steps = spec.get_long("simulation", "steps", 0);
    if (spec.has("simulation", "seed") && g.seed == 0)
        g.seed = static_cast<std::uint64_t>(spec.get_long("simulation", "seed", 0));
    if (spec.has("output", "dir")) g.out = spec.get("output", "dir");
    if (spec.has("backend", "kind") && g.backend.empty()) {
        const std::string bk = spec.get("backend", "kind");
        g.backend = bk == "remote" ? "remote" : "scripted:" + spec.get("backend", "profile", "full_pay");
    }

    if (kind == "run") return cmd_run_simulation(g, config_from_spec(spec));
    if (kind == "validation") return cmd_validate(g, spec.get("experiment", "config", "all"));
    if (kind == "persona") return cmd_persona(g, spec.get("experiment", "profile", "all"));
    if (kind == "dose")
        return cmd_dose(g, static_cast<int>(spec.get_long("experiment", "k_min", 0)),
                        static_cast<int>(spec.get_long("experiment", "k_max", 20)));
    if (kind == "decile") return cmd_decile(g, spec.get("experiment", "variant", "all"));
    if (kind == "sweep")
        return cmd_sweep(g, spec.get("experiment", "nu_grid", "0.5:1.5:0.25"),
                         spec.get("experiment", "p_grid", "0:1:0.25"));
    throw ConfigError("unknown experiment kind in spec file: " + kind);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"taxsim: agent-based tax compliance simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags g;
    app.add_option("--seed", g.seed, "Master seed (per-run seeds derive from it)");
    app.add_option("--reps", g.reps, "Repetitions per experiment cell");
    app.add_option("--population", g.population, "Agents per run");
    app.add_option("--steps", g.steps, "Days per run");
    app.add_option("--backend", g.backend, "scripted:<profile> or remote");
    app.add_option("--out", g.out, "Output directory root")->capture_default_str();
    app.add_option("--workers", g.workers, "Parallel run workers");
    app.add_option("--data", g.data_dir, "Calibration data directory");

    auto* validate = app.add_subcommand("validate", "Equilibrium configs I-IV, single agent");
    std::string config_id = "all";
    validate->add_option("--config", config_id, "I, II, III, IV or all")
        ->check(CLI::IsMember({"I", "II", "III", "IV", "all"}));

    auto* persona = app.add_subcommand("persona", "Personality archetype incidence");
    std::string profile = "all";
    persona->add_option("--profile", profile, "law_abiding, random, law_breaking or all")
        ->check(CLI::IsMember({"law_abiding", "random", "law_breaking", "all"}));

    auto* dose = app.add_subcommand("dose", "Synthetic-message dose response");
    int k_min = 0, k_max = 20;
    dose->add_option("--k-min", k_min, "Smallest synthetic message count");
    dose->add_option("--k-max", k_max, "Largest synthetic message count");

    auto* decile = app.add_subcommand("decile", "Per-income-decile analysis");
    std::string variant = "all";
    decile->add_option("--variant", variant, "0.75, 1.25, capitalist, socialist or all")
        ->check(CLI::IsMember({"0.75", "1.25", "capitalist", "socialist", "all"}));

    auto* sweep = app.add_subcommand("sweep", "nu-ratio x audit-probability heatmap");
    std::string nu_grid = "0.5:1.5:0.25";
    std::string p_grid = "0:1:0.25";
    sweep->add_option("--nu-grid", nu_grid, "lo:hi:step over nu(tau)/tau")->capture_default_str();
    sweep->add_option("--p-grid", p_grid, "lo:hi:step over P(xi)")->capture_default_str();

    auto* run_cmd = app.add_subcommand("run", "Single simulation run");
    std::string spec_path;
    run_cmd->add_option("--spec", spec_path, "Experiment spec file (TOML-style)");

    auto* report = app.add_subcommand("report", "Re-aggregate an existing results.csv");
    std::string report_in;
    std::string report_out;
    report->add_option("--in", report_in, "results.csv or its directory")->required();
    report->add_option("--out", report_out, "Summary output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(g, config_id);
        if (persona->parsed()) return cmd_persona(g, profile);
        if (dose->parsed()) return cmd_dose(g, k_min, k_max);
        if (decile->parsed()) return cmd_decile(g, variant);
        if (sweep->parsed()) return cmd_sweep(g, nu_grid, p_grid);
        if (run_cmd->parsed()) {
            if (!spec_path.empty()) return dispatch_spec_file(g, spec_path);
            return cmd_run_simulation(g, SimulationConfig{});
        }
        if (report->parsed()) return cmd_report(report_in, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
