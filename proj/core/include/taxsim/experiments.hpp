#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taxsim/calibration.hpp"
#include "taxsim/llm.hpp"
#include "taxsim/stats.hpp"
#include "taxsim/world.hpp"

namespace taxsim {

// One metric value of one repetition of one experiment cell; results.csv is
// the long-format dump of these.
struct RunRecord {
    std::string experiment;
    std::string cell;
    int repetition = 0;
    std::string metric;
    double value = 0.0;
};

struct ExperimentResult {
    std::string experiment;
    std::vector<RunRecord> records;  // ordered by (cell, repetition, metric)
};

struct ExperimentOptions {
    long population = 0;  // 0 = experiment default
    long steps = 0;       // 0 = 365
    std::uint64_t seed = 0;
    int repetitions = 0;  // 0 = experiment default
    int workers = 1;
    std::optional<BackendSpec> backend;  // overrides the experiment's default backend
};

// Validation configs I-IV: single agent, audit every step, penalty equal to
// the evaded taxes with no fixed fine. Traits are pinned so the equilibrium
// outcome reflects the reward structure rather than exploration noise.
ExperimentResult run_validation(const std::string& config_id, const ExperimentOptions& opts,
                                const CalibrationData& cal);

// Full-run persona experiment: nu(tau) = tau and P(xi) = 0 so evasion carries
// no rational incentive; whatever evasion appears is suggestion-driven.
ExperimentResult run_persona_experiment(ComplianceProfile profile, const ExperimentOptions& opts,
                                        const CalibrationData& cal);

// Fraction of single-decision trials where the scripted profile suggests
// less than the owed amount. Calibration check for the backend itself.
double persona_backend_incidence(ComplianceProfile profile, int trials, std::uint64_t seed);

// k synthetic pro-evasion lines, k in [k_min, k_max], dose_response backend.
ExperimentResult run_dose_response(int k_min, int k_max, const ExperimentOptions& opts,
                                   const CalibrationData& cal);

// Population analysis per income decile under one of the public-goods
// variants: "0.75", "1.25", "capitalist", "socialist". P(xi) = 0.1, pooled
// public goods.
ExperimentResult run_decile_analysis(const std::string& variant, const ExperimentOptions& opts,
                                     const CalibrationData& cal);

// nu-ratio x audit-probability grid with the risk_sensitive backend.
ExperimentResult run_sweep(const std::vector<double>& nu_grid, const std::vector<double>& p_grid,
                           const ExperimentOptions& opts, const CalibrationData& cal);

// Per-run seed: hash64(master_seed, experiment_kind, cell_index, repetition).
std::uint64_t run_seed(std::uint64_t master, const std::string& experiment_kind,
                       std::uint64_t cell_index, std::uint64_t repetition);

// tau* for the socialist variant: annual tax contribution of the top earners
// assuming the whole income is spent.
Money socialist_tau_star(const CalibrationData& cal);

std::string results_csv(const ExperimentResult& result);
ExperimentResult parse_results_csv(const std::string& text);

// Deterministic aggregation (mean/std/p5/p50/p95 per cell and metric, plus a
// Mann-Whitney comparison against the theoretical outcome for validation
// cells). A pure function of the records, so re-aggregating a parsed
// results.csv reproduces it byte for byte.
std::string summary_json(const ExperimentResult& result);

// Sweep pivot: one row per (nu_ratio, p) cell with mean delta and obar.
std::string heatmap_csv(const ExperimentResult& result);

// Mean of one metric within one cell; used by tests and the CLI.
std::optional<double> cell_metric_mean(const ExperimentResult& result, const std::string& cell,
                                       const std::string& metric);
std::vector<double> cell_metric_values(const ExperimentResult& result, const std::string& cell,
                                       const std::string& metric);
std::vector<std::string> cells_in_order(const ExperimentResult& result);

}  // namespace taxsim
