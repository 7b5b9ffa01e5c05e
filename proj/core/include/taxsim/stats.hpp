#pragma once

#include <cstddef>
#include <vector>

namespace taxsim {

struct MannWhitneyResult {
    double u = 0.0;        // U statistic of the first sample
    double p = 1.0;        // two-sided
    bool exact = false;    // exact permutation enumeration vs normal approximation
};

// Rank-sum U with average-rank tie handling. Exact permutation enumeration
// when both samples have size <= 8, otherwise the normal approximation with
// tie correction and continuity correction. Throws DomainError on an empty
// sample.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;  // sample std (n-1); 0 by convention for n = 1
    double p5 = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
    std::size_t n = 0;
    bool single_run = false;
};

Aggregate aggregate(const std::vector<double>& values);

// Linear-interpolation quantile of a sorted copy of `values`.
double quantile(std::vector<double> values, double q);

// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

double normal_cdf(double z);

}  // namespace taxsim
