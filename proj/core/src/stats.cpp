#include "taxsim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "taxsim/errors.hpp"

namespace taxsim {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Average ranks (1-based) of the combined sample.
static std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

static double u_from_ranks(const std::vector<double>& ranks, std::size_t n_a) {
    double r_a = 0.0;
    for (std::size_t i = 0; i < n_a; ++i) r_a += ranks[i];
    return r_a - static_cast<double>(n_a) * (n_a + 1) / 2.0;
}

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw DomainError("mann_whitney_u needs non-empty samples");
    const std::size_t n_a = a.size(), n_b = b.size(), n = n_a + n_b;

    std::vector<double> combined;
    combined.reserve(n);
    combined.insert(combined.end(), a.begin(), a.end());
    combined.insert(combined.end(), b.begin(), b.end());
    const std::vector<double> ranks = average_ranks(combined);

    MannWhitneyResult res;
    res.u = u_from_ranks(ranks, n_a);
    const double products = static_cast<double>(n_a) * static_cast<double>(n_b);

    if (n_a <= 8 && n_b <= 8) {
        // Enumerate every assignment of n_a combined ranks to sample a. The
        // permutation distribution of U is symmetric around n_a*n_b/2.
        res.exact = true;
        std::vector<std::size_t> comb(n_a);
        std::iota(comb.begin(), comb.end(), 0);
        const double u_lo = std::min(res.u, products - res.u);
        const double u_hi = products - u_lo;
        long total = 0, extreme = 0;
        const double eps = 1e-9;
        while (true) {
            double r_a = 0.0;
            for (std::size_t idx : comb) r_a += ranks[idx];
            const double u = r_a - static_cast<double>(n_a) * (n_a + 1) / 2.0;
            ++total;
            if (u <= u_lo + eps || u >= u_hi - eps) ++extreme;
            // next combination of indices 0..n-1
            std::size_t k = n_a;
            while (k > 0 && comb[k - 1] == n - n_a + (k - 1)) --k;
            if (k == 0) break;
            ++comb[k - 1];
            for (std::size_t j = k; j < n_a; ++j) comb[j] = comb[j - 1] + 1;
        }
        res.p = std::min(1.0, static_cast<double>(extreme) / static_cast<double>(total));
        return res;
    }

    // Normal approximation with tie correction and continuity correction.
    std::map<double, long> tie_counts;
    for (double v : combined) ++tie_counts[v];
    double tie_term = 0.0;
    for (const auto& [v, t] : tie_counts)
        tie_term += static_cast<double>(t) * t * t - static_cast<double>(t);
    const double dn = static_cast<double>(n);
    const double var = products / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
    const double mean = products / 2.0;
    if (var <= 0.0) {
        res.p = 1.0;  // all values identical
        return res;
    }
    const double diff = res.u - mean;
    const double cc = diff > 0 ? -0.5 : (diff < 0 ? 0.5 : 0.0);
    const double z = (diff + cc) / std::sqrt(var);
    res.p = std::min(1.0, 2.0 * normal_cdf(-std::abs(z)));
    return res;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DomainError("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    const double w = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - w) + values[hi] * w;
}

Aggregate aggregate(const std::vector<double>& values) {
    if (values.empty()) throw DomainError("aggregate of empty sample");
    Aggregate agg;
    agg.n = values.size();
    agg.single_run = values.size() == 1;
    agg.mean = std::accumulate(values.begin(), values.end(), 0.0) /
               static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
        agg.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    agg.p5 = quantile(values, 0.05);
    agg.p50 = quantile(values, 0.50);
    agg.p95 = quantile(values, 0.95);
    return agg;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw DomainError("spearman needs two samples of equal size >= 2");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace taxsim
