#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace taxsim {

// US dollars. Full double precision inside computations; ledger postings are
// rounded to cents (half-up) exactly once, at the posting boundary.
using Money = double;

inline Money round_cents(Money x) {
    return std::floor(x * 100.0 + 0.5) / 100.0;
}

inline std::string format_money(Money x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", x);
    return buf;
}

// Cent-level comparison tolerance used by ledger invariants.
inline constexpr double kCentTol = 0.01;

}  // namespace taxsim
