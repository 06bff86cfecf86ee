#pragma once

#include <vector>

namespace nccr {

double normal_cdf(double z);

// One-sided Mann-Whitney U test of H1 "a tends to exceed b", tie-corrected
// normal approximation with continuity correction. Returns the p-value; the
// degenerate all-tied case returns 1 (no evidence either way). Throws on an
// empty side.
double mann_whitney_greater(const std::vector<double>& a, const std::vector<double>& b);

// The U statistic for sample `a` (midrank form), exposed for cross-checking
// against pairwise counting.
double mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace nccr
