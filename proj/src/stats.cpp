#include "nccr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nccr {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace {

struct RankedU {
  double u_a = 0.0;       // U statistic for sample a
  double tie_term = 0.0;  // sum over tie groups of (t^3 - t)
};

RankedU ranked_u(const std::vector<double>& a, const std::vector<double>& b) {
  struct Entry {
    double value;
    bool from_a;
  };
  std::vector<Entry> all;
  all.reserve(a.size() + b.size());
  for (double v : a) all.push_back({v, true});
  for (double v : b) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Entry& x, const Entry& y) { return x.value < y.value; });

  RankedU out;
  double rank_sum_a = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    // midrank for the tie group occupying 1-based ranks [i+1, j]
    const double midrank = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].from_a) rank_sum_a += midrank;
    }
    const double t = static_cast<double>(j - i);
    out.tie_term += t * t * t - t;
    i = j;
  }
  const double na = static_cast<double>(a.size());
  out.u_a = rank_sum_a - na * (na + 1.0) / 2.0;
  return out;
}

}  // namespace

double mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mann-whitney: empty sample");
  return ranked_u(a, b).u_a;
}

double mann_whitney_greater(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mann-whitney: empty sample");

  const RankedU r = ranked_u(a, b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double n = na + nb;

  const double mean = na * nb / 2.0;
  const double var = na * nb / 12.0 * ((n + 1.0) - r.tie_term / (n * (n - 1.0)));
  if (var <= 0.0) return 1.0;  // every value tied: no evidence of a shift

  const double z = (r.u_a - 0.5 - mean) / std::sqrt(var);  // continuity corrected
  return 1.0 - normal_cdf(z);
}

}  // namespace nccr
