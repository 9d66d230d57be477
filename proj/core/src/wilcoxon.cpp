#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "ignite/evaluation.hpp"

namespace ignite {

double wilcoxon_exact_upper(const std::vector<int>& doubled_ranks, int doubled_statistic) {
  const int total = std::accumulate(doubled_ranks.begin(), doubled_ranks.end(), 0);
  // counts[s]: number of sign patterns whose positive ranks sum to s.
  std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
  counts[0] = 1.0;
  int reach = 0;
  for (int r : doubled_ranks) {
    if (r <= 0) throw InvalidArgument("wilcoxon: ranks must be positive");
    for (int s = reach; s >= 0; --s) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
    reach += r;
  }
  const double patterns = std::ldexp(1.0, static_cast<int>(doubled_ranks.size()));
  double upper = 0.0;
  for (int s = std::max(doubled_statistic, 0); s <= total; ++s) upper += counts[static_cast<std::size_t>(s)];
  return upper / patterns;
}

namespace {

double normal_upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b,
                                    Alternative alternative) {
  if (a.size() != b.size()) throw ShapeError("wilcoxon: samples must be paired");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (!std::isfinite(diff)) throw InvalidArgument("wilcoxon: non-finite difference");
    if (diff != 0.0) d.push_back(diff);
  }
  WilcoxonResult res;
  res.n = static_cast<int>(d.size());
  if (d.empty()) {
    spdlog::warn("wilcoxon: all differences are zero; p = 1");
    return res;
  }

  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  std::vector<int> doubled(d.size());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
    const int doubled_midrank = static_cast<int>(i + j + 2);  // 2 * ((i + 1) + (j + 1)) / 2
    for (std::size_t k = i; k <= j; ++k) doubled[idx[k]] = doubled_midrank;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  int w_plus2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0.0) w_plus2 += doubled[i];
  }
  const int total2 = std::accumulate(doubled.begin(), doubled.end(), 0);
  res.statistic = w_plus2 / 2.0;

  const double n = static_cast<double>(d.size());
  if (d.size() <= 25) {
    res.exact = true;
    const double greater = wilcoxon_exact_upper(doubled, w_plus2);
    // By symmetry P(W+ <= w) = P(W+ >= total - w).
    const double less = wilcoxon_exact_upper(doubled, total2 - w_plus2);
    switch (alternative) {
      case Alternative::Greater: res.p = greater; break;
      case Alternative::Less: res.p = less; break;
      case Alternative::TwoSided: res.p = std::min(1.0, 2.0 * std::min(greater, less)); break;
    }
  } else {
    res.exact = false;
    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    const double w = res.statistic;
    const double greater = normal_upper((w - mean - 0.5) / sd);
    const double less = 1.0 - normal_upper((w - mean + 0.5) / sd);
    switch (alternative) {
      case Alternative::Greater: res.p = greater; break;
      case Alternative::Less: res.p = less; break;
      case Alternative::TwoSided: res.p = std::min(1.0, 2.0 * std::min(greater, less)); break;
    }
  }
  res.p = std::clamp(res.p, std::numeric_limits<double>::min(), 1.0);
  return res;
}

}  // namespace ignite
