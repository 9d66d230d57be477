#include <algorithm>
#include <numeric>

#include "ignite/evaluation.hpp"

namespace ignite {

namespace {

struct ClassCounts {
  double positives = 0.0;
  double negatives = 0.0;
};

ClassCounts check_inputs(const Vector& scores, const Vector& labels, const char* what) {
  if (scores.size() != labels.size()) throw ShapeError(std::string(what) + ": scores and labels differ in length");
  ClassCounts c;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == 1.0) {
      c.positives += 1.0;
    } else if (labels(i) == 0.0) {
      c.negatives += 1.0;
    } else {
      throw InvalidArgument(std::string(what) + ": labels must be 0 or 1");
    }
    if (!std::isfinite(scores(i))) throw InvalidArgument(std::string(what) + ": non-finite score");
  }
  if (c.positives == 0.0 || c.negatives == 0.0) {
    throw MetricError(std::string(what) + " is undefined when only one class is present");
  }
  return c;
}

std::vector<Index> order_by(const Vector& scores, bool descending) {
  std::vector<Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    return descending ? scores(a) > scores(b) : scores(a) < scores(b);
  });
  return idx;
}

}  // namespace

double auroc(const Vector& scores, const Vector& labels) {
  const ClassCounts c = check_inputs(scores, labels, "AUROC");
  const auto idx = order_by(scores, false);
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores(idx[j + 1]) == scores(idx[i])) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels(idx[k]) == 1.0) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double u = rank_sum - c.positives * (c.positives + 1.0) / 2.0;
  return u / (c.positives * c.negatives);
}

double auprc(const Vector& scores, const Vector& labels) {
  const ClassCounts c = check_inputs(scores, labels, "AUPRC");
  const auto idx = order_by(scores, true);
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores(idx[j + 1]) == scores(idx[i])) ++j;
    for (std::size_t k = i; k <= j; ++k) (labels(idx[k]) == 1.0 ? tp : fp) += 1.0;
    const double recall = tp / c.positives;
    const double precision = tp / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

}  // namespace ignite
