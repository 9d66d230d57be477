#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "ignite/evaluation.hpp"

namespace ignite {

ImputedSet make_imputed_set(const std::vector<ImputationResult>& imputed, std::span<const PatientRecord> records) {
  if (imputed.size() != records.size()) throw ShapeError("make_imputed_set: imputation count differs from records");
  ImputedSet set;
  if (records.empty()) return set;
  set.steps = records.front().steps();
  set.features = records.front().features();
  set.X.resize(static_cast<Index>(records.size()), set.steps * set.features);
  set.y.resize(static_cast<Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Matrix& x = imputed[i].X_hat;
    if (x.rows() != set.steps || x.cols() != set.features) throw ShapeError("make_imputed_set: shape mismatch");
    if (!x.allFinite()) throw InvalidArgument("make_imputed_set: imputation left non-finite values");
    for (Index t = 0; t < set.steps; ++t) set.X.block(static_cast<Index>(i), t * set.features, 1, set.features) = x.row(t);
    set.y(static_cast<Index>(i)) = records[i].y;
    set.record_ids.push_back(records[i].record_id);
  }
  return set;
}

DownstreamClassifier::DownstreamClassifier(Index steps, Index features, int hidden, std::uint64_t seed) {
  nn::Rng rng(seed);
  net_ = SequenceClassifier(params_, "downstream", steps, features, hidden, rng);
}

Vector DownstreamClassifier::predict(const Matrix& X) const {
  Vector out(X.rows());
  const Index chunk = 512;
  for (Index start = 0; start < X.rows(); start += chunk) {
    const Index n = std::min(chunk, X.rows() - start);
    ad::Tape tape;
    const Matrix logits = net_.forward(tape, tape.constant(X.middleRows(start, n))).value();
    out.segment(start, n) = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  }
  return out;
}

namespace {

struct Fold {
  Matrix X_train, X_valid;
  Matrix y_train, y_valid;
};

Fold make_fold(const ImputedSet& data, double validation_fraction, std::uint64_t seed) {
  const Split split = train_test_split(data.size(), 1.0 - validation_fraction, seed);
  if (split.train.empty() || split.test.empty()) throw InvalidArgument("downstream: training set too small for a validation fold");
  Fold f;
  auto gather = [&](const std::vector<std::size_t>& idx, Matrix& X, Matrix& y) {
    X.resize(static_cast<Index>(idx.size()), data.X.cols());
    y.resize(static_cast<Index>(idx.size()), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      X.row(static_cast<Index>(i)) = data.X.row(static_cast<Index>(idx[i]));
      y(static_cast<Index>(i), 0) = data.y(static_cast<Index>(idx[i]));
    }
  };
  gather(split.train, f.X_train, f.y_train);
  gather(split.test, f.X_valid, f.y_valid);
  return f;
}

double bce_loss(const SequenceClassifier& net, const Matrix& X, const Matrix& y) {
  ad::Tape tape;
  return ad::bce_with_logits(net.forward(tape, tape.constant(X)), y).scalar();
}

void check_labels(const ImputedSet& data) {
  if (data.size() == 0) throw InvalidArgument("downstream: empty training set");
  const double pos = data.y.sum();
  if (pos == 0.0 || pos == static_cast<double>(data.size())) {
    throw InvalidArgument("downstream: training labels contain a single class");
  }
}

}  // namespace

DownstreamClassifier fit_downstream(const ImputedSet& train, const DownstreamHyper& hyper,
                                    const DownstreamOptions& options, std::uint64_t seed) {
  check_labels(train);
  if (!(hyper.dropout >= 0.0 && hyper.dropout < 1.0)) throw InvalidArgument("downstream: dropout must be in [0, 1)");
  if (hyper.batch_size < 1 || !(hyper.learning_rate > 0.0)) throw InvalidArgument("downstream: invalid hyperparameters");
  const Fold fold = make_fold(train, options.validation_fraction, seed);
  DownstreamClassifier clf(train.steps, train.features, options.hidden, seed);
  nn::Adam opt(clf.parameters(), hyper.learning_rate);
  nn::Rng rng(seed ^ 0xD0D0D0D0ULL);
  std::bernoulli_distribution keep(1.0 - hyper.dropout);

  const Index n = fold.X_train.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  auto best_params = clf.parameters().snapshot();
  int since_best = 0;
  int epoch = 0;
  for (; epoch < options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += hyper.batch_size) {
      const Index b = std::min<Index>(hyper.batch_size, n - start);
      Matrix xb(b, fold.X_train.cols()), yb(b, 1);
      for (Index i = 0; i < b; ++i) {
        xb.row(i) = fold.X_train.row(order[static_cast<std::size_t>(start + i)]);
        yb(i, 0) = fold.y_train(order[static_cast<std::size_t>(start + i)], 0);
      }
      Matrix drop(b, options.hidden);
      for (Index k = 0; k < drop.size(); ++k) drop(k) = keep(rng) ? 1.0 / (1.0 - hyper.dropout) : 0.0;
      ad::Tape tape;
      const ad::Var loss = ad::bce_with_logits(clf.network().forward(tape, tape.constant(xb), &drop), yb);
      clf.parameters().zero_grad();
      tape.backward(loss);
      clf.parameters().clip_grad_norm(5.0);
      opt.step();
    }
    const double v = bce_loss(clf.network(), fold.X_valid, fold.y_valid);
    if (!std::isfinite(v)) break;
    if (v < best - 1e-9) {
      best = v;
      best_params = clf.parameters().snapshot();
      since_best = 0;
    } else if (++since_best >= options.patience) {
      ++epoch;
      break;
    }
  }
  clf.parameters().restore(best_params);
  clf.epochs_trained = epoch;
  clf.best_validation_loss = best;
  return clf;
}

DownstreamHyper search_downstream_hyper(const ImputedSet& train, const DownstreamOptions& options,
                                        std::uint64_t seed) {
  check_labels(train);
  nn::Rng rng(seed);
  const auto& r = options.ranges;
  std::uniform_real_distribution<double> dropout(r.dropout.first, r.dropout.second);
  std::uniform_real_distribution<double> log_lr(std::log(r.learning_rate.first), std::log(r.learning_rate.second));
  std::uniform_real_distribution<double> log_batch(std::log(static_cast<double>(r.batch_size.first)),
                                                   std::log(static_cast<double>(r.batch_size.second)));
  DownstreamHyper best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < std::max(options.search_trials, 1); ++trial) {
    DownstreamHyper h;
    h.dropout = dropout(rng);
    h.learning_rate = std::exp(log_lr(rng));
    h.batch_size = static_cast<int>(std::lround(std::exp(log_batch(rng))));
    const DownstreamClassifier clf = fit_downstream(train, h, options, seed + 1);
    spdlog::debug("downstream search trial {}: dropout {:.2f} lr {:.2e} batch {} -> val loss {:.4f}", trial,
                  h.dropout, h.learning_rate, h.batch_size, clf.best_validation_loss);
    if (clf.best_validation_loss < best_loss) {
      best_loss = clf.best_validation_loss;
      best = h;
    }
  }
  return best;
}

std::vector<DownstreamClassifier> train_downstream(const ImputedSet& train, const std::vector<std::uint64_t>& seeds,
                                                   const DownstreamOptions& options, DownstreamHyper* chosen) {
  check_labels(train);
  if (seeds.empty()) throw InvalidArgument("downstream: at least one seed is required");
  const DownstreamHyper hyper =
      options.search_trials > 0 ? search_downstream_hyper(train, options, seeds.front()) : DownstreamHyper{};
  if (chosen) *chosen = hyper;
  std::vector<DownstreamClassifier> out;
  out.reserve(seeds.size());
  for (std::uint64_t s : seeds) out.push_back(fit_downstream(train, hyper, options, s));
  return out;
}

}  // namespace ignite
