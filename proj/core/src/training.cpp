#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "ignite/missingness.hpp"
#include "ignite/model.hpp"

namespace ignite {

namespace {

Matrix observed_flat(std::span<const PatientRecord* const> records, Index T, Index F) {
  Matrix m(static_cast<Index>(records.size()), T * F);
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (Index t = 0; t < T; ++t) m.block(static_cast<Index>(i), t * F, 1, F) = records[i]->M.row(t);
  }
  return m;
}

Matrix normal_matrix(Index rows, Index cols, nn::Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix out(rows, cols);
  for (Index k = 0; k < out.size(); ++k) out(k) = normal(rng);
  return out;
}

}  // namespace

TrainHistory train(IgniteModel& model, const Dataset& train_set, const EpochCallback& on_epoch) {
  const IgniteConfig& cfg = model.config();
  if (train_set.size() == 0) throw InvalidArgument("training set is empty");
  if (!(shape_of(train_set) == model.shape())) throw ShapeError("training data shape differs from the model");
  if (!train_set.normalization) spdlog::warn("training on data without normalisation statistics");

  const Index T = model.shape().steps;
  const Index F = model.shape().features;
  const Index L = cfg.latent_dim;
  nn::Rng rng(cfg.seed ^ 0xA5A5A5A55A5A5A5AULL);
  nn::Adam gen_opt(model.generator(), cfg.learning_rate);
  nn::Adam disc_opt(model.discriminator(), cfg.learning_rate);
  const bool use_condition = model.condition_dim() > 0;
  const bool use_mit = cfg.components.mit && cfg.mit_mask_rate > 0.0;
  const bool use_disc = cfg.components.discriminator;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);
  if (train_set.size() % batch_size == 1) {
    spdlog::warn("last mini-batch holds a single patient; its contrastive term is skipped");
  }

  TrainHistory history;
  const auto started = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto gen_snapshot = model.generator().snapshot();
    const auto disc_snapshot = model.discriminator().snapshot();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, disc_sum = 0.0;
    std::size_t batches = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        std::vector<const PatientRecord*> ptrs;
        ptrs.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) ptrs.push_back(&train_set.records[order[i]]);
        const Index B = static_cast<Index>(ptrs.size());

        Matrix mit;
        if (use_mit) mit = sample_mit_mask(observed_flat(ptrs, T, F), cfg.mit_mask_rate, rng);
        const Batch batch = make_batch(ptrs, mit, use_condition, cfg.components.imm);
        const Noise noise{normal_matrix(B, L, rng), normal_matrix(B, L, rng)};

        ad::Tape tape;
        const LossParts parts = model.compute_losses(tape, batch, noise);
        if (!std::isfinite(parts.total.scalar())) throw TrainingError("non-finite total loss");
        model.generator().zero_grad();
        model.discriminator().zero_grad();
        tape.backward(parts.total);
        if (!std::isfinite(model.generator().grad_norm())) throw TrainingError("non-finite generator gradient");
        model.generator().clip_grad_norm(cfg.grad_clip);
        gen_opt.step();
        loss_sum += parts.total.scalar();

        if (use_disc) {
          const Matrix recon = parts.recon_oo.value();
          const Matrix imputed = (batch.m.array() * batch.x.array() + (1.0 - batch.m.array()) * recon.array()).matrix();
          ad::Tape dtape;
          const ad::Var d_loss = model.discriminator_loss(dtape, batch.x, imputed);
          if (!std::isfinite(d_loss.scalar())) throw TrainingError("non-finite discriminator loss");
          model.discriminator().zero_grad();
          dtape.backward(d_loss);
          if (!std::isfinite(model.discriminator().grad_norm())) {
            throw TrainingError("non-finite discriminator gradient");
          }
          model.discriminator().clip_grad_norm(cfg.grad_clip);
          disc_opt.step();
          disc_sum += d_loss.scalar();
        }
        ++batches;
        ++history.steps;
      }
      if (!model.generator().all_finite() || !model.discriminator().all_finite()) {
        throw TrainingError("non-finite parameters");
      }
    } catch (const TrainingError& e) {
      model.generator().restore(gen_snapshot);
      model.discriminator().restore(disc_snapshot);
      spdlog::error("training diverged in epoch {}: {}; restored last good parameters", epoch, e.what());
      throw TrainingError(std::string("training diverged in epoch ") + std::to_string(epoch) + ": " + e.what());
    }
    const double mean_loss = loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1));
    history.epoch_loss.push_back(mean_loss);
    history.epoch_discriminator.push_back(disc_sum / static_cast<double>(std::max<std::size_t>(batches, 1)));
    spdlog::debug("epoch {} loss {:.5f} d_loss {:.5f}", epoch, mean_loss, history.epoch_discriminator.back());
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  spdlog::info("ignite training: {} epochs, {} steps, {:.1f}s", cfg.epochs, history.steps, seconds);
  return history;
}

IgniteModel train_ignite(const Dataset& train_set, const IgniteConfig& config, TrainHistory* history) {
  IgniteModel model(config, shape_of(train_set));
  model.normalization = train_set.normalization;
  model.feature_names = train_set.feature_names;
  TrainHistory h = train(model, train_set);
  if (history) *history = std::move(h);
  return model;
}

double validation_error(const IgniteModel& model, const Dataset& validation, double mask_rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PatientRecord> masked;
  std::vector<Matrix> hidden;
  masked.reserve(validation.size());
  for (const auto& r : validation.records) {
    Matrix h;
    masked.push_back(hide_observed(r, mask_rate, rng, &h));
    hidden.push_back(std::move(h));
  }
  const auto imputed = model.impute(masked);
  double sq = 0.0, count = 0.0;
  for (std::size_t i = 0; i < masked.size(); ++i) {
    for (Index k = 0; k < hidden[i].size(); ++k) {
      if (hidden[i](k) == 0.0) continue;
      const double d = imputed[i].X_hat(k) - validation.records[i].X(k);
      sq += d * d;
      count += 1.0;
    }
  }
  if (count == 0.0) throw InvalidArgument("validation set has no observed entries to mask");
  return sq / count;
}

LossWeights sample_weights(const SearchRanges& r, nn::Rng& rng) {
  auto draw = [&rng](std::pair<double, double> range) {
    if (!(range.first > 0.0 && range.second >= range.first)) throw InvalidArgument("invalid search range");
    std::uniform_real_distribution<double> u(std::log(range.first), std::log(range.second));
    return std::exp(u(rng));
  };
  LossWeights w;
  w.reconstruction = draw(r.reconstruction);
  w.kl = draw(r.kl);
  w.matching = draw(r.matching);
  w.semantic = draw(r.semantic);
  w.contrastive = draw(r.contrastive);
  w.mit = draw(r.mit);
  w.discriminator = draw(r.discriminator);
  return w;
}

SearchResult random_search(const Dataset& data, const SearchRanges& ranges, int n_trials, std::uint64_t seed,
                           const IgniteConfig& base) {
  if (n_trials < 1) throw InvalidArgument("random search needs at least one trial");
  const Split split = train_test_split(data.size(), 0.8, seed);
  const Dataset train_part = subset(data, split.train);
  const Dataset valid_part = subset(data, split.test);
  if (train_part.size() == 0 || valid_part.size() == 0) throw InvalidArgument("random search: dataset too small");

  nn::Rng rng(seed);
  SearchResult result;
  double best = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < n_trials; ++trial) {
    SearchTrial t;
    t.config = base;
    t.config.weights = sample_weights(ranges, rng);
    try {
      const IgniteModel model = train_ignite(train_part, t.config);
      t.validation_error = validation_error(model, valid_part, 0.1, seed + 1);
    } catch (const TrainingError& e) {
      spdlog::warn("search trial {} diverged: {}", trial, e.what());
      t.validation_error = std::numeric_limits<double>::infinity();
    }
    spdlog::info("search trial {}: validation error {:.6f}", trial, t.validation_error);
    if (t.validation_error < best || result.trials.empty()) {
      best = t.validation_error;
      result.best = t.config;
    }
    result.trials.push_back(t);
  }
  return result;
}

}  // namespace ignite
