#include "ignite/model.hpp"

#include <cmath>

#include "ignite/missingness.hpp"

namespace ignite {

using ad::Tape;
using ad::Var;

// ---------------------------------------------------------------------------
// Config

void IgniteConfig::validate() const {
  if (latent_dim < 1) throw InvalidArgument("latent_dim must be >= 1");
  if (hidden_dim < 1) throw InvalidArgument("hidden_dim must be >= 1");
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (!(mit_mask_rate >= 0.0 && mit_mask_rate < 1.0)) throw InvalidArgument("mit_mask_rate must be in [0, 1)");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (!(grad_clip > 0.0)) throw InvalidArgument("grad_clip must be positive");
  const double w[] = {weights.reconstruction, weights.kl,  weights.matching,     weights.semantic,
                      weights.contrastive,    weights.mit, weights.discriminator};
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("loss weights must be finite and non-negative");
  }
}

nlohmann::json to_json(const IgniteConfig& c) {
  return {
      {"latent_dim", c.latent_dim},
      {"hidden_dim", c.hidden_dim},
      {"weights",
       {{"reconstruction", c.weights.reconstruction},
        {"kl", c.weights.kl},
        {"matching", c.weights.matching},
        {"semantic", c.weights.semantic},
        {"contrastive", c.weights.contrastive},
        {"mit", c.weights.mit},
        {"discriminator", c.weights.discriminator}}},
      {"temperature", c.temperature},
      {"mit_mask_rate", c.mit_mask_rate},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"grad_clip", c.grad_clip},
      {"sample_at_inference", c.sample_at_inference},
      {"components",
       {{"condition", c.components.condition},
        {"imm", c.components.imm},
        {"mit", c.components.mit},
        {"discriminator", c.components.discriminator}}},
  };
}

namespace {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument(where + "." + key + " has the wrong type");
  }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw InvalidArgument("unknown key '" + where + "." + it.key() + "'");
  }
}

}  // namespace

IgniteConfig ignite_config_from_json(const nlohmann::json& j, IgniteConfig c) {
  const std::string where = "model";
  reject_unknown(j,
                 {"latent_dim", "hidden_dim", "weights", "temperature", "mit_mask_rate", "learning_rate", "batch_size",
                  "epochs", "seed", "grad_clip", "sample_at_inference", "components"},
                 where);
  read_field(j, "latent_dim", c.latent_dim, where);
  read_field(j, "hidden_dim", c.hidden_dim, where);
  read_field(j, "temperature", c.temperature, where);
  read_field(j, "mit_mask_rate", c.mit_mask_rate, where);
  read_field(j, "learning_rate", c.learning_rate, where);
  read_field(j, "batch_size", c.batch_size, where);
  read_field(j, "epochs", c.epochs, where);
  read_field(j, "seed", c.seed, where);
  read_field(j, "grad_clip", c.grad_clip, where);
  read_field(j, "sample_at_inference", c.sample_at_inference, where);
  if (auto it = j.find("weights"); it != j.end()) {
    const std::string w = where + ".weights";
    reject_unknown(*it, {"reconstruction", "kl", "matching", "semantic", "contrastive", "mit", "discriminator"}, w);
    read_field(*it, "reconstruction", c.weights.reconstruction, w);
    read_field(*it, "kl", c.weights.kl, w);
    read_field(*it, "matching", c.weights.matching, w);
    read_field(*it, "semantic", c.weights.semantic, w);
    read_field(*it, "contrastive", c.weights.contrastive, w);
    read_field(*it, "mit", c.weights.mit, w);
    read_field(*it, "discriminator", c.weights.discriminator, w);
  }
  if (auto it = j.find("components"); it != j.end()) {
    const std::string w = where + ".components";
    reject_unknown(*it, {"condition", "imm", "mit", "discriminator"}, w);
    read_field(*it, "condition", c.components.condition, w);
    read_field(*it, "imm", c.components.imm, w);
    read_field(*it, "mit", c.components.mit, w);
    read_field(*it, "discriminator", c.components.discriminator, w);
  }
  c.validate();
  return c;
}

ModelShape shape_of(const Dataset& data) {
  return {data.steps(), data.features(), data.treatments(), data.demographic_dim()};
}

// ---------------------------------------------------------------------------
// Batches

Vector condition_vector(const PatientRecord& r) {
  const Index T = r.A.rows();
  const Index K = r.A.cols();
  Vector c(T * K + r.d.size());
  for (Index t = 0; t < T; ++t) {
    for (Index k = 0; k < K; ++k) c(t * K + k) = r.A(t, k);
  }
  c.tail(r.d.size()) = r.d;
  return c;
}

Matrix imm_augment(const Matrix& X, const Matrix& M, bool use_imm) {
  Matrix filled = impute_locf(X, M).X_hat;
  if (use_imm) filled.array() *= imm(M).array();
  return filled;
}

Batch make_batch(std::span<const PatientRecord* const> records, const Matrix& mit, bool use_condition,
                 bool use_imm) {
  if (records.empty()) throw InvalidArgument("make_batch: empty batch");
  const Index B = static_cast<Index>(records.size());
  const Index T = records.front()->steps();
  const Index F = records.front()->features();
  const Index C = use_condition ? records.front()->A.size() + records.front()->d.size() : 0;
  if (mit.size() != 0 && (mit.rows() != B || mit.cols() != T * F)) throw ShapeError("make_batch: MIT mask shape");

  Batch b;
  b.x = Matrix::Zero(B, T * F);
  b.m = Matrix::Zero(B, T * F);
  b.x_aug = Matrix::Zero(B, T * F);
  b.truth = Matrix::Zero(B, T * F);
  b.mit = mit.size() != 0 ? mit : Matrix::Zero(B, T * F);
  b.cond = Matrix::Zero(B, C);
  b.y = Matrix::Zero(B, 1);
  for (Index i = 0; i < B; ++i) {
    const PatientRecord& r = *records[static_cast<std::size_t>(i)];
    if (r.steps() != T || r.features() != F) throw ShapeError("make_batch: records differ in shape");
    Matrix x_in(T, F), m_in(T, F);
    for (Index t = 0; t < T; ++t) {
      for (Index f = 0; f < F; ++f) {
        const Index col = t * F + f;
        const bool observed = r.M(t, f) == 1.0;
        if (b.mit(i, col) != 0.0 && !observed) throw InvalidArgument("MIT mask must be a subset of the observed mask");
        const double value = observed ? r.X(t, f) : 0.0;
        b.truth(i, col) = value;
        const bool visible = observed && b.mit(i, col) == 0.0;
        m_in(t, f) = visible ? 1.0 : 0.0;
        x_in(t, f) = visible ? value : kMissing;
        b.m(i, col) = m_in(t, f);
        b.x(i, col) = visible ? value : 0.0;
      }
    }
    const Matrix aug = imm_augment(x_in, m_in, use_imm);
    for (Index t = 0; t < T; ++t) b.x_aug.block(i, t * F, 1, F) = aug.row(t);
    if (C > 0) {
      const Vector c = condition_vector(r);
      if (c.size() != C) throw ShapeError("make_batch: condition size differs");
      b.cond.row(i) = c.transpose();
    }
    b.y(i, 0) = r.y;
  }
  return b;
}

Matrix sample_mit_mask(const Matrix& observed, double rate, nn::Rng& rng) {
  Matrix out = Matrix::Zero(observed.rows(), observed.cols());
  if (rate <= 0.0) return out;
  std::bernoulli_distribution coin(rate);
  for (Index k = 0; k < observed.size(); ++k) {
    if (observed(k) == 1.0 && coin(rng)) out(k) = 1.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoder

FeatureAttentionEncoder::FeatureAttentionEncoder(nn::ParameterSet& params, const std::string& prefix,
                                                 const ModelShape& shape, Index cond_dim, Index hidden, Index latent,
                                                 nn::Rng& rng)
    : shape_(shape) {
  const Index T = shape.steps;
  const Index F = shape.features;
  score_ = &params.add(prefix + ".attn.score", nn::glorot(T, 1, rng));
  state_proj_ = &params.add(prefix + ".attn.state", nn::glorot(2 * hidden, T, rng));
  series_proj_ = &params.add(prefix + ".attn.series", nn::glorot(T, T, rng));
  lstm_ = nn::LstmCell(params, prefix + ".lstm", F, cond_dim, hidden, rng);
  mu_head_ = nn::Linear(params, prefix + ".mu", hidden, latent, rng);
  log_sigma_head_ = nn::Linear(params, prefix + ".log_sigma", hidden, latent, rng);
}

Var FeatureAttentionEncoder::series_projection(Tape& tape, const Matrix& x_in) const {
  const Index B = x_in.rows();
  const Index T = shape_.steps;
  const Index F = shape_.features;
  Matrix cols(B * F, T);
  for (Index b = 0; b < B; ++b) {
    for (Index t = 0; t < T; ++t) {
      for (Index k = 0; k < F; ++k) cols(b * F + k, t) = x_in(b, t * F + k);
    }
  }
  return ad::matmul(tape.constant(std::move(cols)), tape.param(*series_proj_));
}

Var FeatureAttentionEncoder::attention(Tape& tape, const Var& series_proj, const nn::LstmCell::State& prev,
                                       Index batch) const {
  const Index F = shape_.features;
  const Var state = ad::matmul(ad::concat_cols({prev.h, prev.s}), tape.param(*state_proj_));
  const Var pre = ad::tanh(ad::add(ad::repeat_rows(state, F), series_proj));
  const Var scores = ad::matmul(pre, tape.param(*score_));
  return ad::softmax_rows(ad::reshape_rows(scores, batch, F));
}

FeatureAttentionEncoder::Output FeatureAttentionEncoder::forward(Tape& tape, const Matrix& x_in, const Var* cond,
                                                                 AttentionTrace* trace) const {
  const Index B = x_in.rows();
  const Index T = shape_.steps;
  const Index F = shape_.features;
  if (x_in.cols() != T * F) throw ShapeError("encoder: input width differs from T * F");

  const Var proj = series_projection(tape, x_in);
  const Var gates = lstm_.static_gates(tape, cond, B);
  nn::LstmCell::State state = lstm_.zero_state(tape, B);
  std::vector<Var> hs;
  hs.reserve(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    const Var alpha = attention(tape, proj, state, B);
    if (trace) trace->feature.push_back(alpha.value());
    const Var weighted = ad::mul_const(alpha, x_in.middleCols(t * F, F));
    state = lstm_.step(tape, weighted, state, gates);
    hs.push_back(state.h);
  }
  Output out;
  out.mu = mu_head_(tape, state.h);
  out.log_sigma = log_sigma_head_(tape, state.h);
  out.hidden_seq = ad::stack_time(hs);
  return out;
}

// ---------------------------------------------------------------------------
// Decoder

TemporalAttentionDecoder::TemporalAttentionDecoder(nn::ParameterSet& params, const std::string& prefix,
                                                   const ModelShape& shape, Index cond_dim, Index enc_hidden,
                                                   Index hidden, Index latent, nn::Rng& rng)
    : shape_(shape) {
  score_ = &params.add(prefix + ".attn.score", nn::glorot(enc_hidden, 1, rng));
  state_proj_ = &params.add(prefix + ".attn.state", nn::glorot(2 * hidden, enc_hidden, rng));
  hidden_proj_ = &params.add(prefix + ".attn.hidden", nn::glorot(enc_hidden, enc_hidden, rng));
  init_ = nn::Linear(params, prefix + ".init", latent, 2 * hidden, rng);
  lstm_ = nn::LstmCell(params, prefix + ".lstm", enc_hidden, cond_dim, hidden, rng);
  out_ = nn::Linear(params, prefix + ".out", hidden + enc_hidden, shape.features, rng);
}

Var TemporalAttentionDecoder::hidden_projection(Tape& tape, const Var& hidden_seq) const {
  return ad::matmul(hidden_seq, tape.param(*hidden_proj_));
}

TemporalAttentionDecoder::Attention TemporalAttentionDecoder::attention(Tape& tape, const Var& hidden_seq,
                                                                        const Var& hidden_proj,
                                                                        const nn::LstmCell::State& prev) const {
  const Index T = shape_.steps;
  const Index B = prev.h.rows();
  const Var state = ad::matmul(ad::concat_cols({prev.h, prev.s}), tape.param(*state_proj_));
  const Var pre = ad::tanh(ad::add(ad::repeat_rows(state, T), hidden_proj));
  const Var scores = ad::matmul(pre, tape.param(*score_));
  Attention a;
  a.weights = ad::softmax_rows(ad::reshape_rows(scores, B, T));
  a.context = ad::segment_weighted_sum(a.weights, hidden_seq);
  return a;
}

Var TemporalAttentionDecoder::forward(Tape& tape, const Var& z, const Var& hidden_seq, const Var* cond,
                                      AttentionTrace* trace) const {
  const Index B = z.rows();
  const Index T = shape_.steps;
  const Index p = lstm_.hidden();
  const Var init = ad::tanh(init_(tape, z));
  nn::LstmCell::State state{ad::slice_cols(init, 0, p), ad::slice_cols(init, p, p)};
  const Var proj = hidden_projection(tape, hidden_seq);
  const Var gates = lstm_.static_gates(tape, cond, B);
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) {
    const Attention a = attention(tape, hidden_seq, proj, state);
    if (trace) trace->temporal.push_back(a.weights.value());
    state = lstm_.step(tape, a.context, state, gates);
    outs.push_back(out_(tape, ad::concat_cols({state.h, a.context})));
  }
  return ad::concat_cols(outs);
}

// ---------------------------------------------------------------------------
// Sequence classifier

SequenceClassifier::SequenceClassifier(nn::ParameterSet& params, const std::string& prefix, Index steps,
                                       Index features, Index hidden, nn::Rng& rng)
    : steps_(steps), features_(features) {
  lstm_ = nn::LstmCell(params, prefix + ".lstm", features, 0, hidden, rng);
  head_ = nn::Linear(params, prefix + ".head", hidden, 1, rng);
}

Var SequenceClassifier::forward(Tape& tape, const Var& seq, const Matrix* dropout_mask) const {
  const Index B = seq.rows();
  if (seq.cols() != steps_ * features_) throw ShapeError("sequence classifier: input width differs from T * F");
  const Var gates = lstm_.static_gates(tape, nullptr, B);
  nn::LstmCell::State state = lstm_.zero_state(tape, B);
  for (Index t = 0; t < steps_; ++t) {
    state = lstm_.step(tape, ad::slice_cols(seq, t * features_, features_), state, gates);
  }
  Var h = state.h;
  if (dropout_mask) h = ad::mul_const(h, *dropout_mask);
  return head_(tape, h);
}

// ---------------------------------------------------------------------------
// Model

IgniteModel::IgniteModel(const IgniteConfig& config, const ModelShape& shape) : config_(config), shape_(shape) {
  config_.validate();
  if (shape.steps < 1 || shape.features < 1) throw InvalidArgument("model shape needs T >= 1 and F >= 1");
  build();
}

void IgniteModel::build() {
  nn::Rng rng(config_.seed);
  const Index C = condition_dim();
  const Index m = config_.hidden_dim;
  const Index L = config_.latent_dim;
  enc_oo_ = FeatureAttentionEncoder(generator_, "oo.encoder", shape_, C, m, L, rng);
  dec_oo_ = TemporalAttentionDecoder(generator_, "oo.decoder", shape_, C, m, m, L, rng);
  enc_imm_ = FeatureAttentionEncoder(generator_, "imm.encoder", shape_, C, m, L, rng);
  dec_imm_ = TemporalAttentionDecoder(generator_, "imm.decoder", shape_, C, m, m, L, rng);
  classifier_ = nn::Linear(generator_, "semantic", 2 * L, 1, rng);
  disc_ = SequenceClassifier(discriminator_, "discriminator", shape_.steps, shape_.features, m, rng);
}

IgniteModel IgniteModel::clone() const {
  IgniteModel copy(config_, shape_);
  copy.generator_.restore(generator_.snapshot());
  copy.discriminator_.restore(discriminator_.snapshot());
  copy.normalization = normalization;
  copy.feature_names = feature_names;
  return copy;
}

LossParts IgniteModel::compute_losses(Tape& tape, const Batch& batch, const Noise& noise,
                                      AttentionTrace* trace) const {
  const Index B = batch.size();
  const Index L = config_.latent_dim;
  if (noise.oo.rows() != B || noise.oo.cols() != L || noise.imm.rows() != B || noise.imm.cols() != L) {
    throw ShapeError("compute_losses: noise must be B x latent_dim");
  }
  const Index C = condition_dim();
  if (batch.cond.cols() != C) throw ShapeError("compute_losses: condition width differs from model");
  Var cond;
  if (C > 0) cond = tape.constant(batch.cond);
  const Var* cond_ptr = C > 0 ? &cond : nullptr;

  const auto enc_oo = enc_oo_.forward(tape, batch.x, cond_ptr, trace);
  const Var z_oo = reparameterize(enc_oo.mu, enc_oo.log_sigma, noise.oo);
  const auto enc_imm = enc_imm_.forward(tape, batch.x_aug, cond_ptr, nullptr);
  const Var z_imm = reparameterize(enc_imm.mu, enc_imm.log_sigma, noise.imm);
  const Var recon_oo = dec_oo_.forward(tape, z_oo, enc_oo.hidden_seq, cond_ptr, trace);
  const Var recon_imm = dec_imm_.forward(tape, z_imm, enc_imm.hidden_seq, cond_ptr, nullptr);

  LossParts parts;
  parts.recon_oo = recon_oo;
  parts.reconstruction_oo = reconstruction_observed(recon_oo, batch.x, batch.m);
  parts.reconstruction_imm = reconstruction_full(recon_imm, batch.x_aug);
  parts.kl_oo = kl_divergence(enc_oo.mu, enc_oo.log_sigma);
  parts.kl_imm = kl_divergence(enc_imm.mu, enc_imm.log_sigma);
  parts.matching = matching_loss(z_oo, z_imm);
  parts.semantic = ad::bce_with_logits(classifier_(tape, ad::concat_cols({z_oo, z_imm})), batch.y);
  if (B >= 2) parts.contrastive = contrastive_loss(z_oo, z_imm, config_.temperature);
  if (config_.components.mit && batch.mit.sum() > 0.0) parts.mit = mit_loss(recon_oo, batch.truth, batch.mit);
  if (config_.components.discriminator) {
    const Matrix keep = batch.m.array() * batch.x.array();
    const Var imputed = ad::add_const(ad::mul_const(recon_oo, (1.0 - batch.m.array()).matrix()), keep);
    parts.adversarial = ad::bce_with_logits(discriminator_logits(tape, imputed), Matrix::Ones(B, 1));
  }
  LossWeights w = config_.weights;
  if (!config_.components.mit) w.mit = 0.0;
  if (!config_.components.discriminator) w.discriminator = 0.0;
  parts.total = total_loss(tape, parts, w);
  return parts;
}

Var IgniteModel::discriminator_logits(Tape& tape, const Var& seq) const { return disc_.forward(tape, seq); }

Var IgniteModel::discriminator_loss(Tape& tape, const Matrix& real, const Matrix& imputed) const {
  const Var l_real = ad::bce_with_logits(disc_.forward(tape, tape.constant(real)), Matrix::Ones(real.rows(), 1));
  const Var l_fake =
      ad::bce_with_logits(disc_.forward(tape, tape.constant(imputed)), Matrix::Zero(imputed.rows(), 1));
  return ad::scale(ad::add(l_real, l_fake), 0.5);
}

Matrix IgniteModel::encode_mean(const Batch& batch) const {
  Tape tape;
  Var cond;
  if (condition_dim() > 0) cond = tape.constant(batch.cond);
  return enc_oo_.forward(tape, batch.x, condition_dim() > 0 ? &cond : nullptr, nullptr).mu.value();
}

std::vector<ImputationResult> IgniteModel::impute(std::span<const PatientRecord> records, nn::Rng* sampler,
                                                  AttentionTrace* trace) const {
  std::vector<ImputationResult> out;
  out.reserve(records.size());
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, config_.batch_size)) * 4;
  const Index T = shape_.steps;
  const Index F = shape_.features;
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    const std::size_t end = std::min(records.size(), start + chunk);
    std::vector<const PatientRecord*> ptrs;
    for (std::size_t i = start; i < end; ++i) {
      if (records[i].steps() != T || records[i].features() != F) {
        throw ShapeError("impute: record shape differs from the trained model");
      }
      ptrs.push_back(&records[i]);
    }
    const Batch batch = make_batch(ptrs, Matrix(), condition_dim() > 0, config_.components.imm);
    Tape tape;
    Var cond;
    if (condition_dim() > 0) cond = tape.constant(batch.cond);
    const Var* cond_ptr = condition_dim() > 0 ? &cond : nullptr;
    const auto enc = enc_oo_.forward(tape, batch.x, cond_ptr, trace);
    Var z = enc.mu;
    if (config_.sample_at_inference && sampler) {
      std::normal_distribution<double> normal;
      Matrix eps(enc.mu.rows(), enc.mu.cols());
      for (Index k = 0; k < eps.size(); ++k) eps(k) = normal(*sampler);
      z = reparameterize(enc.mu, enc.log_sigma, eps);
    }
    const Matrix recon = dec_oo_.forward(tape, z, enc.hidden_seq, cond_ptr, trace).value();
    for (std::size_t i = start; i < end; ++i) {
      const PatientRecord& r = records[i];
      ImputationResult res{Matrix(T, F), r.M};
      const Index row = static_cast<Index>(i - start);
      for (Index t = 0; t < T; ++t) {
        for (Index f = 0; f < F; ++f) res.X_hat(t, f) = r.M(t, f) == 1.0 ? r.X(t, f) : recon(row, t * F + f);
      }
      out.push_back(std::move(res));
    }
  }
  return out;
}

ImputationResult impute_ignite(const IgniteModel& model, const PatientRecord& record) {
  return std::move(model.impute(std::span<const PatientRecord>(&record, 1)).front());
}

IgniteImputer::IgniteImputer(IgniteModel model) : config_(model.config()), model_(std::move(model)) {}

void IgniteImputer::fit(const Dataset& train_set) {
  model_.reset();
  model_.emplace(train_ignite(train_set, config_, &history_));
}

std::vector<ImputationResult> IgniteImputer::impute(std::span<const PatientRecord> records) const {
  return model().impute(records);
}

const IgniteModel& IgniteImputer::model() const {
  if (!model_) throw InvalidArgument("ignite imputer used before fit()");
  return *model_;
}

}  // namespace ignite
