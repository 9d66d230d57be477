#pragma once

// IGNITE generative imputer.
//
// Two conditional VAEs share the same architecture: an LSTM encoder whose
// inputs are re-weighted by a feature-attention network, and an LSTM decoder
// that attends over the encoder's hidden states. The "observed-only" (OO)
// branch reads zero-filled data and is scored on observed entries; the IMM
// branch reads LOCF-completed data multiplied by the individualized
// missingness mask and is scored on every entry. Latent losses tie the two
// branches together, a masked-imputation loss scores artificially hidden
// values, and a sequence discriminator provides an adversarial signal.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ignite/autodiff.hpp"
#include "ignite/baselines.hpp"
#include "ignite/ingest.hpp"
#include "ignite/nn.hpp"

namespace ignite {

// ---------------------------------------------------------------------------
// Configuration

struct LossWeights {
  double reconstruction = 1.0;    // both branches
  double kl = 1e-3;
  double matching = 0.1;          // latent agreement between branches
  double semantic = 0.1;          // outcome head on the latent
  double contrastive = 0.1;
  double mit = 1.0;               // held-out observed entries
  double discriminator = 1e-3;    // adversarial term in the generator loss
};

// Components that can be switched off for ablation runs.
struct Components {
  bool condition = true;
  bool imm = true;
  bool mit = true;
  bool discriminator = true;
};

struct IgniteConfig {
  int latent_dim = 8;
  int hidden_dim = 32;
  LossWeights weights;
  double temperature = 0.5;
  double mit_mask_rate = 0.1;
  double learning_rate = 2e-3;
  int batch_size = 64;
  int epochs = 60;
  std::uint64_t seed = 0;
  double grad_clip = 5.0;
  bool sample_at_inference = false;
  Components components;

  // Throws InvalidArgument on any out-of-range field.
  void validate() const;
};

nlohmann::json to_json(const IgniteConfig& config);
// Rejects unknown keys; missing keys keep their defaults.
IgniteConfig ignite_config_from_json(const nlohmann::json& j, IgniteConfig base = {});

struct ModelShape {
  Index steps = 0;
  Index features = 0;
  Index treatments = 0;
  Index demographics = 0;

  Index condition_dim() const { return steps * treatments + demographics; }
  bool operator==(const ModelShape&) const = default;
};

ModelShape shape_of(const Dataset& data);

// ---------------------------------------------------------------------------
// Batches (one row per patient, column t * F + f)

struct Batch {
  Matrix x;      // model input of the OO branch: zero-filled, MIT entries zeroed
  Matrix m;      // mask seen by the model (observed minus MIT-hidden)
  Matrix x_aug;  // IMM branch input: LOCF(x, m) * IMM(m)
  Matrix truth;  // zero-filled observed values before MIT hiding
  Matrix mit;    // 1 where an observed value was hidden for the MIT loss
  Matrix cond;   // flattened treatments ++ demographics (B x C)
  Matrix y;      // outcomes (B x 1)

  Index size() const { return x.rows(); }
};

// Condition vector of one record: A flattened row-major (t * K + k) followed
// by the demographic one-hot.
Vector condition_vector(const PatientRecord& record);

// IMM-branch input for one record.
Matrix imm_augment(const Matrix& X, const Matrix& M, bool use_imm = true);

// `mit` (B x TF) may be empty for no artificial masking; it must be a subset
// of the observed entries.
Batch make_batch(std::span<const PatientRecord* const> records, const Matrix& mit, bool use_condition,
                 bool use_imm);

// Bernoulli(rate) over the observed entries of a B x TF mask.
Matrix sample_mit_mask(const Matrix& observed, double rate, nn::Rng& rng);

// ---------------------------------------------------------------------------
// Network components

// Records every attention distribution produced during a forward pass.
struct AttentionTrace {
  std::vector<Matrix> feature;   // B x F per encoder step
  std::vector<Matrix> temporal;  // B x T per decoder step
};

class FeatureAttentionEncoder {
 public:
  struct Output {
    ad::Var mu;
    ad::Var log_sigma;
    ad::Var hidden_seq;  // (B * T) x m, row b * T + t
  };

  FeatureAttentionEncoder() = default;
  FeatureAttentionEncoder(nn::ParameterSet& params, const std::string& prefix, const ModelShape& shape,
                          Index cond_dim, Index hidden, Index latent, nn::Rng& rng);

  // Projection of every feature series for every patient, (B * F) x T.
  ad::Var series_projection(ad::Tape& tape, const Matrix& x_in) const;
  // Attention weights over features given the previous LSTM state.
  ad::Var attention(ad::Tape& tape, const ad::Var& series_proj, const nn::LstmCell::State& prev,
                    Index batch) const;
  Output forward(ad::Tape& tape, const Matrix& x_in, const ad::Var* cond, AttentionTrace* trace) const;

  // Attention parameters: score vector (T x 1), state projection (2m x T),
  // series projection (T x T).
  ad::Parameter& score() const { return *score_; }
  ad::Parameter& state_proj() const { return *state_proj_; }
  ad::Parameter& series_proj() const { return *series_proj_; }

 private:
  ModelShape shape_;
  ad::Parameter* score_ = nullptr;
  ad::Parameter* state_proj_ = nullptr;
  ad::Parameter* series_proj_ = nullptr;
  nn::LstmCell lstm_;
  nn::Linear mu_head_;
  nn::Linear log_sigma_head_;
};

class TemporalAttentionDecoder {
 public:
  TemporalAttentionDecoder() = default;
  TemporalAttentionDecoder(nn::ParameterSet& params, const std::string& prefix, const ModelShape& shape,
                           Index cond_dim, Index enc_hidden, Index hidden, Index latent, nn::Rng& rng);

  // Weights over the T encoder states and the resulting context vector.
  struct Attention {
    ad::Var weights;  // B x T
    ad::Var context;  // B x m
  };
  Attention attention(ad::Tape& tape, const ad::Var& hidden_seq, const ad::Var& hidden_proj,
                      const nn::LstmCell::State& prev) const;
  ad::Var hidden_projection(ad::Tape& tape, const ad::Var& hidden_seq) const;

  // Complete reconstruction, B x (T * F).
  ad::Var forward(ad::Tape& tape, const ad::Var& z, const ad::Var& hidden_seq, const ad::Var* cond,
                  AttentionTrace* trace) const;

  ad::Parameter& score() const { return *score_; }
  ad::Parameter& state_proj() const { return *state_proj_; }
  ad::Parameter& hidden_proj() const { return *hidden_proj_; }

 private:
  ModelShape shape_;
  ad::Parameter* score_ = nullptr;        // m x 1
  ad::Parameter* state_proj_ = nullptr;   // 2p x m
  ad::Parameter* hidden_proj_ = nullptr;  // m x m
  nn::Linear init_;
  nn::LstmCell lstm_;
  nn::Linear out_;
};

// LSTM over a whole sequence followed by a linear head on the last hidden
// state; returns logits (B x 1). Used for the discriminator and for the
// downstream mortality classifier.
class SequenceClassifier {
 public:
  SequenceClassifier() = default;
  SequenceClassifier(nn::ParameterSet& params, const std::string& prefix, Index steps, Index features,
                     Index hidden, nn::Rng& rng);

  ad::Var forward(ad::Tape& tape, const ad::Var& seq, const Matrix* dropout_mask = nullptr) const;
  Index hidden() const { return lstm_.hidden(); }

 private:
  Index steps_ = 0;
  Index features_ = 0;
  nn::LstmCell lstm_;
  nn::Linear head_;
};

// ---------------------------------------------------------------------------
// Losses (tape level)

ad::Var reconstruction_observed(const ad::Var& recon, const Matrix& x, const Matrix& mask);
ad::Var reconstruction_full(const ad::Var& recon, const Matrix& target);
// Closed-form KL(N(mu, sigma^2) || N(0, I)), summed over latent dimensions and
// averaged over the batch.
ad::Var kl_divergence(const ad::Var& mu, const ad::Var& log_sigma);
ad::Var matching_loss(const ad::Var& z_oo, const ad::Var& z_imm);
// NT-Xent over the 2B pool of both branches' latents with cosine similarity;
// both anchor directions are summed and averaged over patients.
ad::Var contrastive_loss(const ad::Var& z_oo, const ad::Var& z_imm, double temperature);
ad::Var mit_loss(const ad::Var& recon, const Matrix& truth, const Matrix& mit_mask);

// z = mu + exp(log_sigma) * eps with eps standard normal (B x L).
ad::Var reparameterize(const ad::Var& mu, const ad::Var& log_sigma, const Matrix& eps);

struct LossParts {
  ad::Var reconstruction_oo, reconstruction_imm;
  ad::Var kl_oo, kl_imm;
  ad::Var matching, semantic, contrastive, mit, adversarial;
  ad::Var total;
  ad::Var recon_oo;  // B x TF reconstruction of the OO branch
};

// Weighted sum of the active parts; the two reconstructions share one weight
// and so do the two KL terms.
// Inactive parts are left invalid and contribute nothing. Throws
// TrainingError naming the first non-finite part.
ad::Var total_loss(ad::Tape& tape, const LossParts& parts, const LossWeights& w);

// ---------------------------------------------------------------------------
// Value-level loss helpers

struct ElboTerms {
  double reconstruction = 0.0;
  double kl = 0.0;
};

// X and X_hat are T x F (or any matching shape); mu/sigma are latent vectors
// (one row per patient).
ElboTerms loss_elbo_oo(const Matrix& X, const Matrix& M, const Matrix& X_hat, const Matrix& mu,
                       const Matrix& sigma);
ElboTerms loss_elbo_imm(const Matrix& X_aug, const Matrix& X_hat, const Matrix& mu, const Matrix& sigma);
double loss_match(const Matrix& z_oo, const Matrix& z_imm);
double loss_contrastive(const Matrix& z_oo, const Matrix& z_imm, double temperature);
double loss_mit(const Matrix& X, const Matrix& M, const Matrix& X_hat, const Matrix& mit_mask);
// Mean binary cross-entropy of probabilities, clamped to [1e-7, 1 - 1e-7].
double binary_cross_entropy(const Vector& probabilities, const Vector& labels);

struct DiscriminatorLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
};
// Both losses from discriminator probabilities on real and imputed batches.
DiscriminatorLosses discriminator_losses(const Vector& p_real, const Vector& p_imputed);

// ---------------------------------------------------------------------------
// Model

struct Noise {
  Matrix oo;   // B x L standard-normal draws
  Matrix imm;
};

class IgniteModel {
 public:
  IgniteModel(const IgniteConfig& config, const ModelShape& shape);
  IgniteModel(IgniteModel&&) noexcept = default;
  IgniteModel& operator=(IgniteModel&&) noexcept = default;
  IgniteModel(const IgniteModel&) = delete;
  IgniteModel& operator=(const IgniteModel&) = delete;

  IgniteModel clone() const;

  const IgniteConfig& config() const { return config_; }
  const ModelShape& shape() const { return shape_; }
  Index condition_dim() const { return config_.components.condition ? shape_.condition_dim() : 0; }

  nn::ParameterSet& generator() { return generator_; }
  const nn::ParameterSet& generator() const { return generator_; }
  nn::ParameterSet& discriminator() { return discriminator_; }
  const nn::ParameterSet& discriminator() const { return discriminator_; }

  const FeatureAttentionEncoder& encoder_oo() const { return enc_oo_; }
  const FeatureAttentionEncoder& encoder_imm() const { return enc_imm_; }
  const TemporalAttentionDecoder& decoder_oo() const { return dec_oo_; }
  const TemporalAttentionDecoder& decoder_imm() const { return dec_imm_; }

  // Every active loss term for one batch with fixed noise.
  LossParts compute_losses(ad::Tape& tape, const Batch& batch, const Noise& noise,
                           AttentionTrace* trace = nullptr) const;

  // Discriminator objective 0.5 * (BCE(real -> 1) + BCE(imputed -> 0)).
  ad::Var discriminator_loss(ad::Tape& tape, const Matrix& real, const Matrix& imputed) const;
  ad::Var discriminator_logits(ad::Tape& tape, const ad::Var& seq) const;

  // Posterior mean latent of the OO branch (B x L) for zero-filled input.
  Matrix encode_mean(const Batch& batch) const;

  // Completed matrices: observed entries copied, missing ones decoded from the
  // OO branch with z = mu (or a posterior sample when sampling is enabled).
  std::vector<ImputationResult> impute(std::span<const PatientRecord> records, nn::Rng* sampler = nullptr,
                                       AttentionTrace* trace = nullptr) const;

  // Metadata stored with checkpoints.
  std::optional<NormalizationStats> normalization;
  std::vector<std::string> feature_names;

 private:
  void build();

  IgniteConfig config_;
  ModelShape shape_;
  nn::ParameterSet generator_;
  nn::ParameterSet discriminator_;
  FeatureAttentionEncoder enc_oo_, enc_imm_;
  TemporalAttentionDecoder dec_oo_, dec_imm_;
  nn::Linear classifier_;
  SequenceClassifier disc_;
};

ImputationResult impute_ignite(const IgniteModel& model, const PatientRecord& record);

// ---------------------------------------------------------------------------
// Training

struct TrainHistory {
  std::vector<double> epoch_loss;           // mean generator total per epoch
  std::vector<double> epoch_discriminator;  // mean d_loss per epoch
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

// Mini-batch training on a normalized dataset. On a non-finite loss the
// parameters are restored to the last completed epoch and TrainingError is
// thrown.
TrainHistory train(IgniteModel& model, const Dataset& train_set, const EpochCallback& on_epoch = {});
IgniteModel train_ignite(const Dataset& train_set, const IgniteConfig& config, TrainHistory* history = nullptr);

// Masked-entry reconstruction MSE of a trained model on `validation`.
double validation_error(const IgniteModel& model, const Dataset& validation, double mask_rate, std::uint64_t seed);

struct SearchRanges {
  std::pair<double, double> reconstruction{2e-2, 2e2};
  std::pair<double, double> kl{2e-4, 2e4};
  std::pair<double, double> matching{1e-4, 1e4};
  std::pair<double, double> semantic{1e-4, 1e4};
  std::pair<double, double> contrastive{1e-4, 1e4};
  std::pair<double, double> mit{1e-1, 3e1};
  std::pair<double, double> discriminator{1e-4, 1e-1};
};

// Log-uniform draw of all seven weights.
LossWeights sample_weights(const SearchRanges& ranges, nn::Rng& rng);

struct SearchTrial {
  IgniteConfig config;
  double validation_error = 0.0;
};

struct SearchResult {
  IgniteConfig best;
  std::vector<SearchTrial> trials;
};

// Seeded random search: each trial trains on 80% of `data` and is scored by
// validation_error on the rest; the lowest error wins.
SearchResult random_search(const Dataset& data, const SearchRanges& ranges, int n_trials, std::uint64_t seed,
                           const IgniteConfig& base = {});

// Imputer adapter. fit() trains a fresh model on the training split.
class IgniteImputer final : public Imputer {
 public:
  explicit IgniteImputer(IgniteConfig config) : config_(config) {}
  explicit IgniteImputer(IgniteModel model);
  std::string name() const override { return "ignite"; }
  void fit(const Dataset& train) override;
  std::vector<ImputationResult> impute(std::span<const PatientRecord> records) const override;
  const IgniteModel& model() const;
  const TrainHistory& history() const { return history_; }

 private:
  IgniteConfig config_;
  std::optional<IgniteModel> model_;
  TrainHistory history_;
};

}  // namespace ignite
