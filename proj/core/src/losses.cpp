#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "ignite/model.hpp"

namespace ignite {

using ad::Var;

namespace {

void require_same_shape(const Var& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(what) + ": shape mismatch");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError(std::string(what) + ": shape mismatch");
}

Var zero_loss(const Var& like) { return like.tape()->constant(Matrix::Zero(1, 1)); }

}  // namespace

Var reconstruction_observed(const Var& recon, const Matrix& x, const Matrix& mask) {
  require_same_shape(recon, x, "reconstruction_observed");
  require_same_shape(recon, mask, "reconstruction_observed");
  const double count = mask.sum();
  if (count == 0.0) {
    spdlog::warn("reconstruction loss on a batch without observed entries is 0");
    return zero_loss(recon);
  }
  const Var diff = ad::mul_const(ad::add_const(recon, -x), mask);
  return ad::scale(ad::sum(ad::square(diff)), 1.0 / count);
}

Var reconstruction_full(const Var& recon, const Matrix& target) {
  require_same_shape(recon, target, "reconstruction_full");
  return ad::mean(ad::square(ad::add_const(recon, -target)));
}

Var kl_divergence(const Var& mu, const Var& log_sigma) {
  // 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma)
  const Var sigma_sq = ad::exp(ad::scale(log_sigma, 2.0));
  const Var inner = ad::sub(ad::add(ad::square(mu), sigma_sq), ad::scale(log_sigma, 2.0));
  const double batch = static_cast<double>(mu.rows());
  return ad::add_scalar(ad::scale(ad::sum(inner), 0.5 / batch), -0.5 * static_cast<double>(mu.cols()));
}

Var matching_loss(const Var& z_oo, const Var& z_imm) {
  return ad::scale(ad::sum(ad::square(ad::sub(z_oo, z_imm))), 1.0 / static_cast<double>(z_oo.rows()));
}

Var contrastive_loss(const Var& z_oo, const Var& z_imm, double temperature) {
  const Index n = z_oo.rows();
  if (n < 2) throw InvalidArgument("contrastive loss needs at least two patients");
  if (!(temperature > 0.0)) throw InvalidArgument("contrastive temperature must be positive");
  const Var pool = ad::normalize_rows(ad::concat_rows(z_oo, z_imm));
  const Var sim = ad::scale(ad::matmul(pool, ad::transpose(pool)), 1.0 / temperature);
  Matrix self_mask = Matrix::Zero(2 * n, 2 * n);
  self_mask.diagonal().setConstant(-1e9);
  const Var logp = ad::log_softmax_rows(ad::add_const(sim, self_mask));
  Matrix positives = Matrix::Zero(2 * n, 2 * n);
  for (Index i = 0; i < n; ++i) {
    positives(i, n + i) = 1.0;
    positives(n + i, i) = 1.0;
  }
  return ad::scale(ad::sum(ad::mul_const(logp, positives)), -1.0 / static_cast<double>(n));
}

Var mit_loss(const Var& recon, const Matrix& truth, const Matrix& mit_mask) {
  require_same_shape(recon, truth, "mit_loss");
  require_same_shape(recon, mit_mask, "mit_loss");
  const double count = mit_mask.sum();
  if (count == 0.0) return zero_loss(recon);
  const Var diff = ad::mul_const(ad::add_const(recon, -truth), mit_mask);
  return ad::scale(ad::sum(ad::square(diff)), 1.0 / count);
}

Var reparameterize(const Var& mu, const Var& log_sigma, const Matrix& eps) {
  require_same_shape(mu, eps, "reparameterize");
  return ad::add(mu, ad::mul_const(ad::exp(log_sigma), eps));
}

Var total_loss(ad::Tape& tape, const LossParts& p, const LossWeights& w) {
  struct Term {
    const char* name;
    const Var* var;
    double weight;
  };
  const Term terms[] = {
      {"reconstruction_oo", &p.reconstruction_oo, w.reconstruction},
      {"reconstruction_imm", &p.reconstruction_imm, w.reconstruction},
      {"kl_oo", &p.kl_oo, w.kl},
      {"kl_imm", &p.kl_imm, w.kl},
      {"matching", &p.matching, w.matching},
      {"semantic", &p.semantic, w.semantic},
      {"contrastive", &p.contrastive, w.contrastive},
      {"mit", &p.mit, w.mit},
      {"adversarial", &p.adversarial, w.discriminator},
  };
  Var total = tape.constant(Matrix::Zero(1, 1));
  for (const Term& t : terms) {
    if (!t.var->valid()) continue;
    if (!std::isfinite(t.var->scalar())) throw TrainingError(std::string("non-finite loss term: ") + t.name);
    if (t.weight == 0.0) continue;
    total = ad::add(total, ad::scale(*t.var, t.weight));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Value level

namespace {

double kl_value(const Matrix& mu, const Matrix& sigma) {
  require_same_shape(mu, sigma, "kl");
  if ((sigma.array() <= 0.0).any()) throw InvalidArgument("sigma must be positive");
  const double total =
      0.5 * (mu.array().square() + sigma.array().square() - 1.0 - 2.0 * sigma.array().log()).sum();
  return total / static_cast<double>(mu.rows());
}

}  // namespace

ElboTerms loss_elbo_oo(const Matrix& X, const Matrix& M, const Matrix& X_hat, const Matrix& mu, const Matrix& sigma) {
  require_same_shape(X, M, "loss_elbo_oo");
  require_same_shape(X, X_hat, "loss_elbo_oo");
  ElboTerms out;
  const double count = M.sum();
  if (count > 0.0) {
    double s = 0.0;
    for (Index k = 0; k < X.size(); ++k) {
      if (M(k) == 1.0) s += (X_hat(k) - X(k)) * (X_hat(k) - X(k));
    }
    out.reconstruction = s / count;
  } else {
    spdlog::warn("reconstruction loss on a record without observed entries is 0");
  }
  out.kl = kl_value(mu, sigma);
  return out;
}

ElboTerms loss_elbo_imm(const Matrix& X_aug, const Matrix& X_hat, const Matrix& mu, const Matrix& sigma) {
  require_same_shape(X_aug, X_hat, "loss_elbo_imm");
  return {(X_hat - X_aug).array().square().mean(), kl_value(mu, sigma)};
}

double loss_match(const Matrix& z_oo, const Matrix& z_imm) {
  require_same_shape(z_oo, z_imm, "loss_match");
  return (z_oo - z_imm).squaredNorm() / static_cast<double>(z_oo.rows());
}

double loss_contrastive(const Matrix& z_oo, const Matrix& z_imm, double temperature) {
  require_same_shape(z_oo, z_imm, "loss_contrastive");
  ad::Tape tape;
  return contrastive_loss(tape.constant(z_oo), tape.constant(z_imm), temperature).scalar();
}

double loss_mit(const Matrix& X, const Matrix& M, const Matrix& X_hat, const Matrix& mit_mask) {
  require_same_shape(X, M, "loss_mit");
  require_same_shape(X, X_hat, "loss_mit");
  require_same_shape(X, mit_mask, "loss_mit");
  double s = 0.0, count = 0.0;
  for (Index k = 0; k < X.size(); ++k) {
    if (mit_mask(k) == 0.0) continue;
    if (M(k) != 1.0) throw InvalidArgument("MIT mask must be a subset of the observed mask");
    s += (X_hat(k) - X(k)) * (X_hat(k) - X(k));
    count += 1.0;
  }
  return count > 0.0 ? s / count : 0.0;
}

double binary_cross_entropy(const Vector& p, const Vector& y) {
  if (p.size() != y.size()) throw ShapeError("binary_cross_entropy: size mismatch");
  if (p.size() == 0) throw InvalidArgument("binary_cross_entropy: empty input");
  double s = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p(i), 1e-7, 1.0 - 1e-7);
    s -= y(i) * std::log(q) + (1.0 - y(i)) * std::log(1.0 - q);
  }
  return s / static_cast<double>(p.size());
}

DiscriminatorLosses discriminator_losses(const Vector& p_real, const Vector& p_imputed) {
  DiscriminatorLosses out;
  out.d_loss = 0.5 * (binary_cross_entropy(p_real, Vector::Ones(p_real.size())) +
                      binary_cross_entropy(p_imputed, Vector::Zero(p_imputed.size())));
  out.g_loss = binary_cross_entropy(p_imputed, Vector::Ones(p_imputed.size()));
  return out;
}

}  // namespace ignite
