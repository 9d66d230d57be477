#include "ignite/nn.hpp"

#include <cmath>

namespace ignite::nn {

ParameterSet::ParameterSet(const ParameterSet& other) : index_(other.index_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) {
    ParameterSet copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& ParameterSet::add(const std::string& name, Matrix init) {
  if (contains(name)) throw InvalidArgument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->zero_grad();
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFoundError("no parameter named " + name);
  return *params_[it->second];
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFoundError("no parameter named " + name);
  return *params_[it->second];
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

double ParameterSet::grad_norm() const {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (p->grad.size() != 0) sq += p->grad.squaredNorm();
  }
  return std::sqrt(sq);
}

void ParameterSet::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& p : params_) p->grad *= factor;
  }
}

bool ParameterSet::all_finite() const {
  for (const auto& p : params_) {
    if (!p->value.allFinite()) return false;
  }
  return true;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

std::vector<Matrix> ParameterSet::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParameterSet::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw ShapeError("parameter snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) params_[i]->value = values[i];
}

Matrix glorot(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return m;
}

Adam::Adam(ParameterSet& params, double learning_rate, double beta1, double beta2, double eps)
    : params_(&params), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
    v_.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
  }
}

void Adam::step() {
  ++step_count_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params_->size(); ++i) {
    Parameter& p = (*params_)[i];
    if (p.grad.size() == 0) continue;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseAbs2();
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

LstmCell::LstmCell(ParameterSet& params, const std::string& prefix, Index input_dim,
                   Index static_dim, Index hidden, Rng& rng)
    : hidden_(hidden), static_dim_(static_dim) {
  w_x_ = &params.add(prefix + ".w_input", glorot(input_dim, 4 * hidden, rng));
  w_h_ = &params.add(prefix + ".w_hidden", glorot(hidden, 4 * hidden, rng));
  if (static_dim > 0) w_c_ = &params.add(prefix + ".w_static", glorot(static_dim, 4 * hidden, rng));
  Matrix b = Matrix::Zero(1, 4 * hidden);
  b.middleCols(hidden, hidden).setOnes();  // forget-gate bias
  bias_ = &params.add(prefix + ".bias", std::move(b));
}

Var LstmCell::static_gates(Tape& tape, const Var* static_input, Index batch) const {
  Var bias = tape.param(*bias_);
  if (w_c_ != nullptr && static_input != nullptr) {
    return ad::add_row(ad::matmul(*static_input, tape.param(*w_c_)), bias);
  }
  return ad::add_row(tape.constant(Matrix::Zero(batch, 4 * hidden_)), bias);
}

LstmCell::State LstmCell::zero_state(Tape& tape, Index batch) const {
  return {tape.constant(Matrix::Zero(batch, hidden_)), tape.constant(Matrix::Zero(batch, hidden_))};
}

LstmCell::State LstmCell::step(Tape& tape, const Var& x, const State& prev,
                               const Var& static_gates) const {
  Var gates = ad::add(ad::add(ad::matmul(x, tape.param(*w_x_)), ad::matmul(prev.h, tape.param(*w_h_))),
                      static_gates);
  Var in = ad::sigmoid(ad::slice_cols(gates, 0, hidden_));
  Var forget = ad::sigmoid(ad::slice_cols(gates, hidden_, hidden_));
  Var cand = ad::tanh(ad::slice_cols(gates, 2 * hidden_, hidden_));
  Var out = ad::sigmoid(ad::slice_cols(gates, 3 * hidden_, hidden_));
  Var s = ad::add(ad::mul(forget, prev.s), ad::mul(in, cand));
  Var h = ad::mul(out, ad::tanh(s));
  return {h, s};
}

Linear::Linear(ParameterSet& params, const std::string& prefix, Index in, Index out, Rng& rng) {
  w_ = &params.add(prefix + ".weight", glorot(in, out, rng));
  b_ = &params.add(prefix + ".bias", Matrix::Zero(1, out));
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  return ad::add_row(ad::matmul(x, tape.param(*w_)), tape.param(*b_));
}

}  // namespace ignite::nn
