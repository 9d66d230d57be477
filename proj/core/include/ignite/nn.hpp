#pragma once

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ignite/autodiff.hpp"

namespace ignite::nn {

using ad::Parameter;
using ad::Tape;
using ad::Var;
using Rng = std::mt19937_64;

// Owns a named group of parameters. Addresses stay stable for the lifetime of
// the set, so tapes and optimizers may hold raw pointers into it.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  Parameter& add(const std::string& name, Matrix init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  double grad_norm() const;
  // Rescales all gradients so that their joint L2 norm is at most max_norm.
  void clip_grad_norm(double max_norm);
  bool all_finite() const;
  std::size_t scalar_count() const;

  // Value snapshot, used for last-good restore after divergence.
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

// Uniform Glorot initialisation.
Matrix glorot(Index rows, Index cols, Rng& rng);

class Adam {
 public:
  explicit Adam(ParameterSet& params, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step();
  double learning_rate() const { return lr_; }

 private:
  ParameterSet* params_;
  double lr_, beta1_, beta2_, eps_;
  long step_count_ = 0;
  std::vector<Matrix> m_, v_;
};

// Single LSTM cell with gate order (input, forget, candidate, output). The
// cell can take an extra static input (constant over time) whose projection
// is computed once per sequence through static_gates().
class LstmCell {
 public:
  struct State {
    Var h;
    Var s;
  };

  LstmCell() = default;
  LstmCell(ParameterSet& params, const std::string& prefix, Index input_dim, Index static_dim,
           Index hidden, Rng& rng);

  Index hidden() const { return hidden_; }
  Index static_dim() const { return static_dim_; }

  // Bias plus the projection of the static input (or just the bias when the
  // cell has no static input, broadcast to `batch` rows).
  Var static_gates(Tape& tape, const Var* static_input, Index batch) const;
  State zero_state(Tape& tape, Index batch) const;
  State step(Tape& tape, const Var& x, const State& prev, const Var& static_gates) const;

 private:
  Parameter* w_x_ = nullptr;
  Parameter* w_h_ = nullptr;
  Parameter* w_c_ = nullptr;
  Parameter* bias_ = nullptr;
  Index hidden_ = 0;
  Index static_dim_ = 0;
};

// Dense layer x W + b.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& prefix, Index in, Index out, Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

}  // namespace ignite::nn
