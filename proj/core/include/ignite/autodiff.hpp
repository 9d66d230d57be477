#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation of one forward pass. Values are Eigen
// matrices; the usual convention is one row per batch element. Parameters are
// owned outside the tape and receive accumulated gradients when backward()
// runs. A tape is single-use: build it, call backward once, discard it.

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ignite/common.hpp"

namespace ignite::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  // Convenience for 1x1 results.
  double scalar() const { return value()(0, 0); }

  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(const Matrix& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // One leaf per parameter per tape; repeated calls return the same node.
  Var param(Parameter& p);

  // Records an op output. `backward` receives dL/d(output) and must route
  // gradients to its inputs through accumulate(). It is only invoked when
  // some parent requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
  Var record(Matrix value, std::span<const Var> parents, Backward backward);

  bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }
  void accumulate(const Var& v, const Matrix& g);

  // Runs reverse accumulation from a 1x1 output and adds the resulting
  // gradients into every Parameter::grad touched by this tape.
  void backward(const Var& output);

  const Matrix& value(const Var& v) const { return nodes_[v.id_].value; }
  // Gradient of the last backward() target with respect to v; zero-sized if
  // v did not participate.
  const Matrix& grad(const Var& v) const { return nodes_[v.id_].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, int> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

// ---- elementwise and linear algebra ---------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// a (r x c) plus a 1 x c row broadcast over rows.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var mul_const(const Var& a, const Matrix& c);
Var add_const(const Var& a, const Matrix& c);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var softplus(const Var& a);

// ---- reductions -----------------------------------------------------------

Var sum(const Var& a);   // 1x1
Var mean(const Var& a);  // 1x1
Var row_sum(const Var& a);  // r x 1

// ---- shape manipulation ---------------------------------------------------

Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var concat_rows(const Var& top, const Var& bottom);
Var transpose(const Var& a);
Var slice_cols(const Var& a, Index start, Index count);
// Each row of a repeated `times` times consecutively: row i -> rows
// [i*times, (i+1)*times).
Var repeat_rows(const Var& a, Index times);
// Row-major reshape: out(r, c) = flat(r * cols + c) where flat enumerates a
// row by row.
Var reshape_rows(const Var& a, Index rows, Index cols);
// Interleaves T matrices of shape B x m into a (B*T) x m matrix whose row
// b*T + t is row b of parts[t].
Var stack_time(std::span<const Var> parts);

// ---- composite kernels ----------------------------------------------------

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
// out(b, :) = sum_t weights(b, t) * seq(b*T + t, :), weights B x T,
// seq (B*T) x m.
Var segment_weighted_sum(const Var& weights, const Var& seq);
// Each row scaled to unit Euclidean norm, with eps inside the square root.
Var normalize_rows(const Var& a, double eps = 1e-12);
// Mean binary cross-entropy computed from logits: mean(softplus(l) - y*l).
Var bce_with_logits(const Var& logits, const Matrix& targets);

}  // namespace ignite::ad
