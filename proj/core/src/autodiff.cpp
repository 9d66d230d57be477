#include "ignite/autodiff.hpp"

#include <algorithm>

namespace ignite::ad {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

// Value of the node being back-propagated. Set by Tape::backward for the
// duration of one backward callback so that kernels like tanh can reuse their
// forward output instead of keeping a copy.
thread_local const Matrix* g_current_output = nullptr;

const Matrix& out_value() { return *g_current_output; }

}  // namespace

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape_ != this) throw InvalidArgument("autodiff: mixing variables from different tapes");
    if (nodes_[p.id_].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& output) {
  if (output.rows() != 1 || output.cols() != 1) {
    throw ShapeError("autodiff: backward() needs a 1x1 output");
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[output.id_].grad = Matrix::Ones(1, 1);
  for (int i = output.id_; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) {
      g_current_output = &n.value;
      n.backward(n.grad, *this);
      g_current_output = nullptr;
    }
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  Tape& t = *a.tape();
  return t.record(a.value() * b.value(), {a, b}, [a, b](const Matrix& g, Tape& tape) {
    if (tape.requires_grad(a)) tape.accumulate(a, g * b.value().transpose());
    if (tape.requires_grad(b)) tape.accumulate(b, a.value().transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](const Matrix& g, Tape& tape) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](const Matrix& g, Tape& tape) {
    tape.accumulate(a, g);
    if (tape.requires_grad(b)) tape.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](const Matrix& g, Tape& tape) {
                            if (tape.requires_grad(a)) tape.accumulate(a, g.cwiseProduct(b.value()));
                            if (tape.requires_grad(b)) tape.accumulate(b, g.cwiseProduct(a.value()));
                          });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: expected a 1x" + std::to_string(a.cols()) + " row");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](const Matrix& g, Tape& tape) {
    tape.accumulate(a, g);
    if (tape.requires_grad(row)) tape.accumulate(row, g.colwise().sum());
  });
}

Var scale(const Var& a, double s) {
  return a.tape()->record(a.value() * s, {a},
                          [a, s](const Matrix& g, Tape& tape) { tape.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape()->record(std::move(out), {a},
                          [a](const Matrix& g, Tape& tape) { tape.accumulate(a, g); });
}

Var mul_const(const Var& a, const Matrix& c) {
  require_same_shape(a.value(), c, "mul_const");
  return a.tape()->record(a.value().cwiseProduct(c), {a}, [a, c](const Matrix& g, Tape& tape) {
    tape.accumulate(a, g.cwiseProduct(c));
  });
}

Var add_const(const Var& a, const Matrix& c) {
  require_same_shape(a.value(), c, "add_const");
  return a.tape()->record(a.value() + c, {a},
                          [a](const Matrix& g, Tape& tape) { tape.accumulate(a, g); });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh();
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, Tape& tape) {
    const auto& y = out_value().array();
    tape.accumulate(a, (g.array() * (1.0 - y.square())).matrix());
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 + (-a.value().array()).exp()).inverse();
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, Tape& tape) {
    const auto& y = out_value().array();
    tape.accumulate(a, (g.array() * y * (1.0 - y)).matrix());
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, Tape& tape) {
    tape.accumulate(a, g.cwiseProduct(out_value()));
  });
}

Var log(const Var& a) {
  Matrix out = a.value().array().log();
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, Tape& tape) {
    tape.accumulate(a, g.cwiseQuotient(a.value()));
  });
}

Var square(const Var& a) {
  return a.tape()->record(a.value().array().square().matrix(), {a},
                          [a](const Matrix& g, Tape& tape) {
                            tape.accumulate(a, 2.0 * g.cwiseProduct(a.value()));
                          });
}

Var softplus(const Var& a) {
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
  Matrix out = a.value().unaryExpr(
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, Tape& tape) {
    Matrix sig = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    tape.accumulate(a, g.cwiseProduct(sig));
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, Tape& tape) {
    tape.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return a.tape()->record(std::move(out), {a}, [a, n](const Matrix& g, Tape& tape) {
    tape.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var row_sum(const Var& a) {
  return a.tape()->record(a.value().rowwise().sum(), {a}, [a](const Matrix& g, Tape& tape) {
    tape.accumulate(a, g.replicate(1, a.cols()));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Var> captured(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts,
                                 [captured](const Matrix& g, Tape& tape) {
                                   Index off = 0;
                                   for (const Var& p : captured) {
                                     if (tape.requires_grad(p)) {
                                       tape.accumulate(p, g.middleCols(off, p.cols()));
                                     }
                                     off += p.cols();
                                   }
                                 });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_rows(const Var& top, const Var& bottom) {
  if (top.cols() != bottom.cols()) throw ShapeError("concat_rows: column counts differ");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top.value();
  out.bottomRows(bottom.rows()) = bottom.value();
  return top.tape()->record(std::move(out), {top, bottom}, [top, bottom](const Matrix& g, Tape& tape) {
    if (tape.requires_grad(top)) tape.accumulate(top, g.topRows(top.rows()));
    if (tape.requires_grad(bottom)) tape.accumulate(bottom, g.bottomRows(bottom.rows()));
  });
}

Var transpose(const Var& a) {
  return a.tape()->record(a.value().transpose(), {a},
                          [a](const Matrix& g, Tape& tape) { tape.accumulate(a, g.transpose()); });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [a, start, count](const Matrix& g, Tape& tape) {
                            Matrix full = Matrix::Zero(a.rows(), a.cols());
                            full.middleCols(start, count) = g;
                            tape.accumulate(a, full);
                          });
}

Var repeat_rows(const Var& a, Index times) {
  const Matrix& v = a.value();
  Matrix out(v.rows() * times, v.cols());
  for (Index i = 0; i < v.rows(); ++i) {
    out.middleRows(i * times, times) = v.row(i).replicate(times, 1);
  }
  return a.tape()->record(std::move(out), {a}, [a, times](const Matrix& g, Tape& tape) {
    Matrix ga(a.rows(), a.cols());
    for (Index i = 0; i < a.rows(); ++i) ga.row(i) = g.middleRows(i * times, times).colwise().sum();
    tape.accumulate(a, ga);
  });
}

Var reshape_rows(const Var& a, Index rows, Index cols) {
  const Matrix& v = a.value();
  if (v.size() != rows * cols) throw ShapeError("reshape_rows: element count differs");
  const Index src_cols = v.cols();
  Matrix out(rows, cols);
  for (Index k = 0; k < rows * cols; ++k) out(k / cols, k % cols) = v(k / src_cols, k % src_cols);
  return a.tape()->record(std::move(out), {a}, [a, cols, src_cols](const Matrix& g, Tape& tape) {
    Matrix ga(a.rows(), a.cols());
    for (Index k = 0; k < ga.size(); ++k) ga(k / src_cols, k % src_cols) = g(k / cols, k % cols);
    tape.accumulate(a, ga);
  });
}

Var stack_time(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("stack_time: no inputs");
  const Index steps = static_cast<Index>(parts.size());
  const Index batch = parts[0].rows();
  const Index width = parts[0].cols();
  Matrix out(batch * steps, width);
  for (Index t = 0; t < steps; ++t) {
    const Matrix& p = parts[t].value();
    if (p.rows() != batch || p.cols() != width) throw ShapeError("stack_time: inconsistent shapes");
    for (Index b = 0; b < batch; ++b) out.row(b * steps + t) = p.row(b);
  }
  std::vector<Var> captured(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts,
                                 [captured, steps, batch](const Matrix& g, Tape& tape) {
                                   for (Index t = 0; t < steps; ++t) {
                                     if (!tape.requires_grad(captured[t])) continue;
                                     Matrix gt(batch, g.cols());
                                     for (Index b = 0; b < batch; ++b) gt.row(b) = g.row(b * steps + t);
                                     tape.accumulate(captured[t], gt);
                                   }
                                 });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, Tape& tape) {
    const Matrix& y = out_value();
    // dx = y * (g - <g, y>)
    Vector dots = g.cwiseProduct(y).rowwise().sum();
    Matrix ga = y.cwiseProduct(g - dots.replicate(1, g.cols()));
    tape.accumulate(a, ga);
  });
}

Var log_softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    const double lse = mx + std::log((out.row(r).array() - mx).exp().sum());
    out.row(r).array() -= lse;
  }
  return a.tape()->record(std::move(out), {a}, [a](const Matrix& g, Tape& tape) {
    Matrix soft = out_value().array().exp();
    Vector gs = g.rowwise().sum();
    tape.accumulate(a, g - soft.cwiseProduct(gs.replicate(1, g.cols())));
  });
}

Var segment_weighted_sum(const Var& weights, const Var& seq) {
  const Index batch = weights.rows();
  const Index steps = weights.cols();
  if (seq.rows() != batch * steps) throw ShapeError("segment_weighted_sum: sequence rows != B*T");
  const Matrix& w = weights.value();
  const Matrix& h = seq.value();
  Matrix out(batch, h.cols());
  for (Index b = 0; b < batch; ++b) {
    out.row(b) = w.row(b) * h.middleRows(b * steps, steps);
  }
  return weights.tape()->record(
      std::move(out), {weights, seq}, [weights, seq, batch, steps](const Matrix& g, Tape& tape) {
        const Matrix& wv = weights.value();
        const Matrix& hv = seq.value();
        if (tape.requires_grad(weights)) {
          Matrix gw(batch, steps);
          for (Index b = 0; b < batch; ++b) {
            gw.row(b) = g.row(b) * hv.middleRows(b * steps, steps).transpose();
          }
          tape.accumulate(weights, gw);
        }
        if (tape.requires_grad(seq)) {
          Matrix gh(batch * steps, hv.cols());
          for (Index b = 0; b < batch; ++b) {
            gh.middleRows(b * steps, steps) = wv.row(b).transpose() * g.row(b);
          }
          tape.accumulate(seq, gh);
        }
      });
}

Var normalize_rows(const Var& a, double eps) {
  const Matrix& v = a.value();
  Vector norms = (v.rowwise().squaredNorm().array() + eps).sqrt();
  Matrix out = v.array().colwise() / norms.array();
  return a.tape()->record(std::move(out), {a}, [a, norms](const Matrix& g, Tape& tape) {
    const Matrix& y = out_value();
    // d(x/n)/dx = (I - y y^T) / n
    Vector dots = g.cwiseProduct(y).rowwise().sum();
    Matrix ga = g - (y.array().colwise() * dots.array()).matrix();
    ga = ga.array().colwise() / norms.array();
    tape.accumulate(a, ga);
  });
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  require_same_shape(logits.value(), targets, "bce_with_logits");
  const Matrix& l = logits.value();
  const double n = static_cast<double>(l.size());
  double total = 0.0;
  for (Index i = 0; i < l.size(); ++i) {
    const double x = l(i);
    total += std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) - targets(i) * x;
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return logits.tape()->record(std::move(out), {logits}, [logits, targets, n](const Matrix& g, Tape& tape) {
    Matrix sig = logits.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    tape.accumulate(logits, (sig - targets) * (g(0, 0) / n));
  });
}

}  // namespace ignite::ad
