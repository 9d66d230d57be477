#include <gtest/gtest.h>

#include "ignite/autodiff.hpp"
#include "support.hpp"

using namespace ignite;
using ignite::testing::random_matrix;

namespace {

// Every op is checked through loss = sum(op(inputs) .* R) for a fixed random R.
struct OpCase {
  std::string name;
  std::vector<std::pair<Index, Index>> input_shapes;
  std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)> build;
};

void check_op(const OpCase& c, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  nn::ParameterSet set;
  for (std::size_t i = 0; i < c.input_shapes.size(); ++i) {
    set.add("in" + std::to_string(i), random_matrix(c.input_shapes[i].first, c.input_shapes[i].second, rng, 0.8));
  }
  Matrix weights;
  auto run = [&](bool backward) {
    ad::Tape tape;
    std::vector<ad::Var> in;
    for (std::size_t i = 0; i < set.size(); ++i) in.push_back(tape.param(set[i]));
    const ad::Var out = c.build(tape, in);
    if (weights.size() == 0) weights = random_matrix(out.rows(), out.cols(), rng);
    const ad::Var loss = ad::sum(ad::mul_const(out, weights));
    if (backward) tape.backward(loss);
    return loss.scalar();
  };
  run(false);
  const auto reports = ignite::testing::check_gradients(set, [&] { return run(false); }, [&] { run(true); });
  for (const auto& r : reports) EXPECT_LT(r.max_relative_error, 1e-6) << c.name << " input " << r.name;
}

}  // namespace

TEST(Autodiff, ElementwiseAndLinearOpsMatchFiniteDifferences) {
  const std::vector<OpCase> cases = {
      {"matmul", {{3, 4}, {4, 2}}, [](ad::Tape&, auto& v) { return ad::matmul(v[0], v[1]); }},
      {"add", {{3, 4}, {3, 4}}, [](ad::Tape&, auto& v) { return ad::add(v[0], v[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](ad::Tape&, auto& v) { return ad::sub(v[0], v[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](ad::Tape&, auto& v) { return ad::mul(v[0], v[1]); }},
      {"add_row", {{3, 4}, {1, 4}}, [](ad::Tape&, auto& v) { return ad::add_row(v[0], v[1]); }},
      {"scale", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::scale(v[0], -2.5); }},
      {"add_scalar", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::add_scalar(v[0], 0.7); }},
      {"tanh", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::tanh(v[0]); }},
      {"sigmoid", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::sigmoid(v[0]); }},
      {"exp", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::exp(v[0]); }},
      {"log", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::log(ad::add_scalar(ad::square(v[0]), 0.5)); }},
      {"square", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::square(v[0]); }},
      {"softplus", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::softplus(v[0]); }},
      {"mul_const", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::mul_const(v[0], Matrix::Constant(3, 4, 0.3)); }},
      {"add_const", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::square(ad::add_const(v[0], Matrix::Ones(3, 4))); }},
  };
  for (const auto& c : cases) check_op(c);
}

TEST(Autodiff, ReductionAndShapeOpsMatchFiniteDifferences) {
  const std::vector<OpCase> cases = {
      {"sum", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::sum(ad::square(v[0])); }},
      {"mean", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::mean(ad::square(v[0])); }},
      {"row_sum", {{3, 4}}, [](ad::Tape&, auto& v) { return ad::row_sum(v[0]); }},
      {"concat_cols", {{3, 2}, {3, 3}}, [](ad::Tape&, auto& v) { return ad::concat_cols({v[0], v[1]}); }},
      {"concat_rows", {{2, 3}, {4, 3}}, [](ad::Tape&, auto& v) { return ad::concat_rows(v[0], v[1]); }},
      {"transpose", {{2, 5}}, [](ad::Tape&, auto& v) { return ad::transpose(v[0]); }},
      {"slice_cols", {{3, 6}}, [](ad::Tape&, auto& v) { return ad::slice_cols(v[0], 2, 3); }},
      {"repeat_rows", {{2, 3}}, [](ad::Tape&, auto& v) { return ad::repeat_rows(v[0], 4); }},
      {"reshape_rows", {{6, 2}}, [](ad::Tape&, auto& v) { return ad::reshape_rows(v[0], 3, 4); }},
      {"stack_time", {{2, 3}, {2, 3}, {2, 3}},
       [](ad::Tape&, auto& v) { return ad::stack_time(std::span<const ad::Var>(v.data(), v.size())); }},
  };
  for (const auto& c : cases) check_op(c);
}

TEST(Autodiff, CompositeKernelsMatchFiniteDifferences) {
  const std::vector<OpCase> cases = {
      {"softmax_rows", {{3, 5}}, [](ad::Tape&, auto& v) { return ad::softmax_rows(v[0]); }},
      {"log_softmax_rows", {{3, 5}}, [](ad::Tape&, auto& v) { return ad::log_softmax_rows(v[0]); }},
      {"segment_weighted_sum", {{2, 3}, {6, 4}},
       [](ad::Tape&, auto& v) { return ad::segment_weighted_sum(ad::softmax_rows(v[0]), v[1]); }},
      {"normalize_rows", {{4, 3}}, [](ad::Tape&, auto& v) { return ad::normalize_rows(v[0]); }},
      {"bce_with_logits", {{5, 1}},
       [](ad::Tape&, auto& v) {
         Matrix y(5, 1);
         y << 1, 0, 1, 1, 0;
         return ad::bce_with_logits(v[0], y);
       }},
  };
  for (const auto& c : cases) check_op(c);
}

TEST(Autodiff, ForwardValuesAgreeWithDirectComputation) {
  std::mt19937_64 rng(3);
  ad::Tape tape;
  const Matrix a = random_matrix(2, 3, rng);
  const ad::Var va = tape.constant(a);
  const Matrix sm = ad::softmax_rows(va).value();
  for (Index r = 0; r < 2; ++r) {
    const double z = a.row(r).array().exp().sum();
    for (Index c = 0; c < 3; ++c) EXPECT_NEAR(sm(r, c), std::exp(a(r, c)) / z, 1e-15);
  }
  const Matrix rs = ad::reshape_rows(va, 3, 2).value();
  EXPECT_EQ(rs(1, 0), a(0, 2));
  EXPECT_EQ(rs(2, 1), a(1, 2));
  const Matrix rep = ad::repeat_rows(va, 2).value();
  EXPECT_EQ(rep.row(1), a.row(0));
  EXPECT_EQ(rep.row(2), a.row(1));
  const Matrix n = ad::normalize_rows(va).value();
  EXPECT_NEAR(n.row(0).norm(), 1.0, 1e-12);
}

TEST(Autodiff, ParameterGradientsAccumulateAcrossUses) {
  ad::Parameter p{"w", Matrix::Constant(1, 1, 3.0), Matrix::Zero(1, 1)};
  ad::Tape tape;
  const ad::Var w = tape.param(p);
  const ad::Var w_again = tape.param(p);
  EXPECT_EQ(w.id(), w_again.id());
  tape.backward(ad::add(ad::square(w), ad::scale(w_again, 2.0)));
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 2.0 * 3.0 + 2.0);
}

TEST(Autodiff, ShapeMismatchThrows) {
  ad::Tape tape;
  const ad::Var a = tape.constant(Matrix::Zero(2, 3));
  const ad::Var b = tape.constant(Matrix::Zero(3, 3));
  EXPECT_THROW(ad::add(a, b), ShapeError);
  EXPECT_THROW(ad::matmul(a, a), ShapeError);
  EXPECT_THROW(ad::reshape_rows(a, 4, 2), ShapeError);
}
