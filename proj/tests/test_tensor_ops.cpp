#include <cmath>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "qmamba/ops.hpp"
#include "qmamba/verify/oracles.hpp"

using namespace qmamba;
using qt::randn;

namespace {

// depth-to-space written from the index formula
Tensor shuffle_oracle(const Tensor& in, std::size_t s) {
  const std::size_t c = in.dim(0) / (s * s), h = in.dim(1), w = in.dim(2);
  Tensor out({c, h * s, w * s});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h * s; ++y)
      for (std::size_t x = 0; x < w * s; ++x)
        out.at({ch, y, x}) = in.at({ch * s * s + (y % s) * s + (x % s), y / s, x / s});
  return out;
}

Tensor pool_oracle(const Tensor& in) {
  Tensor out({in.dim(0), 1, 1});
  for (std::size_t c = 0; c < in.dim(0); ++c) {
    double s = 0.0;
    for (std::size_t y = 0; y < in.dim(1); ++y)
      for (std::size_t x = 0; x < in.dim(2); ++x) s += in.at({c, y, x});
    out[c] = s / static_cast<double>(in.dim(1) * in.dim(2));
  }
  return out;
}

Tensor lin_comb(double a, const Tensor& x, double b, const Tensor& y) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

double norm(const Tensor& t) { return std::sqrt(oracle::inner(t, t)); }

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("shape and data length agree") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(shape_numel(t.shape()) == t.size());
    QT_CHECK_ERROR(Tensor({2, 2}, std::vector<double>(3)), ErrorCode::kShape);
    QT_CHECK_ERROR(Tensor({2, 0}), ErrorCode::kShape);
  }

  TEST_CASE("row-major indexing") {
    Tensor t({2, 3});
    for (std::size_t i = 0; i < 6; ++i) t[i] = static_cast<double>(i);
    CHECK(t.at({1, 2}) == 5.0);
    CHECK(t.slice0(1)[0] == 3.0);
    CHECK(t.reshaped({3, 2}).at({2, 1}) == 5.0);
    QT_CHECK_ERROR(t.reshaped({4, 2}), ErrorCode::kShape);
  }

  TEST_CASE("stack and compare") {
    Rng rng(1);
    const Tensor a = randn(rng, {2, 3}), b = randn(rng, {2, 3});
    const std::vector<Tensor> parts{a, b};
    const Tensor s = stack(parts);
    CHECK(s.shape() == Shape{2, 2, 3});
    CHECK(s.slice0(1) == b);
    CHECK(max_abs_diff(a, a) == 0.0);
    CHECK(all_finite(a));
  }
}

TEST_SUITE("ops") {
  TEST_CASE("conv2d counts overlapping ones") {
    const Tensor x = Tensor::full({1, 3, 3}, 1.0), k = Tensor::full({1, 1, 3, 3}, 1.0);
    const Tensor y = ops::conv2d(x, k, {1, 1});
    CHECK(y.at({0, 1, 1}) == 9.0);
    CHECK(y.at({0, 0, 0}) == 4.0);
    CHECK(y.at({0, 2, 2}) == 4.0);
    CHECK(y.at({0, 0, 1}) == 6.0);
  }

  TEST_CASE("conv2d identity kernel") {
    Rng rng(2);
    const Tensor x = randn(rng, {1, 5, 7});
    CHECK(ops::conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), {1, 0}) == x);
  }

  TEST_CASE("conv2d uses cross-correlation") {
    Tensor x({1, 1, 3});
    x[0] = 1.0;
    x[1] = 2.0;
    x[2] = 3.0;
    Tensor k({1, 1, 1, 3});
    QT_CHECK_ERROR(ops::conv2d(x, k, {1, 0}), ErrorCode::kShape);  // non-square kernel
    Tensor k3({1, 1, 3, 3});
    k3.at({0, 0, 1, 0}) = 1.0;  // picks the left neighbour
    const Tensor y = ops::conv2d(x, k3, {1, 1});
    CHECK(y[1] == 1.0);
    CHECK(y[2] == 2.0);
  }

  TEST_CASE("conv2d matches the loop oracle") {
    Rng rng(3);
    for (std::size_t stride : {1, 2})
      for (std::size_t pad : {0, 1, 2}) {
        const Tensor x = randn(rng, {2, 5, 5}), k = randn(rng, {4, 2, 3, 3});
        const Tensor y = ops::conv2d(x, k, {stride, pad});
        const Tensor ref = oracle::conv2d(x, k, stride, pad);
        REQUIRE(y.shape() == ref.shape());
        CHECK(y.dim(1) == (5 + 2 * pad - 3) / stride + 1);
        CHECK(max_abs_diff(y, ref) <= 1e-12);
      }
  }

  TEST_CASE("conv2d channel mismatch names both shapes") {
    try {
      ops::conv2d(Tensor({3, 4, 4}), Tensor({2, 2, 3, 3}), {1, 1});
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kShape);
      const std::string msg = e.what();
      CHECK(msg.find("[3,4,4]") != std::string::npos);
      CHECK(msg.find("[2,2,3,3]") != std::string::npos);
    }
  }

  TEST_CASE("conv_transpose2d spreads a single tap") {
    Rng rng(4);
    const Tensor k = randn(rng, {1, 1, 3, 3});
    const Tensor y = ops::conv_transpose2d(Tensor::full({1, 1, 1}, 2.5), k, {.stride = 1, .padding = 0});
    REQUIRE(y.shape() == Shape{1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == 2.5 * k[i]);
  }

  TEST_CASE("conv_transpose2d zero input and shape law") {
    Rng rng(5);
    const Tensor k = randn(rng, {3, 2, 3, 3});
    const Tensor y = ops::conv_transpose2d(Tensor({3, 4, 6}), k, {.stride = 2, .padding = 1});
    CHECK(y.shape() == Shape{2, (4 - 1) * 2 - 2 + 3, (6 - 1) * 2 - 2 + 3});
    CHECK(max_abs(y) == 0.0);
    QT_CHECK_ERROR(ops::conv_transpose2d(Tensor({2, 4, 4}), k, {}), ErrorCode::kShape);
  }

  TEST_CASE("conv_transpose2d matches the scatter oracle") {
    Rng rng(6);
    const Tensor x = randn(rng, {3, 4, 5}), k = randn(rng, {3, 2, 3, 3});
    const Tensor y = ops::conv_transpose2d(x, k, {.stride = 2, .padding = 1, .output_padding = 1});
    CHECK(y.shape() == Shape{2, 8, 10});
    CHECK(max_abs_diff(y, oracle::conv_transpose2d(x, k, 2, 1, 1)) <= 1e-12);
  }

  TEST_CASE("adjointness on random shapes") {
    Rng rng(7);
    for (int draw = 0; draw < 40; ++draw) {
      const std::size_t ci = 1 + rng.next_u64() % 3, co = 1 + rng.next_u64() % 3;
      const std::size_t h = 3 + rng.next_u64() % 6, w = 3 + rng.next_u64() % 6;
      const std::size_t stride = 1 + rng.next_u64() % 2, pad = rng.next_u64() % 2;
      const Tensor x = randn(rng, {ci, h, w}), k = randn(rng, {co, ci, 3, 3});
      const Tensor ax = ops::conv2d(x, k, {stride, pad});
      const Tensor y = randn(rng, ax.shape());
      // pick output_padding so the transpose lands back on (h, w)
      const std::size_t base_h = (ax.dim(1) - 1) * stride - 2 * pad + 3;
      const std::size_t base_w = (ax.dim(2) - 1) * stride - 2 * pad + 3;
      const std::size_t op = std::max(h - base_h, w - base_w);
      // [co, ci, 3, 3] reads as [C_in, C_out, 3, 3] for the transpose
      const Tensor aty = ops::conv_transpose2d(y, k, {.stride = stride, .padding = pad, .output_padding = op});
      Tensor trimmed({ci, h, w});
      for (std::size_t c = 0; c < ci; ++c)
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) trimmed.at({c, yy, xx}) = aty.at({c, yy, xx});
      const double lhs = oracle::inner(ax, y), rhs = oracle::inner(x, trimmed);
      CHECK(std::abs(lhs - rhs) <= 1e-10 * norm(x) * norm(y) * norm(k));
    }
  }

  TEST_CASE("linear") {
    Rng rng(8);
    const Tensor x = randn(rng, {2, 3, 4});
    Tensor eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
    const Tensor zero_bias({4});
    CHECK(ops::linear(x, eye, &zero_bias) == x);

    const Tensor ones = Tensor::full({1, 4}, 1.0);
    const Tensor sums = ops::linear(x, ones);
    REQUIRE(sums.shape() == Shape{2, 3, 1});
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < 4; ++i) s += x[r * 4 + i];
      CHECK(sums[r] == doctest::Approx(s).epsilon(1e-14));
    }

    const Tensor w = randn(rng, {5, 4}), b = randn(rng, {5});
    const Tensor y = ops::linear(x, w, &b);
    const Tensor ref = oracle::linear(x.reshaped({6, 4}), w, &b).reshaped({2, 3, 5});
    CHECK(max_abs_diff(y, ref) <= 1e-12);
    QT_CHECK_ERROR(ops::linear(x, Tensor({5, 3})), ErrorCode::kShape);
  }

  TEST_CASE("adaptive_avg_pool_1x1") {
    CHECK(ops::adaptive_avg_pool_1x1(Tensor::full({2, 3, 5}, 0.7))[1] == doctest::Approx(0.7).epsilon(1e-15));
    const Tensor ramp({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(ops::adaptive_avg_pool_1x1(ramp)[0] == 2.5);
    Rng rng(9);
    const Tensor x = randn(rng, {4, 7, 3});
    const Tensor p = ops::adaptive_avg_pool_1x1(x);
    CHECK(p.shape() == Shape{4, 1, 1});
    CHECK(max_abs_diff(p, pool_oracle(x)) <= 1e-12);
  }

  TEST_CASE("pixel_shuffle") {
    const Tensor abcd({4, 1, 1}, {1.0, 2.0, 3.0, 4.0});
    const Tensor y = ops::pixel_shuffle(abcd, 2);
    CHECK(y == Tensor({1, 2, 2}, {1.0, 2.0, 3.0, 4.0}));

    Rng rng(10);
    const Tensor x = randn(rng, {8, 3, 3});
    const Tensor s = ops::pixel_shuffle(x, 2);
    CHECK(s == shuffle_oracle(x, 2));
    CHECK(ops::pixel_unshuffle(s, 2) == x);
    std::vector<double> before(x.data().begin(), x.data().end()), after(s.data().begin(), s.data().end());
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    CHECK(before == after);
    QT_CHECK_ERROR(ops::pixel_shuffle(Tensor({6, 2, 2}), 2), ErrorCode::kShape);
  }

  TEST_CASE("elementwise maps") {
    CHECK(ops::softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(ops::sigmoid(0.0) == 0.5);
    CHECK(std::abs(ops::softplus(50.0) - 50.0) <= 1e-9);
    CHECK(std::isfinite(ops::softplus(1000.0)));
    CHECK(ops::softplus(-1000.0) >= 0.0);
    CHECK(ops::sigmoid(-800.0) >= 0.0);
    CHECK(ops::sigmoid(800.0) <= 1.0);
    for (double v = -10.0; v < 10.0; v += 0.5) CHECK(ops::sigmoid(v) < ops::sigmoid(v + 0.5));

    Rng rng(11);
    const Tensor a = randn(rng, {3, 2}), b = randn(rng, {3, 2});
    const Tensor sum = ops::elementwise(ops::BinaryOp::kAdd, a, b);
    const Tensor prod = ops::elementwise(ops::BinaryOp::kMul, a, Tensor::scalar(3.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(sum[i] == a[i] + b[i]);
      CHECK(prod[i] == a[i] * 3.0);
    }
    CHECK(ops::elementwise(ops::UnaryOp::kExp, Tensor::scalar(1.0))[0] == doctest::Approx(std::exp(1.0)));
    QT_CHECK_ERROR(ops::elementwise(ops::BinaryOp::kAdd, a, Tensor({2, 3})), ErrorCode::kShape);
  }

  TEST_CASE("linearity of the linear operators") {
    Rng rng(12);
    const Tensor x = randn(rng, {2, 6, 6}), y = randn(rng, {2, 6, 6});
    const Tensor k = randn(rng, {3, 2, 3, 3}), kt = randn(rng, {2, 3, 3, 3}), w = randn(rng, {4, 6});
    const double a = 0.37, b = -1.9;
    auto check = [&](auto f) {
      const Tensor lhs = f(lin_comb(a, x, b, y));
      const Tensor rhs = lin_comb(a, f(x), b, f(y));
      CHECK(max_rel_error(lhs, rhs) <= 1e-10);
    };
    check([&](const Tensor& t) { return ops::conv2d(t, k, {1, 1}); });
    check([&](const Tensor& t) { return ops::conv_transpose2d(t, kt, {.stride = 2, .padding = 1, .output_padding = 1}); });
    check([&](const Tensor& t) { return ops::linear(t, w); });
    check([&](const Tensor& t) { return ops::adaptive_avg_pool_1x1(t); });
    const Tensor x8 = randn(rng, {8, 2, 2}), y8 = randn(rng, {8, 2, 2});
    CHECK(max_rel_error(ops::pixel_shuffle(lin_comb(a, x8, b, y8), 2),
                        lin_comb(a, ops::pixel_shuffle(x8, 2), b, ops::pixel_shuffle(y8, 2))) <= 1e-10);
  }

  TEST_CASE("finite outputs for finite inputs") {
    Rng rng(13);
    const Tensor x = randn(rng, {2, 5, 5});
    CHECK(all_finite(ops::elementwise(ops::UnaryOp::kSoftplus, ops::scale(x, 500.0))));
    CHECK(all_finite(ops::elementwise(ops::UnaryOp::kSigmoid, ops::scale(x, 500.0))));
    CHECK(all_finite(ops::layer_norm_channels(Tensor({2, 5, 5}), Tensor::full({2}, 1.0), Tensor({2}))));
  }
}
