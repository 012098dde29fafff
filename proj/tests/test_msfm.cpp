#include <cmath>

#include "helpers.hpp"
#include "qmamba/msfm.hpp"
#include "qmamba/ops.hpp"
#include "qmamba/verify/oracles.hpp"
#include "qmamba/verify/suites.hpp"

using namespace qmamba;
using namespace qmamba::msfm;
using qt::randn;

namespace {

MsfmWeights random_weights(Rng& rng, std::size_t c, std::size_t n = 3) { return MsfmWeights::init(c, n, rng); }

// Single-head channel attention from its definition.
Tensor attention_ref(const Tensor& x, const ChannelTransformerWeights& w) {
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  const Tensor q = oracle::pointwise(x, w.q, nullptr), k = oracle::pointwise(x, w.k, nullptr),
               v = oracle::pointwise(x, w.v, nullptr);
  Tensor mixed(x.shape());
  for (std::size_t i = 0; i < c; ++i) {
    std::vector<double> e(c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double qk = 0, qq = 0, kk = 0;
      for (std::size_t p = 0; p < hw; ++p) {
        qk += q[i * hw + p] * k[j * hw + p];
        qq += q[i * hw + p] * q[i * hw + p];
        kk += k[j * hw + p] * k[j * hw + p];
      }
      e[j] = std::exp(w.temperature[0] * qk / std::sqrt(qq * kk));
      z += e[j];
    }
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t p = 0; p < hw; ++p) mixed[i * hw + p] += e[j] / z * v[j * hw + p];
  }
  return oracle::pointwise(mixed, w.out, nullptr);
}

Tensor weighted(const MsfmWeights& w, const Tensor& conv, const Tensor& scan, const Tensor& attn) {
  Tensor y(conv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = w.balance[0] * conv[i] + w.balance[1] * scan[i] + w.balance[2] * attn[i];
  return y;
}

}  // namespace

TEST_SUITE("msfm") {
  TEST_CASE("conv branch") {
    Rng rng(1);
    auto w = random_weights(rng, 3);
    const Tensor x = randn(rng, {3, 5, 4});
    CHECK(max_abs_diff(conv_branch(x, w), oracle::conv2d(x, w.conv_k3, 1, 1)) <= 1e-12);
    w.conv_k3 = Tensor({3, 3, 3, 3});
    CHECK(max_abs(conv_branch(x, w)) == 0.0);
    for (std::size_t c = 0; c < 3; ++c) w.conv_k3.at({c, c, 1, 1}) = 1.0;
    CHECK(conv_branch(x, w) == x);
  }

  TEST_CASE("ssm branch: zero input, structure, closed form") {
    Rng rng(2);
    const auto w = random_weights(rng, 3, 4);
    CHECK(max_abs(ssm_branch(Tensor({3, 4, 4}), w)) == 0.0);

    const Tensor row = randn(rng, {3, 1, 6});
    CHECK(ssm_branch(row, w) == ops::add(scan_rows(row, w.ssm_h), scan_cols(row, w.ssm_v)));
    // each column of a 1xW map is a length-1 scan
    const Tensor cols = scan_cols(row, w.ssm_v);
    for (std::size_t i = 0; i < 6; ++i) {
      Tensor one({3, 1, 1});
      for (std::size_t c = 0; c < 3; ++c) one[c] = row[c * 6 + i];
      const Tensor single = scan_cols(one, w.ssm_v);
      for (std::size_t c = 0; c < 3; ++c) CHECK(cols[c * 6 + i] == single[c]);
    }
    const auto r = verify::check_msfm_ssm_closed_form();
    CHECK_MESSAGE(r.passed, verify::format_result(r));
  }

  TEST_CASE("transformer branch") {
    Rng rng(3);
    auto w = random_weights(rng, 4);
    w.attn.temperature[0] = 0.8;
    const Tensor x = randn(rng, {4, 3, 5});
    CHECK(max_abs_diff(transformer_branch(x, w), attention_ref(x, w.attn)) <= 1e-10);

    auto zv = w;
    zv.attn.v = Tensor({4, 4});
    CHECK(max_abs(transformer_branch(x, zv)) == 0.0);

    auto one = random_weights(rng, 1);
    const Tensor x1 = randn(rng, {1, 3, 3});
    const Tensor y1 = transformer_branch(x1, one);
    for (std::size_t p = 0; p < 9; ++p) CHECK(y1[p] == doctest::Approx(one.attn.out[0] * one.attn.v[0] * x1[p]).epsilon(1e-14));
  }

  TEST_CASE("forward: gating and zero balance") {
    Rng rng(4);
    auto w = random_weights(rng, 3);
    const Tensor x = randn(rng, {3, 4, 5});
    w.balance = Tensor({3}, {1.0, 0.0, 0.0});
    CHECK(msfm_forward(x, w) == conv_branch(x, w));
    w.balance = Tensor({3});
    CHECK(max_abs(msfm_forward(x, w)) == 0.0);
  }

  TEST_CASE("forward: recomposition of every gate subset is exact") {
    Rng rng(5);
    auto w = random_weights(rng, 3);
    const Tensor x = randn(rng, {3, 4, 4});
    const Tensor c = conv_branch(x, w), s = ssm_branch(x, w), a = transformer_branch(x, w);
    const double base[3] = {0.7, -1.3, 2.1};
    for (int mask = 0; mask < 8; ++mask) {
      for (int i = 0; i < 3; ++i) w.balance[i] = (mask >> i) & 1 ? base[i] : 0.0;
      const Tensor y = msfm_forward(x, w);
      CHECK(y == weighted(w, c, s, a));
      CHECK(y.shape() == x.shape());
    }
  }

  TEST_CASE("forward: degree-1 homogeneity in the balance") {
    Rng rng(6);
    auto w = random_weights(rng, 2);
    w.balance = Tensor({3}, {0.3, 1.1, -0.6});
    const Tensor x = randn(rng, {2, 3, 3});
    const Tensor y = msfm_forward(x, w);
    for (double alpha : {2.0, 0.5, -8.0}) {
      auto ws = w;
      for (double& b : ws.balance.data()) b *= alpha;
      CHECK(msfm_forward(x, ws) == ops::scale(y, alpha));
    }
    auto odd = w;
    for (double& b : odd.balance.data()) b *= 3.0;
    CHECK(max_rel_error(msfm_forward(x, odd), ops::scale(y, 3.0)) <= 1e-14);
  }

  TEST_CASE("balance must hold three factors") {
    Rng rng(7);
    auto w = random_weights(rng, 2);
    w.balance = Tensor({2});
    QT_CHECK_ERROR(msfm_forward(Tensor({2, 3, 3}), w), ErrorCode::kShape);
  }
}
