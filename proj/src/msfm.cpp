#include "qmamba/msfm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qmamba/ops.hpp"

namespace qmamba::msfm {

void SelfScanWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  delta_proj.visit(prefix + "delta_proj.", fn);
  b_proj.visit(prefix + "b_proj.", fn);
  fn(prefix + "a_log", a_log);
  fn(prefix + "c_readout", c_readout);
  fn(prefix + "d_skip", d_skip);
}

void ChannelTransformerWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + "q.weight", q);
  fn(prefix + "k.weight", k);
  fn(prefix + "v.weight", v);
  fn(prefix + "out.weight", out);
  fn(prefix + "temperature", temperature);
}

void MsfmWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + "conv.weight", conv_k3);
  ssm_h.visit(prefix + "ssm_h.", fn);
  ssm_v.visit(prefix + "ssm_v.", fn);
  attn.visit(prefix + "attn.", fn);
  fn(prefix + "balance", balance);
}

namespace {

SelfScanWeights init_self_scan(std::size_t c, std::size_t n, Rng& rng) {
  SelfScanWeights w;
  w.delta_proj = Linear::init(c, c, rng);
  for (double& v : w.delta_proj.bias.data()) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = dt + std::log(-std::expm1(-dt));
  }
  w.b_proj = Linear::init(c, c * n, rng);
  w.a_log = Tensor({c, n});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t s = 0; s < n; ++s) w.a_log[ch * n + s] = std::log(static_cast<double>(s + 1));
  w.c_readout = rng.normal_tensor({c, n}, 1.0 / std::sqrt(static_cast<double>(n)));
  w.d_skip = Tensor::full({c}, 1.0);
  return w;
}

SelfScanWeights zero_self_scan(std::size_t c, std::size_t n) {
  return SelfScanWeights{Linear::zeros(c, c), Linear::zeros(c, c * n), Tensor({c, n}), Tensor({c, n}), Tensor({c})};
}

Tensor a_from_log(const Tensor& a_log) {
  Tensor a = a_log;
  for (double& v : a.data()) v = -std::exp(v);
  return a;
}

// Self-scan of one token sequence [L, C].
Tensor self_scan(const Tensor& tokens, const SelfScanWeights& w) {
  const std::size_t len = tokens.dim(0), c = w.d_skip.dim(0), n = w.a_log.dim(1);
  const Tensor delta = ops::elementwise(ops::UnaryOp::kSoftplus, w.delta_proj(tokens));
  const Tensor b = w.b_proj(tokens).reshaped({len, c, n});
  const ssm::DiscreteSsm disc = ssm::zoh_discretize(a_from_log(w.a_log), b, delta);
  return ssm::selective_scan(disc, w.c_readout, w.d_skip, tokens).y;
}

}  // namespace

MsfmWeights MsfmWeights::init(std::size_t channels, std::size_t state, Rng& rng) {
  MsfmWeights w;
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels * 9));
  w.conv_k3 = rng.uniform_tensor({channels, channels, 3, 3}, -bound, bound);
  w.ssm_h = init_self_scan(channels, state, rng);
  w.ssm_v = init_self_scan(channels, state, rng);
  const double pb = 1.0 / std::sqrt(static_cast<double>(channels));
  w.attn.q = rng.uniform_tensor({channels, channels}, -pb, pb);
  w.attn.k = rng.uniform_tensor({channels, channels}, -pb, pb);
  w.attn.v = rng.uniform_tensor({channels, channels}, -pb, pb);
  w.attn.out = rng.uniform_tensor({channels, channels}, -pb, pb);
  w.attn.temperature = Tensor::scalar(1.0);
  w.balance = Tensor::full({3}, 1.0);
  return w;
}

MsfmWeights MsfmWeights::zeros(std::size_t channels, std::size_t state) {
  MsfmWeights w;
  w.conv_k3 = Tensor({channels, channels, 3, 3});
  w.ssm_h = zero_self_scan(channels, state);
  w.ssm_v = zero_self_scan(channels, state);
  w.attn = ChannelTransformerWeights{Tensor({channels, channels}), Tensor({channels, channels}),
                                     Tensor({channels, channels}), Tensor({channels, channels}), Tensor({1})};
  w.balance = Tensor({3});
  return w;
}

Tensor conv_branch(const Tensor& x, const MsfmWeights& w) {
  return ops::conv2d(x, w.conv_k3, ops::Conv2dParams{.stride = 1, .padding = 1});
}

Tensor scan_rows(const Tensor& x, const SelfScanWeights& w) {
  expect_rank(x, 3, "scan_rows input");
  const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  Tensor out(x.shape());
  Tensor tokens({wd, c});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t i = 0; i < wd; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) tokens[i * c + ch] = x[(ch * h + y) * wd + i];
    const Tensor res = self_scan(tokens, w);
    for (std::size_t i = 0; i < wd; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) out[(ch * h + y) * wd + i] = res[i * c + ch];
  }
  return out;
}

Tensor scan_cols(const Tensor& x, const SelfScanWeights& w) {
  expect_rank(x, 3, "scan_cols input");
  const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  Tensor out(x.shape());
  Tensor tokens({h, c});
  for (std::size_t i = 0; i < wd; ++i) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t ch = 0; ch < c; ++ch) tokens[y * c + ch] = x[(ch * h + y) * wd + i];
    const Tensor res = self_scan(tokens, w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t ch = 0; ch < c; ++ch) out[(ch * h + y) * wd + i] = res[y * c + ch];
  }
  return out;
}

Tensor ssm_branch(const Tensor& x, const MsfmWeights& w) { return ops::add(scan_rows(x, w.ssm_h), scan_cols(x, w.ssm_v)); }

Tensor transformer_branch(const Tensor& x, const MsfmWeights& w) {
  expect_rank(x, 3, "transformer_branch input");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  const Tensor q = ops::pointwise_linear(x, w.attn.q);
  const Tensor k = ops::pointwise_linear(x, w.attn.k);
  const Tensor v = ops::pointwise_linear(x, w.attn.v);

  auto row_norm = [hw](const Tensor& t, std::size_t row) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += t[row * hw + p] * t[row * hw + p];
    return std::max(std::sqrt(s), 1e-12);
  };
  std::vector<double> q_norm(c), k_norm(c);
  for (std::size_t i = 0; i < c; ++i) {
    q_norm[i] = row_norm(q, i);
    k_norm[i] = row_norm(k, i);
  }

  const double temperature = w.attn.temperature[0];
  Tensor mixed(x.shape());
  std::vector<double> scores(c);
  for (std::size_t i = 0; i < c; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < hw; ++p) s += q[i * hw + p] * k[j * hw + p];
      scores[j] = temperature * s / (q_norm[i] * k_norm[j]);
      peak = std::max(peak, scores[j]);
    }
    double total = 0.0;
    for (double& s : scores) {
      s = std::exp(s - peak);
      total += s;
    }
    for (std::size_t j = 0; j < c; ++j) {
      const double a = scores[j] / total;
      for (std::size_t p = 0; p < hw; ++p) mixed[i * hw + p] += a * v[j * hw + p];
    }
  }
  return ops::pointwise_linear(mixed, w.attn.out);
}

Tensor msfm_forward(const Tensor& x, const MsfmWeights& w) {
  expect_shape(w.balance, {3}, "msfm balance");
  const Tensor conv = conv_branch(x, w);
  const Tensor scan = ssm_branch(x, w);
  const Tensor attn = transformer_branch(x, w);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = w.balance[0] * conv[i] + w.balance[1] * scan[i] + w.balance[2] * attn[i];
  return y;
}

}  // namespace qmamba::msfm
