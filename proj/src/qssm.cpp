#include "qmamba/qssm.hpp"

#include <cmath>
#include <string>

#include "qmamba/ops.hpp"

namespace qmamba::qssm {

std::string_view to_string(ScanDirection dir) {
  switch (dir) {
    case ScanDirection::kRowForward: return "row-fwd";
    case ScanDirection::kRowBackward: return "row-bwd";
    case ScanDirection::kColForward: return "col-fwd";
    case ScanDirection::kColBackward: return "col-bwd";
  }
  return "?";
}

ScanDirection parse_direction(std::string_view tag) {
  for (auto dir : kAllDirections)
    if (to_string(dir) == tag) return dir;
  throw Error(ErrorCode::kValidation, "unknown scan direction '" + std::string(tag) + "'");
}

std::vector<std::size_t> scan_order(std::size_t height, std::size_t width, ScanDirection dir) {
  std::vector<std::size_t> order;
  order.reserve(height * width);
  switch (dir) {
    case ScanDirection::kRowForward:
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) order.push_back(y * width + x);
      break;
    case ScanDirection::kRowBackward:
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = width; x-- > 0;) order.push_back(y * width + x);
      break;
    case ScanDirection::kColForward:
      for (std::size_t x = 0; x < width; ++x)
        for (std::size_t y = 0; y < height; ++y) order.push_back(y * width + x);
      break;
    case ScanDirection::kColBackward:
      for (std::size_t x = 0; x < width; ++x)
        for (std::size_t y = height; y-- > 0;) order.push_back(y * width + x);
      break;
    default:
      throw Error(ErrorCode::kValidation, "unknown scan direction tag " + std::to_string(static_cast<int>(dir)));
  }
  return order;
}

Tensor to_tokens(const Tensor& map, ScanDirection dir) {
  expect_rank(map, 3, "to_tokens input");
  const std::size_t c = map.dim(0), h = map.dim(1), w = map.dim(2), hw = h * w;
  const auto order = scan_order(h, w, dir);
  Tensor tokens({hw, c});
  for (std::size_t t = 0; t < hw; ++t)
    for (std::size_t ch = 0; ch < c; ++ch) tokens[t * c + ch] = map[ch * hw + order[t]];
  return tokens;
}

Tensor from_tokens(const Tensor& tokens, ScanDirection dir, std::size_t height, std::size_t width) {
  expect_rank(tokens, 2, "from_tokens input");
  const std::size_t hw = height * width, c = tokens.dim(1);
  if (tokens.dim(0) != hw)
    throw Error(ErrorCode::kShape, "from_tokens: " + shape_str(tokens.shape()) + " does not hold " +
                                       std::to_string(height) + "x" + std::to_string(width) + " tokens");
  const auto order = scan_order(height, width, dir);
  Tensor map({c, height, width});
  for (std::size_t t = 0; t < hw; ++t)
    for (std::size_t ch = 0; ch < c; ++ch) map[ch * hw + order[t]] = tokens[t * c + ch];
  return map;
}

void ChannelAttentionWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  fc1.visit(prefix + "fc1.", fn);
  fc2.visit(prefix + "fc2.", fn);
}

namespace {

std::size_t reduced(std::size_t channels) { return std::max<std::size_t>(1, channels / kReduction); }

// Inverse softplus of a log-uniform step in [1e-3, 1e-1].
Tensor init_delta_bias(std::size_t channels, Rng& rng) {
  Tensor b({channels});
  for (double& v : b.data()) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = dt + std::log(-std::expm1(-dt));
  }
  return b;
}

Tensor init_a_log(std::size_t channels, std::size_t state) {
  Tensor a_log({channels, state});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t n = 0; n < state; ++n) a_log[c * state + n] = std::log(static_cast<double>(n + 1));
  return a_log;
}

}  // namespace

QssmBlockWeights QssmBlockWeights::init(const QssmDims& d, Rng& rng) {
  if (d.frames < 2) throw Error(ErrorCode::kValidation, "QSSM block needs at least 2 frames");
  QssmBlockWeights w;
  w.norm_gamma = Tensor::full({d.channels}, 1.0);
  w.norm_beta = Tensor({d.channels});
  w.fuse_fc1 = Linear::init(d.frames * d.channels, 2 * d.channels, rng);
  w.fuse_fc2 = Linear::init(2 * d.channels, d.channels, rng);
  w.merge_proj = Linear::init((d.frames - 1) * d.channels, d.channels, rng);
  w.x_proj = Linear::init(d.channels, d.channels, rng);
  w.delta_proj = Linear::init(d.channels, d.channels, rng);
  w.delta_proj.bias = init_delta_bias(d.channels, rng);
  w.b_proj = Linear::init(d.channels, d.channels * d.state, rng);
  w.a_log = init_a_log(d.channels, d.state);
  w.c_readout = rng.normal_tensor({d.channels, d.state}, 1.0 / std::sqrt(static_cast<double>(d.state)));
  w.d_skip = Tensor::full({d.channels}, 1.0);
  w.out_proj = Linear::init(d.channels, d.channels, rng);
  w.ca.fc1 = Linear::init(d.channels, reduced(d.channels), rng);
  w.ca.fc2 = Linear::init(reduced(d.channels), d.channels, rng);
  return w;
}

QssmBlockWeights QssmBlockWeights::zeros(const QssmDims& d) {
  if (d.frames < 2) throw Error(ErrorCode::kValidation, "QSSM block needs at least 2 frames");
  QssmBlockWeights w;
  w.norm_gamma = Tensor({d.channels});
  w.norm_beta = Tensor({d.channels});
  w.fuse_fc1 = Linear::zeros(d.frames * d.channels, 2 * d.channels);
  w.fuse_fc2 = Linear::zeros(2 * d.channels, d.channels);
  w.merge_proj = Linear::zeros((d.frames - 1) * d.channels, d.channels);
  w.x_proj = Linear::zeros(d.channels, d.channels);
  w.delta_proj = Linear::zeros(d.channels, d.channels);
  w.b_proj = Linear::zeros(d.channels, d.channels * d.state);
  w.a_log = Tensor({d.channels, d.state});
  w.c_readout = Tensor({d.channels, d.state});
  w.d_skip = Tensor({d.channels});
  w.out_proj = Linear::zeros(d.channels, d.channels);
  w.ca.fc1 = Linear::zeros(d.channels, reduced(d.channels));
  w.ca.fc2 = Linear::zeros(reduced(d.channels), d.channels);
  return w;
}

QssmDims QssmBlockWeights::dims() const {
  const std::size_t c = d_skip.dim(0);
  return QssmDims{c, a_log.dim(1), fuse_fc1.in_features() / c};
}

Tensor QssmBlockWeights::a() const {
  Tensor a = a_log;
  for (double& v : a.data()) v = -std::exp(v);
  return a;
}

void QssmBlockWeights::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + "norm.gamma", norm_gamma);
  fn(prefix + "norm.beta", norm_beta);
  fuse_fc1.visit(prefix + "fuse_mlp.fc1.", fn);
  fuse_fc2.visit(prefix + "fuse_mlp.fc2.", fn);
  merge_proj.visit(prefix + "merge_proj.", fn);
  x_proj.visit(prefix + "x_proj.", fn);
  delta_proj.visit(prefix + "delta_proj.", fn);
  b_proj.visit(prefix + "b_proj.", fn);
  fn(prefix + "a_log", a_log);
  fn(prefix + "c_readout", c_readout);
  fn(prefix + "d_skip", d_skip);
  out_proj.visit(prefix + "out_proj.", fn);
  ca.visit(prefix + "ca.", fn);
}

namespace {

void check_currents(const Tensor& base, const Tensor& currents) {
  expect_rank(base, 3, "base frame");
  expect_rank(currents, 4, "current frames");
  if (currents.dim(1) != base.dim(0) || currents.dim(2) != base.dim(1) || currents.dim(3) != base.dim(2))
    throw Error(ErrorCode::kShape, "current frames " + shape_str(currents.shape()) + " do not match base " +
                                       shape_str(base.shape()));
}

Tensor flatten_frames(const Tensor& frames) {
  return frames.reshaped({frames.dim(0) * frames.dim(1), frames.dim(2), frames.dim(3)});
}

}  // namespace

Tensor fuse_base(const Tensor& base, const Tensor& currents, const QssmBlockWeights& w) {
  expect_rank(currents, 4, "current frames");
  check_currents(base, currents);
  const std::array<Tensor, 2> parts{base, flatten_frames(currents)};
  const Tensor stacked = ops::concat_channels(parts);
  if (stacked.dim(0) != w.fuse_fc1.in_features())
    throw Error(ErrorCode::kShape, "fuse_base: " + std::to_string(currents.dim(0) + 1) +
                                       " frames do not match fuse_mlp input " + shape_str(w.fuse_fc1.weight.shape()));
  const Tensor hidden = ops::elementwise(ops::UnaryOp::kGelu, w.fuse_fc1.pointwise(stacked));
  return w.fuse_fc2.pointwise(hidden);
}

Tensor merge_currents(const Tensor& currents, const QssmBlockWeights& w) {
  expect_rank(currents, 4, "current frames");
  const Tensor flat = flatten_frames(currents);
  if (flat.dim(0) != w.merge_proj.in_features())
    throw Error(ErrorCode::kShape, "merge_currents: " + shape_str(currents.shape()) + " does not match merge_proj " +
                                       shape_str(w.merge_proj.weight.shape()));
  return w.merge_proj.pointwise(flat);
}

QueryParams query_params(const Tensor& base_tokens, const QssmBlockWeights& w) {
  expect_rank(base_tokens, 2, "base tokens");
  const std::size_t len = base_tokens.dim(0);
  const std::size_t c = w.d_skip.dim(0), n = w.a_log.dim(1);
  QueryParams q;
  q.delta_seq = ops::elementwise(ops::UnaryOp::kSoftplus, w.delta_proj(base_tokens));
  q.b_seq = w.b_proj(base_tokens).reshaped({len, c, n});
  return q;
}

Tensor qssm_scan_direction(const Tensor& new_base, const Tensor& merged, const QssmBlockWeights& w,
                           ScanDirection dir) {
  expect_rank(new_base, 3, "new base");
  expect_shape(merged, new_base.shape(), "merged current stream");
  const Tensor base_tokens = to_tokens(new_base, dir);
  const QueryParams q = query_params(base_tokens, w);
  const Tensor x_cur = w.x_proj(to_tokens(merged, dir));
  const ssm::DiscreteSsm disc = ssm::zoh_discretize(w.a(), q.b_seq, q.delta_seq);
  const ssm::ScanResult scan = ssm::selective_scan(disc, w.c_readout, w.d_skip, x_cur);
  return from_tokens(scan.y, dir, new_base.dim(1), new_base.dim(2));
}

Tensor channel_attention(const Tensor& x, const ChannelAttentionWeights& w) {
  expect_rank(x, 3, "channel_attention input");
  const Tensor squeezed = ops::adaptive_avg_pool_1x1(x).reshaped({x.dim(0)});
  const Tensor hidden = ops::elementwise(ops::UnaryOp::kRelu, w.fc1(squeezed));
  const Tensor gate = ops::elementwise(ops::UnaryOp::kSigmoid, w.fc2(hidden));
  return ops::scale_channels(x, gate);
}

Tensor qssm_block(const BurstFeatures& features, const QssmBlockWeights& w, std::span<const ScanDirection> directions) {
  check_currents(features.base, features.currents);
  if (features.currents.dim(0) < 1) throw Error(ErrorCode::kValidation, "qssm_block: burst needs at least 2 frames");

  const Tensor base_n = ops::layer_norm_channels(features.base, w.norm_gamma, w.norm_beta);
  std::vector<Tensor> normed;
  normed.reserve(features.currents.dim(0));
  for (std::size_t i = 0; i < features.currents.dim(0); ++i)
    normed.push_back(ops::layer_norm_channels(features.currents.slice0(i), w.norm_gamma, w.norm_beta));
  const Tensor currents_n = stack(normed);

  const Tensor new_base = fuse_base(base_n, currents_n, w);
  const Tensor merged = merge_currents(currents_n, w);

  Tensor y(features.base.shape());
  for (auto dir : directions) y = ops::add(y, qssm_scan_direction(new_base, merged, w, dir));
  y = channel_attention(w.out_proj.pointwise(y), w.ca);
  return ops::add(features.base, y);
}

}  // namespace qmamba::qssm
