#pragma once

#include "qmamba/layers.hpp"
#include "qmamba/ssm.hpp"

namespace qmamba::msfm {

/// Self-conditioned selective scan: the same tokens produce (delta, B) and
/// drive the state.
struct SelfScanWeights {
  Linear delta_proj;  // C -> C, softplus applied after
  Linear b_proj;      // C -> C*N
  Tensor a_log;       // [C, N], A = -exp(a_log)
  Tensor c_readout;   // [C, N]
  Tensor d_skip;      // [C]

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Single-head attention with channels as tokens and flattened pixels as features.
struct ChannelTransformerWeights {
  Tensor q;            // [C, C] pointwise projections, no bias
  Tensor k;
  Tensor v;
  Tensor out;
  Tensor temperature;  // [1]

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct MsfmWeights {
  Tensor conv_k3;  // [C, C, 3, 3]
  SelfScanWeights ssm_h;
  SelfScanWeights ssm_v;
  ChannelTransformerWeights attn;
  Tensor balance;  // [3] = (w1, w2, w3)

  static MsfmWeights init(std::size_t channels, std::size_t state, Rng& rng);
  static MsfmWeights zeros(std::size_t channels, std::size_t state);

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// 3x3 convolution, stride 1, padding 1.
Tensor conv_branch(const Tensor& x, const MsfmWeights& w);

/// Runs an independent self-scan over every row (left to right) of a [C, H, W] map.
Tensor scan_rows(const Tensor& x, const SelfScanWeights& w);
/// Runs an independent self-scan over every column (top to bottom).
Tensor scan_cols(const Tensor& x, const SelfScanWeights& w);

/// scan_rows(x, ssm_h) + scan_cols(x, ssm_v).
Tensor ssm_branch(const Tensor& x, const MsfmWeights& w);

/// softmax over channels of temperature * <q_i/|q_i|, k_j/|k_j|>, applied to v, then out.
Tensor transformer_branch(const Tensor& x, const MsfmWeights& w);

/// w1 * conv + w2 * ssm + w3 * transformer.
Tensor msfm_forward(const Tensor& x, const MsfmWeights& w);

}  // namespace qmamba::msfm
