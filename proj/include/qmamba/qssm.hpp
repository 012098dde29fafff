#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "qmamba/layers.hpp"
#include "qmamba/ssm.hpp"

namespace qmamba::qssm {

/// Token orderings of an H x W map, L = H * W.
///  row-fwd: rows top to bottom, each left to right
///  row-bwd: rows top to bottom, each right to left (row-fwd of the horizontal mirror)
///  col-fwd: columns left to right, each top to bottom
///  col-bwd: columns left to right, each bottom to top (col-fwd of the vertical mirror)
enum class ScanDirection { kRowForward, kRowBackward, kColForward, kColBackward };

inline constexpr std::array<ScanDirection, 4> kAllDirections = {
    ScanDirection::kRowForward, ScanDirection::kRowBackward, ScanDirection::kColForward, ScanDirection::kColBackward};

std::string_view to_string(ScanDirection dir);
/// Accepts "row-fwd", "row-bwd", "col-fwd", "col-bwd".
ScanDirection parse_direction(std::string_view tag);

/// order[t] = row-major pixel index visited at step t.
std::vector<std::size_t> scan_order(std::size_t height, std::size_t width, ScanDirection dir);
/// [C, H, W] -> [L, C] in scan order.
Tensor to_tokens(const Tensor& map, ScanDirection dir);
/// Inverse of to_tokens.
Tensor from_tokens(const Tensor& tokens, ScanDirection dir, std::size_t height, std::size_t width);

/// Frame 0 of the burst is the base; the rest are current frames.
struct BurstFeatures {
  Tensor base;      // [C, H, W]
  Tensor currents;  // [N-1, C, H, W]

  std::size_t num_frames() const { return currents.dim(0) + 1; }
};

struct ChannelAttentionWeights {
  Linear fc1;  // C -> C/r
  Linear fc2;  // C/r -> C
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Channel attention reduction ratio.
inline constexpr std::size_t kReduction = 4;

struct QssmDims {
  std::size_t channels = 32;
  std::size_t state = 16;
  std::size_t frames = 14;
};

struct QssmBlockWeights {
  Tensor norm_gamma;  // [C]
  Tensor norm_beta;   // [C]
  Linear fuse_fc1;    // N*C -> 2C
  Linear fuse_fc2;    // 2C -> C
  Linear merge_proj;  // (N-1)*C -> C
  Linear x_proj;      // C -> C
  Linear delta_proj;  // C -> C, softplus applied after
  Linear b_proj;      // C -> C*N_state
  Tensor a_log;       // [C, N_state], A = -exp(a_log)
  Tensor c_readout;   // [C, N_state]
  Tensor d_skip;      // [C]
  Linear out_proj;    // C -> C
  ChannelAttentionWeights ca;

  static QssmBlockWeights init(const QssmDims& dims, Rng& rng);
  static QssmBlockWeights zeros(const QssmDims& dims);

  QssmDims dims() const;
  /// Continuous diagonal A = -exp(a_log).
  Tensor a() const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Concatenates base and currents on channels, runs the two-layer GELU MLP and
/// returns the new base frame.
Tensor fuse_base(const Tensor& base, const Tensor& currents, const QssmBlockWeights& w);

/// Projects the channel-concatenated current frames to one merged stream.
Tensor merge_currents(const Tensor& currents, const QssmBlockWeights& w);

struct QueryParams {
  Tensor delta_seq;  // [L, C]
  Tensor b_seq;      // [L, C, N_state]
};

/// Step size and input matrix generated from base tokens [L, C].
QueryParams query_params(const Tensor& base_tokens, const QssmBlockWeights& w);

/// One direction of the query scan: base gates (delta, B); the merged
/// current stream drives the state.
Tensor qssm_scan_direction(const Tensor& new_base, const Tensor& merged, const QssmBlockWeights& w,
                           ScanDirection dir);

Tensor channel_attention(const Tensor& x, const ChannelAttentionWeights& w);

/// Residual block: base + CA(out_proj(sum over directions of the query scan)).
/// Base and currents are layer-normalized over channels before fusion.
Tensor qssm_block(const BurstFeatures& features, const QssmBlockWeights& w,
                  std::span<const ScanDirection> directions = kAllDirections);

}  // namespace qmamba::qssm
