#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qmamba/adaup.hpp"
#include "qmamba/msfm.hpp"
#include "qmamba/qssm.hpp"
#include "qmamba/synthburst.hpp"
#include "qmamba/weights_io.hpp"

namespace qmamba::pipeline {

struct ModelConfig {
  std::size_t burst_size = 14;
  std::size_t scale = 4;
  std::size_t channels = 32;
  std::size_t state = 16;
  std::size_t num_qssm_blocks = 2;
  std::size_t num_msfm_blocks = 2;
  synth::InputMode input_mode = synth::InputMode::kRaw4;

  /// Throws kValidation: N >= 2, scale in {2, 4}, positive dims.
  void validate() const;
};

/// Every learnable tensor of the network.
///   shallow.weight [C, C_in, 3, 3], shallow.bias [C]
///   qssm.<b>.*, msfm.<b>.*, adaup.<i>.*
///   head.weight [3, C, 3, 3], head.bias [3]
///   skip.scale [1]   gain of the bilinear global skip
struct Model {
  Tensor shallow_weight;
  Tensor shallow_bias;
  std::vector<qssm::QssmBlockWeights> qssm;
  std::vector<msfm::MsfmWeights> msfm;
  adaup::AdaUpWeights adaup;
  Tensor head_weight;
  Tensor head_bias;
  Tensor skip_scale;

  static Model init(const ModelConfig& config, std::uint64_t seed);
  /// All tensors zero (A = -1 through a_log = 0).
  static Model zeros(const ModelConfig& config);

  void visit(const ParamVisitor& fn);
};

/// Names and shapes in canonical order.
std::vector<TensorSpec> declare_weights(const ModelConfig& config);
TensorMap to_tensor_map(const Model& model);
/// Throws kWeightMismatch naming the first missing, misshapen or unexpected tensor.
Model model_from_tensors(const TensorMap& tensors, const ModelConfig& config);

/// out(p) = frame(p - (dx, dy)) with zero fill, integer offsets.
Tensor translate(const Tensor& frame, long dx, long dy);

/// Integer shift s with frame(p) ~ ref(p + s), from the peak of the
/// Hann-windowed phase correlation of channel means.
synth::Shift estimate_shift(const Tensor& ref, const Tensor& frame);

/// Integer-pixel inverse translation of every frame by round(shift); the
/// sub-pixel residual shift - round(shift) is stored in the result. Null
/// `shifts` means estimate them by phase correlation against frame 0.
synth::BurstStack align(const synth::BurstStack& burst, const std::vector<synth::Shift>* shifts);

/// Base frame as RGB at frame resolution, bilinearly upsampled by `scale`
/// (raw4 frames are demosaiced first and land at 2x frame resolution).
Tensor global_skip(const Tensor& base_frame, synth::InputMode mode, std::size_t scale);

/// Network on an already aligned burst [N, C_in, h, w] -> [3, s*h', s*w'].
Tensor network(const Tensor& frames, const Model& model, const ModelConfig& config);

/// align (known shifts when the burst carries one per frame, else
/// estimated) followed by the network.
Tensor forward(const synth::BurstStack& burst, const Model& model, const ModelConfig& config);

/// Degenerate pipelines used as reference points. Both return RGB at the
/// model's output resolution, mapped back through x^(1/gamma).
/// Mean of the aligned frames, then bicubic upsampling.
Tensor average_then_bicubic(const synth::BurstStack& burst, std::size_t scale);
/// Base frame only, bicubic upsampling.
Tensor single_frame_bicubic(const synth::BurstStack& burst, std::size_t scale);

}  // namespace qmamba::pipeline
