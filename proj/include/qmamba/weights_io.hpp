#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qmamba/tensor.hpp"

namespace qmamba {

/// Named tensors keyed by hierarchical name, e.g. "qssm.0.delta_proj.weight".
using TensorMap = std::map<std::string, Tensor>;

enum class DType { kF64, kF32 };

struct TensorSpec {
  std::string name;
  Shape shape;
};

// QMBW container, little-endian throughout:
//   "QMBW" | u8 version = 1 | u32 header length | UTF-8 JSON header
//   [{"name": ..., "dtype": "f64"|"f32", "shape": [...]}, ...]
//   | payloads concatenated in header order.
inline constexpr char kWeightsMagic[4] = {'Q', 'M', 'B', 'W'};
inline constexpr std::uint8_t kWeightsVersion = 1;

std::vector<std::uint8_t> encode_weights(const TensorMap& tensors, DType dtype = DType::kF64);

/// Parses a container. When `expected` is non-null the header must list
/// exactly those tensors (count checked first: ErrorCode::kHeader; then
/// each name/shape: ErrorCode::kWeightMismatch).
TensorMap decode_weights(std::span<const std::uint8_t> bytes, const std::vector<TensorSpec>* expected = nullptr);

void save_weights(const TensorMap& tensors, const std::filesystem::path& path, DType dtype = DType::kF64);
TensorMap load_weights(const std::filesystem::path& path, const std::vector<TensorSpec>* expected = nullptr);

}  // namespace qmamba
