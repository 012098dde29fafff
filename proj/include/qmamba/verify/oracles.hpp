#pragma once

// Brute-force reference implementations for the check suites and tests.
// Written directly from the defining formulas; never used by the model path.

#include <cstdint>

#include "qmamba/qssm.hpp"
#include "qmamba/random.hpp"
#include "qmamba/ssm.hpp"
#include "qmamba/tensor.hpp"

namespace qmamba::oracle {

/// Direct nested-loop cross-correlation with zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);
/// Scatter form: every input pixel spreads k-weighted copies into the output.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding,
                        std::size_t output_padding);
/// tokens [L, F_in] -> [L, F_out] by explicit dot products.
Tensor linear(const Tensor& tokens, const Tensor& weight, const Tensor* bias);
/// Per-pixel channel mixing of a [C, H, W] map.
Tensor pointwise(const Tensor& map, const Tensor& weight, const Tensor* bias);
/// Sequential recurrence written without the library's scan.
Tensor scan(const ssm::DiscreteSsm& disc, const Tensor& c_out, const Tensor& d_skip, const Tensor& x_seq);
/// Plain sum of elementwise products.
double inner(const Tensor& a, const Tensor& b);
/// Pixel index (row-major) visited at step t of a direction, from its definition.
std::size_t direction_pixel(std::size_t t, std::size_t height, std::size_t width, qssm::ScanDirection dir);

/// Random continuous SSM: a in -[0.5, 2], delta log-uniform in [1e-3, 1],
/// b, c, d standard normal.
ssm::SsmParams random_ssm(Rng& rng, std::size_t len, std::size_t channels, std::size_t state);
Tensor random_normal(Rng& rng, Shape shape);

}  // namespace qmamba::oracle
