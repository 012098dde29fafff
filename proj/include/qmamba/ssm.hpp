#pragma once

#include <functional>

#include "qmamba/tensor.hpp"

namespace qmamba::ssm {

// Shapes used throughout: L tokens, C feature channels, N state size.
// A is diagonal per channel and stored as its diagonal, [C, N].

/// Continuous parameters with token-dependent step and input matrix.
struct SsmParams {
  Tensor a;          // [C, N], strictly negative
  Tensor b_seq;      // [L, C, N]
  Tensor c_out;      // [C, N], static readout
  Tensor d_skip;     // [C]
  Tensor delta_seq;  // [L, C], strictly positive
};

struct DiscreteSsm {
  Tensor abar_seq;  // [L, C, N], entries in (0, 1)
  Tensor bbar_seq;  // [L, C, N]
};

/// Diagonal initialization a_n = -(n + 1), identical for every channel.
Tensor default_a(std::size_t channels, std::size_t state);

/// (e^z - 1) / z, switching to 1 + z/2 + z^2/6 when |z| < 1e-8.
double zoh_input_factor(double z);

/// Zero-order hold: Abar = exp(delta*a), Bbar = zoh_input_factor(delta*a) * delta * b.
DiscreteSsm zoh_discretize(const Tensor& a, const Tensor& b_seq, const Tensor& delta_seq);

struct ScanResult {
  Tensor y;        // [L, C]
  Tensor h_final;  // [C, N]
};

/// h_k = Abar_k * h_{k-1} + Bbar_k * x_k,  y_k = sum_n C[n] h_k[n] + D x_k,  h_0 = 0.
ScanResult selective_scan(const DiscreteSsm& disc, const Tensor& c_out, const Tensor& d_skip, const Tensor& x_seq);

/// O(L^2) expansion of the same recurrence from continuous parameters:
/// y_t = C sum_{j<=t} [prod_{i=j+1..t} exp(delta_i a)] f(delta_j) b_j x_j + D x_t.
/// Verification oracle only.
Tensor closed_form_scan(const SsmParams& params, const Tensor& x_seq);

struct ScanGrads {
  Tensor abar;   // [L, C, N]
  Tensor bbar;   // [L, C, N]
  Tensor c_out;  // [C, N]
  Tensor d_skip; // [C]
  Tensor x;      // [L, C]
};

struct BackwardOptions {
  /// When L * N exceeds this, states are recomputed per segment of ~sqrt(L)
  /// tokens from stored checkpoints instead of caching the whole trajectory.
  /// Both paths produce bitwise-identical gradients.
  std::size_t recompute_threshold = std::size_t{1} << 16;
};

/// Reverse-mode gradient of sum(dy * y) through selective_scan.
ScanGrads selective_scan_backward(const DiscreteSsm& disc, const Tensor& c_out, const Tensor& d_skip,
                                  const Tensor& x_seq, const Tensor& dy, BackwardOptions options = {});

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps);

}  // namespace qmamba::ssm
