#include "qmamba/layers.hpp"

#include <cmath>

#include "qmamba/ops.hpp"

namespace qmamba {

Linear Linear::init(std::size_t f_in, std::size_t f_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(f_in));
  return Linear{rng.uniform_tensor({f_out, f_in}, -bound, bound), Tensor({f_out})};
}

Linear Linear::zeros(std::size_t f_in, std::size_t f_out) { return Linear{Tensor({f_out, f_in}), Tensor({f_out})}; }

Tensor Linear::operator()(const Tensor& tokens) const { return ops::linear(tokens, weight, &bias); }

Tensor Linear::pointwise(const Tensor& map) const { return ops::pointwise_linear(map, weight, &bias); }

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + "weight", weight);
  fn(prefix + "bias", bias);
}

}  // namespace qmamba
