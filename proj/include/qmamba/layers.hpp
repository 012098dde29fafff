#pragma once

#include <functional>
#include <string>

#include "qmamba/random.hpp"
#include "qmamba/tensor.hpp"

namespace qmamba {

/// Callback used to enumerate the named tensors of a weight struct.
using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor)>;

/// Affine layer; weight [F_out, F_in], bias [F_out].
struct Linear {
  Tensor weight;
  Tensor bias;

  /// Uniform(+-1/sqrt(F_in)) weights, zero bias.
  static Linear init(std::size_t f_in, std::size_t f_out, Rng& rng);
  static Linear zeros(std::size_t f_in, std::size_t f_out);

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  /// Over the last axis of `tokens`.
  Tensor operator()(const Tensor& tokens) const;
  /// At every pixel of a [C, H, W] map.
  Tensor pointwise(const Tensor& map) const;

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Applies `value` to every element of every tensor reachable through `visit`.
template <typename Weights>
void fill_all(Weights& w, double value) {
  w.visit("", [value](const std::string&, Tensor& t) {
    for (double& v : t.data()) v = value;
  });
}

}  // namespace qmamba
