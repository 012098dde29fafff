#include "qmamba/verify/oracles.hpp"

#include <cmath>

namespace qmamba::oracle {

Tensor conv2d(const Tensor& in, const Tensor& k, std::size_t stride, std::size_t padding) {
  const std::size_t ci = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t co = k.dim(0), ks = k.dim(2);
  const std::size_t oh = (h + 2 * padding - ks) / stride + 1, ow = (w + 2 * padding - ks) / stride + 1;
  Tensor out({co, oh, ow});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t ky = 0; ky < ks; ++ky)
            for (std::size_t kx = 0; kx < ks; ++kx) {
              const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(padding);
              const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(padding);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              s += in.at({c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)}) * k.at({o, c, ky, kx});
            }
        out.at({o, y, x}) = s;
      }
  return out;
}

Tensor conv_transpose2d(const Tensor& in, const Tensor& k, std::size_t stride, std::size_t padding,
                        std::size_t output_padding) {
  const std::size_t ci = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t co = k.dim(1), ks = k.dim(2);
  const std::size_t oh = (h - 1) * stride + ks + output_padding - 2 * padding;
  const std::size_t ow = (w - 1) * stride + ks + output_padding - 2 * padding;
  Tensor out({co, oh, ow});
  for (std::size_t c = 0; c < ci; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t o = 0; o < co; ++o)
          for (std::size_t ky = 0; ky < ks; ++ky)
            for (std::size_t kx = 0; kx < ks; ++kx) {
              const long oy = static_cast<long>(y * stride + ky) - static_cast<long>(padding);
              const long ox = static_cast<long>(x * stride + kx) - static_cast<long>(padding);
              if (oy < 0 || ox < 0 || oy >= static_cast<long>(oh) || ox >= static_cast<long>(ow)) continue;
              out.at({o, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox)}) +=
                  in.at({c, y, x}) * k.at({c, o, ky, kx});
            }
  return out;
}

Tensor linear(const Tensor& tokens, const Tensor& weight, const Tensor* bias) {
  const std::size_t len = tokens.dim(0), fi = tokens.dim(1), fo = weight.dim(0);
  Tensor out({len, fo});
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t o = 0; o < fo; ++o) {
      double s = bias ? (*bias)[o] : 0.0;
      for (std::size_t i = 0; i < fi; ++i) s += weight.at({o, i}) * tokens.at({t, i});
      out.at({t, o}) = s;
    }
  return out;
}

Tensor pointwise(const Tensor& map, const Tensor& weight, const Tensor* bias) {
  const std::size_t ci = map.dim(0), h = map.dim(1), w = map.dim(2), co = weight.dim(0);
  Tensor out({co, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t o = 0; o < co; ++o) {
        double s = bias ? (*bias)[o] : 0.0;
        for (std::size_t i = 0; i < ci; ++i) s += weight.at({o, i}) * map.at({i, y, x});
        out.at({o, y, x}) = s;
      }
  return out;
}

Tensor scan(const ssm::DiscreteSsm& disc, const Tensor& c_out, const Tensor& d_skip, const Tensor& x_seq) {
  const std::size_t len = x_seq.dim(0), ch = x_seq.dim(1), n = c_out.dim(1);
  Tensor y({len, ch});
  std::vector<double> h(ch * n, 0.0);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        h[c * n + i] = disc.abar_seq.at({t, c, i}) * h[c * n + i] + disc.bbar_seq.at({t, c, i}) * x_seq.at({t, c});
        s += c_out.at({c, i}) * h[c * n + i];
      }
      y.at({t, c}) = s + d_skip[c] * x_seq.at({t, c});
    }
  return y;
}

double inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t direction_pixel(std::size_t t, std::size_t height, std::size_t width, qssm::ScanDirection dir) {
  switch (dir) {
    case qssm::ScanDirection::kRowForward: return t;
    case qssm::ScanDirection::kRowBackward: return (t / width) * width + (width - 1 - t % width);
    case qssm::ScanDirection::kColForward: return (t % height) * width + t / height;
    case qssm::ScanDirection::kColBackward: return (height - 1 - t % height) * width + t / height;
  }
  return 0;
}

Tensor random_normal(Rng& rng, Shape shape) { return rng.normal_tensor(std::move(shape)); }

ssm::SsmParams random_ssm(Rng& rng, std::size_t len, std::size_t channels, std::size_t state) {
  ssm::SsmParams p;
  p.a = rng.uniform_tensor({channels, state}, -2.0, -0.5);
  p.b_seq = rng.normal_tensor({len, channels, state});
  p.c_out = rng.normal_tensor({channels, state});
  p.d_skip = rng.normal_tensor({channels});
  p.delta_seq = Tensor({len, channels});
  for (double& v : p.delta_seq.data()) v = std::exp(rng.uniform(std::log(1e-3), 0.0));
  return p;
}

}  // namespace qmamba::oracle
