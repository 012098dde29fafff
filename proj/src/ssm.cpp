#include "qmamba/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qmamba::ssm {

namespace {

struct Dims {
  std::size_t len, channels, state;
};

Dims check_scan_shapes(const DiscreteSsm& disc, const Tensor& c_out, const Tensor& d_skip, const Tensor& x_seq) {
  expect_rank(disc.abar_seq, 3, "abar_seq");
  const Dims d{disc.abar_seq.dim(0), disc.abar_seq.dim(1), disc.abar_seq.dim(2)};
  expect_shape(disc.bbar_seq, disc.abar_seq.shape(), "bbar_seq");
  expect_rank(x_seq, 2, "x_seq");
  if (x_seq.dim(0) != d.len)
    throw Error(ErrorCode::kShape, "selective_scan: sequence length " + std::to_string(x_seq.dim(0)) +
                                       " of x_seq does not match " + std::to_string(d.len) + " of the discretization");
  expect_shape(x_seq, {d.len, d.channels}, "x_seq");
  expect_shape(c_out, {d.channels, d.state}, "c_out");
  expect_shape(d_skip, {d.channels}, "d_skip");
  return d;
}

}  // namespace

Tensor default_a(std::size_t channels, std::size_t state) {
  Tensor a({channels, state});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t n = 0; n < state; ++n) a[c * state + n] = -static_cast<double>(n + 1);
  return a;
}

double zoh_input_factor(double z) {
  if (std::abs(z) < 1e-8) return 1.0 + z / 2.0 + z * z / 6.0;
  return std::expm1(z) / z;
}

DiscreteSsm zoh_discretize(const Tensor& a, const Tensor& b_seq, const Tensor& delta_seq) {
  expect_rank(a, 2, "A");
  const std::size_t channels = a.dim(0), state = a.dim(1);
  expect_rank(delta_seq, 2, "delta_seq");
  const std::size_t len = delta_seq.dim(0);
  expect_shape(delta_seq, {len, channels}, "delta_seq");
  expect_shape(b_seq, {len, channels, state}, "b_seq");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i] < 0.0))
      throw Error(ErrorCode::kValidation, "zoh_discretize: A entry " + std::to_string(i) + " = " +
                                              std::to_string(a[i]) + " is not strictly negative");
  for (std::size_t i = 0; i < delta_seq.size(); ++i)
    if (!(delta_seq[i] > 0.0) || !std::isfinite(delta_seq[i]))
      throw Error(ErrorCode::kValidation, "zoh_discretize: delta entry " + std::to_string(i) + " = " +
                                              std::to_string(delta_seq[i]) + " is not strictly positive");

  DiscreteSsm disc{Tensor({len, channels, state}), Tensor({len, channels, state})};
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double delta = delta_seq[t * channels + c];
      for (std::size_t n = 0; n < state; ++n) {
        const std::size_t idx = (t * channels + c) * state + n;
        const double z = delta * a[c * state + n];
        disc.abar_seq[idx] = std::exp(z);
        disc.bbar_seq[idx] = zoh_input_factor(z) * delta * b_seq[idx];
      }
    }
  }
  return disc;
}

ScanResult selective_scan(const DiscreteSsm& disc, const Tensor& c_out, const Tensor& d_skip, const Tensor& x_seq) {
  const auto [len, channels, state] = check_scan_shapes(disc, c_out, d_skip, x_seq);
  ScanResult out{Tensor({len, channels}), Tensor({channels, state})};
  auto h = out.h_final.data();
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double x = x_seq[t * channels + c];
      const std::size_t base = (t * channels + c) * state;
      double acc = 0.0;
      for (std::size_t n = 0; n < state; ++n) {
        double& hn = h[c * state + n];
        hn = disc.abar_seq[base + n] * hn + disc.bbar_seq[base + n] * x;
        acc += c_out[c * state + n] * hn;
      }
      out.y[t * channels + c] = acc + d_skip[c] * x;
    }
  }
  return out;
}

Tensor closed_form_scan(const SsmParams& params, const Tensor& x_seq) {
  // Validates the same contract as zoh_discretize + selective_scan.
  const DiscreteSsm shape_probe = zoh_discretize(params.a, params.b_seq, params.delta_seq);
  const auto [len, channels, state] = check_scan_shapes(shape_probe, params.c_out, params.d_skip, x_seq);

  Tensor y({len, channels});
  std::vector<double> decay(len), input(len);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t n = 0; n < state; ++n) {
      const double a = params.a[c * state + n];
      for (std::size_t j = 0; j < len; ++j) {
        const double delta_j = params.delta_seq[j * channels + c];
        decay[j] = std::exp(delta_j * a);
        input[j] = zoh_input_factor(delta_j * a) * delta_j * params.b_seq[(j * channels + c) * state + n] *
                   x_seq[j * channels + c];
      }
      const double c_n = params.c_out[c * state + n];
      for (std::size_t t = 0; t < len; ++t) {
        double prod = 1.0;  // prod_{i=j+1..t} exp(delta_i a)
        double h = 0.0;
        for (std::size_t j = t + 1; j-- > 0;) {
          h += prod * input[j];
          prod *= decay[j];
        }
        y[t * channels + c] += c_n * h;
      }
    }
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < channels; ++c) y[t * channels + c] += params.d_skip[c] * x_seq[t * channels + c];
  return y;
}

ScanGrads selective_scan_backward(const DiscreteSsm& disc, const Tensor& c_out, const Tensor& d_skip,
                                  const Tensor& x_seq, const Tensor& dy, BackwardOptions options) {
  const auto [len, channels, state] = check_scan_shapes(disc, c_out, d_skip, x_seq);
  expect_shape(dy, {len, channels}, "upstream gradient");
  const std::size_t cn = channels * state;

  ScanGrads g{Tensor(disc.abar_seq.shape()), Tensor(disc.bbar_seq.shape()), Tensor(c_out.shape()),
              Tensor(d_skip.shape()), Tensor(x_seq.shape())};

  // Segment length: the whole sequence when caching, ~sqrt(L) when recomputing.
  std::size_t seg = len;
  if (len * state > options.recompute_threshold)
    seg = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(len)))));
  const std::size_t num_segs = (len + seg - 1) / seg;

  // checkpoints[m] holds h after token m*seg (h before the segment's first token).
  std::vector<std::vector<double>> checkpoints(num_segs, std::vector<double>(cn, 0.0));
  {
    std::vector<double> h(cn, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      if (t % seg == 0) checkpoints[t / seg] = h;
      const double* ab = disc.abar_seq.data().data() + t * cn;
      const double* bb = disc.bbar_seq.data().data() + t * cn;
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t n = 0; n < state; ++n) {
          const std::size_t i = c * state + n;
          h[i] = ab[i] * h[i] + bb[i] * x_seq[t * channels + c];
        }
    }
  }

  std::vector<double> grad_h(cn, 0.0);
  std::vector<double> states((seg + 1) * cn);
  for (std::size_t m = num_segs; m-- > 0;) {
    const std::size_t start = m * seg;
    const std::size_t stop = std::min(len, start + seg);
    // states[k] = h after token start + k - 1; states[0] is the checkpoint.
    std::copy(checkpoints[m].begin(), checkpoints[m].end(), states.begin());
    for (std::size_t t = start; t < stop; ++t) {
      const double* prev = states.data() + (t - start) * cn;
      double* cur = states.data() + (t - start + 1) * cn;
      const double* ab = disc.abar_seq.data().data() + t * cn;
      const double* bb = disc.bbar_seq.data().data() + t * cn;
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t n = 0; n < state; ++n) {
          const std::size_t i = c * state + n;
          cur[i] = ab[i] * prev[i] + bb[i] * x_seq[t * channels + c];
        }
    }
    for (std::size_t t = stop; t-- > start;) {
      const double* prev = states.data() + (t - start) * cn;
      const double* cur = states.data() + (t - start + 1) * cn;
      const double* ab = disc.abar_seq.data().data() + t * cn;
      const double* bb = disc.bbar_seq.data().data() + t * cn;
      for (std::size_t c = 0; c < channels; ++c) {
        const double gy = dy[t * channels + c];
        const double x = x_seq[t * channels + c];
        g.d_skip[c] += gy * x;
        double gx = d_skip[c] * gy;
        for (std::size_t n = 0; n < state; ++n) {
          const std::size_t i = c * state + n;
          g.c_out[i] += gy * cur[i];
          const double gh = grad_h[i] + c_out[i] * gy;
          gx += gh * bb[i];
          g.abar[t * cn + i] = gh * prev[i];
          g.bbar[t * cn + i] = gh * x;
          grad_h[i] = gh * ab[i];
        }
        g.x[t * channels + c] = gx;
      }
    }
  }
  return g;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::kValidation, "finite_diff_grad: eps must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = f(probe);
    probe[i] = orig - eps;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error(ErrorCode::kNumeric, "finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

}  // namespace qmamba::ssm
