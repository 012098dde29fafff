#include "qmamba/pipeline.hpp"

#include <fftw3.h>

#include <cmath>
#include <numbers>
#include <set>

#include "qmamba/ops.hpp"
#include "qmamba/random.hpp"

namespace qmamba::pipeline {

using synth::InputMode;
using synth::Shift;

void ModelConfig::validate() const {
  if (burst_size < 2) throw Error(ErrorCode::kValidation, "burst_size must be >= 2, got " + std::to_string(burst_size));
  if (scale != 2 && scale != 4) throw Error(ErrorCode::kValidation, "scale must be 2 or 4, got " + std::to_string(scale));
  if (channels == 0 || state == 0) throw Error(ErrorCode::kValidation, "channels and state must be positive");
  if (channels < qssm::kReduction)
    throw Error(ErrorCode::kValidation, "channels must be >= " + std::to_string(qssm::kReduction));
}

namespace {

qssm::QssmDims qssm_dims(const ModelConfig& c) { return {c.channels, c.state, c.burst_size}; }

}  // namespace

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t c = config.channels, cin = synth::input_channels(config.input_mode);
  Model m;
  std::uint64_t stream = 0;
  auto next_rng = [&] { return Rng(derive_seed(seed, stream++)); };

  Rng shallow = next_rng();
  const double sb = 1.0 / std::sqrt(static_cast<double>(cin * 9));
  m.shallow_weight = shallow.uniform_tensor({c, cin, 3, 3}, -sb, sb);
  m.shallow_bias = Tensor({c});
  for (std::size_t b = 0; b < config.num_qssm_blocks; ++b) {
    Rng r = next_rng();
    m.qssm.push_back(qssm::QssmBlockWeights::init(qssm_dims(config), r));
  }
  for (std::size_t b = 0; b < config.num_msfm_blocks; ++b) {
    Rng r = next_rng();
    m.msfm.push_back(msfm::MsfmWeights::init(c, config.state, r));
  }
  Rng up = next_rng();
  m.adaup = adaup::AdaUpWeights::init(c, config.scale, up);
  Rng head = next_rng();
  const double hb = 1.0 / std::sqrt(static_cast<double>(c * 9));
  m.head_weight = head.uniform_tensor({3, c, 3, 3}, -hb, hb);
  m.head_bias = Tensor({3});
  m.skip_scale = Tensor::scalar(1.0);
  return m;
}

Model Model::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t c = config.channels, cin = synth::input_channels(config.input_mode);
  Model m;
  m.shallow_weight = Tensor({c, cin, 3, 3});
  m.shallow_bias = Tensor({c});
  for (std::size_t b = 0; b < config.num_qssm_blocks; ++b) m.qssm.push_back(qssm::QssmBlockWeights::zeros(qssm_dims(config)));
  for (std::size_t b = 0; b < config.num_msfm_blocks; ++b) m.msfm.push_back(msfm::MsfmWeights::zeros(c, config.state));
  m.adaup = adaup::AdaUpWeights::zeros(c, config.scale);
  m.head_weight = Tensor({3, c, 3, 3});
  m.head_bias = Tensor({3});
  m.skip_scale = Tensor({1});
  return m;
}

void Model::visit(const ParamVisitor& fn) {
  fn("shallow.weight", shallow_weight);
  fn("shallow.bias", shallow_bias);
  for (std::size_t b = 0; b < qssm.size(); ++b) qssm[b].visit("qssm." + std::to_string(b) + ".", fn);
  for (std::size_t b = 0; b < msfm.size(); ++b) msfm[b].visit("msfm." + std::to_string(b) + ".", fn);
  adaup.visit("adaup.", fn);
  fn("head.weight", head_weight);
  fn("head.bias", head_bias);
  fn("skip.scale", skip_scale);
}

std::vector<TensorSpec> declare_weights(const ModelConfig& config) {
  Model m = Model::zeros(config);
  std::vector<TensorSpec> specs;
  m.visit([&](const std::string& name, Tensor& t) { specs.push_back({name, t.shape()}); });
  return specs;
}

TensorMap to_tensor_map(const Model& model) {
  Model copy = model;
  TensorMap map;
  copy.visit([&](const std::string& name, Tensor& t) { map.emplace(name, t); });
  return map;
}

Model model_from_tensors(const TensorMap& tensors, const ModelConfig& config) {
  Model m = Model::zeros(config);
  std::set<std::string> used;
  m.visit([&](const std::string& name, Tensor& t) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(ErrorCode::kWeightMismatch, "missing tensor '" + name + "'");
    if (it->second.shape() != t.shape())
      throw Error(ErrorCode::kWeightMismatch, "tensor '" + name + "' has shape " + shape_str(it->second.shape()) +
                                                  ", config expects " + shape_str(t.shape()));
    t = it->second;
    used.insert(name);
  });
  for (const auto& [name, t] : tensors)
    if (!used.contains(name)) throw Error(ErrorCode::kWeightMismatch, "unexpected tensor '" + name + "'");
  return m;
}

Tensor translate(const Tensor& frame, long dx, long dy) {
  expect_rank(frame, 3, "translate input");
  const std::size_t c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
  Tensor out(frame.shape());
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (long y = 0; y < lh; ++y) {
      const long sy = y - dy;
      if (sy < 0 || sy >= lh) continue;
      for (long x = 0; x < lw; ++x) {
        const long sx = x - dx;
        if (sx < 0 || sx >= lw) continue;
        out[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)] =
            frame[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
      }
    }
  return out;
}

namespace {

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : data(fftw_alloc_complex(n)) {
    if (!data) throw Error(ErrorCode::kNumeric, "fftw allocation failed");
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

// Channel mean, mean-removed and Hann-windowed, into a complex buffer.
void prepare_plane(const Tensor& img, fftw_complex* dst) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2), hw = h * w;
  std::vector<double> plane(hw, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < hw; ++p) plane[p] += img[ch * hw + p];
  double mean = 0.0;
  for (double& v : plane) {
    v /= static_cast<double>(c);
    mean += v;
  }
  mean /= static_cast<double>(hw);
  auto hann = [](std::size_t i, std::size_t n) {
    return 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      dst[y * w + x][0] = (plane[y * w + x] - mean) * hann(y, h) * hann(x, w);
      dst[y * w + x][1] = 0.0;
    }
}

}  // namespace

Shift estimate_shift(const Tensor& ref, const Tensor& frame) {
  expect_rank(ref, 3, "estimate_shift reference");
  expect_shape(frame, ref.shape(), "estimate_shift frame");
  const std::size_t h = ref.dim(1), w = ref.dim(2), n = h * w;
  FftwBuffer fr(n), ff(n), prod(n);
  prepare_plane(ref, fr.data);
  prepare_plane(frame, ff.data);
  const int ih = static_cast<int>(h), iw = static_cast<int>(w);
  fftw_plan pr = fftw_plan_dft_2d(ih, iw, fr.data, fr.data, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_plan pf = fftw_plan_dft_2d(ih, iw, ff.data, ff.data, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_plan pi = fftw_plan_dft_2d(ih, iw, prod.data, prod.data, FFTW_BACKWARD, FFTW_ESTIMATE);
  fftw_execute(pr);
  fftw_execute(pf);
  // Normalized cross-power spectrum F_ref * conj(F_frame): its inverse
  // transform peaks at s when frame(p) = ref(p + s).
  for (std::size_t k = 0; k < n; ++k) {
    const double re = fr.data[k][0] * ff.data[k][0] + fr.data[k][1] * ff.data[k][1];
    const double im = fr.data[k][1] * ff.data[k][0] - fr.data[k][0] * ff.data[k][1];
    const double mag = std::hypot(re, im);
    prod.data[k][0] = mag > 1e-30 ? re / mag : 0.0;
    prod.data[k][1] = mag > 1e-30 ? im / mag : 0.0;
  }
  fftw_execute(pi);
  fftw_destroy_plan(pr);
  fftw_destroy_plan(pf);
  fftw_destroy_plan(pi);

  std::size_t best = 0;
  for (std::size_t k = 1; k < n; ++k)
    if (prod.data[k][0] > prod.data[best][0]) best = k;
  long py = static_cast<long>(best / w), px = static_cast<long>(best % w);
  if (py > ih / 2) py -= ih;
  if (px > iw / 2) px -= iw;
  return Shift{static_cast<double>(px), static_cast<double>(py)};
}

synth::BurstStack align(const synth::BurstStack& burst, const std::vector<Shift>* shifts) {
  expect_rank(burst.frames, 4, "burst frames");
  const std::size_t n = burst.num_frames(), h = burst.frames.dim(2), w = burst.frames.dim(3);
  std::vector<Shift> used;
  if (shifts) {
    if (shifts->size() != n)
      throw Error(ErrorCode::kValidation, "align: " + std::to_string(shifts->size()) + " shifts for " +
                                              std::to_string(n) + " frames");
    used = *shifts;
  } else {
    const Tensor ref = burst.frame(0);
    used.push_back({});
    for (std::size_t i = 1; i < n; ++i) used.push_back(estimate_shift(ref, burst.frame(i)));
  }

  std::vector<Tensor> frames;
  std::vector<Shift> residual;
  for (std::size_t i = 0; i < n; ++i) {
    const Shift s = used[i];
    if (!std::isfinite(s.dx) || !std::isfinite(s.dy))
      throw Error(ErrorCode::kValidation, "align: non-finite shift for frame " + std::to_string(i));
    const double rx = std::round(s.dx), ry = std::round(s.dy);
    if (std::abs(rx) >= static_cast<double>(w) || std::abs(ry) >= static_cast<double>(h))
      throw Error(ErrorCode::kValidation, "align: shift (" + std::to_string(s.dx) + ", " + std::to_string(s.dy) +
                                              ") of frame " + std::to_string(i) + " exceeds frame size " +
                                              std::to_string(h) + "x" + std::to_string(w));
    const Tensor f = burst.frame(i);
    frames.push_back(rx == 0.0 && ry == 0.0 ? f : translate(f, static_cast<long>(rx), static_cast<long>(ry)));
    residual.push_back({s.dx - rx, s.dy - ry});
  }
  synth::BurstStack out;
  out.frames = stack(frames);
  out.shifts = std::move(residual);
  out.meta = burst.meta;
  return out;
}

Tensor global_skip(const Tensor& base_frame, InputMode mode, std::size_t scale) {
  expect_rank(base_frame, 3, "skip input");
  const Tensor rgb = mode == InputMode::kRaw4 ? synth::demosaic_bilinear(base_frame) : base_frame;
  return adaup::bilinear_resize(rgb, scale * rgb.dim(1), scale * rgb.dim(2));
}

Tensor network(const Tensor& frames, const Model& model, const ModelConfig& config) {
  config.validate();
  expect_rank(frames, 4, "network input");
  const std::size_t cin = synth::input_channels(config.input_mode);
  if (frames.dim(0) != config.burst_size || frames.dim(1) != cin)
    throw Error(ErrorCode::kShape, "burst " + shape_str(frames.shape()) + " does not match config (N=" +
                                       std::to_string(config.burst_size) + ", " +
                                       std::string(synth::to_string(config.input_mode)) + ")");
  if (model.qssm.size() != config.num_qssm_blocks || model.msfm.size() != config.num_msfm_blocks)
    throw Error(ErrorCode::kWeightMismatch, "model block counts do not match config");

  const std::size_t n = frames.dim(0);
  std::vector<Tensor> feats;
  for (std::size_t i = 0; i < n; ++i)
    feats.push_back(ops::add_channel_bias(ops::conv2d(frames.slice0(i), model.shallow_weight, {1, 1}),
                                          model.shallow_bias));
  qssm::BurstFeatures bf;
  bf.base = feats[0];
  bf.currents = stack(std::span<const Tensor>(feats).subspan(1));
  for (const auto& block : model.qssm) bf.base = qssm::qssm_block(bf, block);

  Tensor x = bf.base;
  for (const auto& block : model.msfm) x = ops::add(x, msfm::msfm_forward(x, block));
  x = adaup::adaup_forward(x, model.adaup, config.scale);
  Tensor y = ops::add_channel_bias(ops::conv2d(x, model.head_weight, {1, 1}), model.head_bias);

  const Tensor skip = global_skip(frames.slice0(0), config.input_mode,
                                  config.scale / synth::packing_factor(config.input_mode));
  return ops::add(y, ops::scale(skip, model.skip_scale[0]));
}

Tensor forward(const synth::BurstStack& burst, const Model& model, const ModelConfig& config) {
  const bool known = burst.shifts.size() == burst.num_frames();
  const synth::BurstStack aligned = align(burst, known ? &burst.shifts : nullptr);
  return network(aligned.frames, model, config);
}

namespace {

Tensor to_display(const Tensor& frame, const synth::BurstMeta& meta, std::size_t scale) {
  const Tensor rgb = meta.input_mode == InputMode::kRaw4 ? synth::demosaic_bilinear(frame) : frame;
  const std::size_t factor = scale / synth::packing_factor(meta.input_mode);
  Tensor up = factor == 1 ? rgb : adaup::bicubic_resize(rgb, factor * rgb.dim(1), factor * rgb.dim(2));
  return synth::apply_gamma(up, 1.0 / meta.gamma);
}

}  // namespace

Tensor average_then_bicubic(const synth::BurstStack& burst, std::size_t scale) {
  const std::size_t n = burst.num_frames();
  std::vector<Shift> shifts = burst.shifts;
  if (shifts.size() != n) {
    shifts.assign(1, Shift{});
    for (std::size_t i = 1; i < n; ++i) shifts.push_back(estimate_shift(burst.frame(0), burst.frame(i)));
  }
  const synth::BurstStack aligned = align(burst, &shifts);
  // Per-pixel mean over the frames that cover the pixel after alignment.
  const Tensor ones = Tensor::full(burst.frame(0).shape(), 1.0);
  Tensor sum = aligned.frame(0), count = ones;
  for (std::size_t i = 1; i < n; ++i) {
    sum = ops::add(sum, aligned.frame(i));
    count = ops::add(count, translate(ones, static_cast<long>(std::round(shifts[i].dx)),
                                      static_cast<long>(std::round(shifts[i].dy))));
  }
  Tensor mean = sum;
  for (std::size_t k = 0; k < mean.size(); ++k) mean[k] = sum[k] / count[k];
  return to_display(mean, burst.meta, scale);
}

Tensor single_frame_bicubic(const synth::BurstStack& burst, std::size_t scale) {
  return to_display(burst.frame(0), burst.meta, scale);
}

}  // namespace qmamba::pipeline
