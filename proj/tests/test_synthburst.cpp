#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "qmamba/pipeline.hpp"
#include "qmamba/synthburst.hpp"

using namespace qmamba;
using namespace qmamba::synth;
using qt::randn;

namespace {

// Smooth procedural scene in [0, 1].
Tensor scene(std::size_t h, std::size_t w, double phase = 0.0) {
  Tensor t({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t.at({c, y, x}) = 0.5 + 0.3 * std::sin(0.21 * static_cast<double>(x) + phase + static_cast<double>(c)) *
                                    std::cos(0.17 * static_cast<double>(y) - 0.4 * static_cast<double>(c));
  return t;
}

double mean_abs_diff(const Tensor& a, const Tensor& b, std::size_t border) {
  const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = border; y + border < h; ++y)
      for (std::size_t x = border; x + border < w; ++x) {
        s += std::abs(a.at({ch, y, x}) - b.at({ch, y, x}));
        ++n;
      }
  return s / static_cast<double>(n);
}

}  // namespace

TEST_SUITE("synthburst") {
  TEST_CASE("no-op chain reproduces the mosaic exactly") {
    const Tensor hr = scene(16, 12);
    BurstOptions o;
    o.n_frames = 4;
    o.scale = 1;
    o.max_shift = 0.0;
    o.gamma = 1.0;
    const auto sb = generate_burst(hr, o);
    REQUIRE(sb.burst.frames.shape() == Shape{4, 4, 8, 6});
    const Tensor m = mosaic(hr);
    for (std::size_t i = 0; i < 4; ++i) CHECK(sb.burst.frame(i) == m);
    CHECK(sb.gt == hr);
  }

  TEST_CASE("same seed, same burst; other seed, other burst") {
    const Tensor hr = scene(32, 32);
    BurstOptions o;
    o.n_frames = 5;
    o.noise = {0.02, 0.01};
    o.seed = 9;
    const auto a = generate_burst(hr, o), b = generate_burst(hr, o);
    CHECK(a.burst.frames == b.burst.frames);
    CHECK(a.burst.shifts == b.burst.shifts);
    o.seed = 10;
    CHECK_FALSE(generate_burst(hr, o).burst.frames == a.burst.frames);
  }

  TEST_CASE("shifts: base frame fixed, others bounded") {
    BurstOptions o;
    o.n_frames = 14;
    o.max_shift = 2.5;
    const auto sb = generate_burst(scene(32, 32), o);
    CHECK(sb.burst.shifts[0] == Shift{0.0, 0.0});
    for (const auto& s : sb.burst.shifts) {
      CHECK(std::abs(s.dx) <= 2.5);
      CHECK(std::abs(s.dy) <= 2.5);
    }
    CHECK(sb.burst.meta.max_shift == 2.5);
  }

  TEST_CASE("read noise statistics") {
    const Tensor hr = Tensor::full({3, 400, 400}, 0.5);
    BurstOptions o;
    o.n_frames = 2;
    o.scale = 2;
    o.noise.sigma_read = 0.05;
    o.gamma = 1.0;
    const auto sb = generate_burst(hr, o);
    const Tensor f = sb.burst.frame(1);
    double s = 0.0, ss = 0.0;
    for (double v : f.data()) {
      s += v - 0.5;
      ss += (v - 0.5) * (v - 0.5);
    }
    const double n = static_cast<double>(f.size());
    CHECK(f.size() >= 10000);
    const double sd = std::sqrt(ss / n - (s / n) * (s / n));
    CHECK(sd >= 0.045);
    CHECK(sd <= 0.055);
  }

  TEST_CASE("area downsampling preserves the mean") {
    Rng rng(1);
    const Tensor x = rng.uniform_tensor({3, 24, 16}, 0.0, 1.0);
    const Tensor d = area_downsample(x, 4);
    double a = 0.0, b = 0.0;
    for (double v : x.data()) a += v;
    for (double v : d.data()) b += v;
    CHECK(std::abs(a / static_cast<double>(x.size()) - b / static_cast<double>(d.size())) <= 1e-12);
    QT_CHECK_ERROR(area_downsample(x, 5), ErrorCode::kValidation);
  }

  TEST_CASE("divisibility and parameter validation") {
    BurstOptions o;
    QT_CHECK_ERROR(generate_burst(scene(20, 24), o), ErrorCode::kValidation);
    o.n_frames = 1;
    QT_CHECK_ERROR(generate_burst(scene(24, 24), o), ErrorCode::kValidation);
    o.n_frames = 3;
    o.noise.sigma_read = -1.0;
    QT_CHECK_ERROR(generate_burst(scene(24, 24), o), ErrorCode::kValidation);
  }

  TEST_CASE("mosaic and demosaic") {
    const Tensor gray = Tensor::full({3, 6, 8}, 0.42);
    const Tensor packed = mosaic(gray);
    CHECK(packed.shape() == Shape{4, 3, 4});
    for (double v : packed.data()) CHECK(v == 0.42);
    const Tensor flat = demosaic_bilinear(packed);
    for (double v : flat.data()) CHECK(v == doctest::Approx(0.42).epsilon(1e-15));

    Tensor red({3, 4, 4});
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) red.at({0, y, x}) = 1.0;
    const Tensor back = demosaic_bilinear(mosaic(red));
    for (std::size_t y = 0; y < 4; y += 2)
      for (std::size_t x = 0; x < 4; x += 2) CHECK(back.at({0, y, x}) == 1.0);

    Rng rng(2);
    const Tensor x = rng.uniform_tensor({3, 8, 10}, 0.0, 1.0);
    const Tensor r = demosaic_bilinear(mosaic(x));
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t xx = 0; xx < 10; ++xx) {
        const std::size_t ch = y % 2 == 0 ? (xx % 2 == 0 ? 0 : 1) : (xx % 2 == 0 ? 1 : 2);
        CHECK(r.at({ch, y, xx}) == x.at({ch, y, xx}));
      }
    QT_CHECK_ERROR(mosaic(Tensor({3, 5, 4})), ErrorCode::kShape);
    QT_CHECK_ERROR(demosaic_bilinear(Tensor({3, 2, 2})), ErrorCode::kShape);
  }

  TEST_CASE("png round trips") {
    qt::TempDir dir;
    Rng rng(3);
    Tensor img = rng.uniform_tensor({3, 5, 7}, 0.0, 1.0);
    for (double& v : img.data()) v = std::round(v * 65535.0) / 65535.0;
    save_image(img, dir / "a16.png", 16);
    CHECK(max_abs_diff(load_image(dir / "a16.png"), img) == 0.0);

    save_image(img, dir / "a8.png", 8);
    CHECK(max_abs_diff(load_image(dir / "a8.png"), img) <= 1.0 / 510.0);

    const Tensor packed = rng.uniform_tensor({4, 3, 3}, 0.0, 1.0);
    save_image(packed, dir / "raw.png", 16);
    CHECK(load_image(dir / "raw.png").shape() == Shape{4, 3, 3});

    std::ofstream(dir / "junk.png") << "definitely not a png";
    QT_CHECK_ERROR(load_image(dir / "junk.png"), ErrorCode::kFormat);
    QT_CHECK_ERROR(load_image(dir / "missing.png"), ErrorCode::kIo);
  }

  TEST_CASE("stored shifts align a noise-free burst") {
    BurstOptions o;
    o.n_frames = 6;
    o.scale = 2;
    o.input_mode = InputMode::kRgb3;
    o.gamma = 1.0;
    o.max_shift = 3.0;
    o.seed = 4;
    const auto sb = generate_burst(scene(96, 96), o);
    const auto aligned = pipeline::align(sb.burst, &sb.burst.shifts);
    const Tensor base = sb.burst.frame(0);
    // first-order bound for a residual of at most half a pixel per axis
    double grad = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 4; y + 5 < 48; ++y)
        for (std::size_t x = 4; x + 5 < 48; ++x) {
          grad += 0.5 * (std::abs(base.at({c, y, x + 1}) - base.at({c, y, x})) +
                         std::abs(base.at({c, y + 1, x}) - base.at({c, y, x})));
          ++n;
        }
    grad /= static_cast<double>(n);
    for (std::size_t i = 1; i < 6; ++i) {
      const double before = mean_abs_diff(sb.burst.frame(i), base, 4);
      const double after = mean_abs_diff(aligned.frame(i), base, 4);
      CHECK(after <= before);
      CHECK(after <= grad * 1.05);
    }
  }
}
