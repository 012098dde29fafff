#include <cmath>

#include "helpers.hpp"
#include "qmamba/ops.hpp"
#include "qmamba/pipeline.hpp"

using namespace qmamba;
using namespace qmamba::pipeline;
using qt::randn;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.channels = 8;
  c.state = 4;
  c.num_qssm_blocks = 1;
  c.num_msfm_blocks = 1;
  return c;
}

synth::BurstStack make_burst(Rng& rng, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  synth::BurstStack b;
  b.frames = rng.uniform_tensor({n, c, h, w}, 0.0, 1.0);
  b.shifts.assign(n, synth::Shift{});
  return b;
}

// Box-blurred noise: enough texture for a well-defined correlation peak.
Tensor texture(Rng& rng, std::size_t h, std::size_t w) {
  const Tensor raw = rng.uniform_tensor({3, h, w}, 0.0, 1.0);
  Tensor t({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (std::size_t yy = y; yy < std::min(h, y + 2); ++yy)
          for (std::size_t xx = x; xx < std::min(w, x + 2); ++xx) s += raw.at({c, yy, xx});
        t.at({c, y, x}) = s;
      }
  return t;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("translate moves content with zero fill") {
    const Tensor f({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(translate(f, 1, 0) == Tensor({1, 2, 3}, {0, 1, 2, 0, 4, 5}));
    CHECK(translate(f, 0, -1) == Tensor({1, 2, 3}, {4, 5, 6, 0, 0, 0}));
    CHECK(translate(f, 0, 0) == f);
  }

  TEST_CASE("align with zero shifts is the identity") {
    Rng rng(1);
    const auto b = make_burst(rng, 4, 4, 6, 6);
    const auto a = align(b, &b.shifts);
    CHECK(a.frames == b.frames);
    for (const auto& s : a.shifts) CHECK(s == synth::Shift{});
  }

  TEST_CASE("align zero-fills the uncovered border") {
    Rng rng(2);
    auto b = make_burst(rng, 3, 1, 5, 8);
    const std::vector<synth::Shift> shifts = {{0, 0}, {3, 0}, {-3, 0}};
    const auto a = align(b, &shifts);
    for (std::size_t y = 0; y < 5; ++y) {
      for (std::size_t x = 0; x < 3; ++x) {
        CHECK(a.frames.at({1, 0, y, x}) == 0.0);
        CHECK(a.frames.at({2, 0, y, 7 - x}) == 0.0);
      }
      for (std::size_t x = 3; x < 8; ++x) CHECK(a.frames.at({1, 0, y, x}) == b.frames.at({1, 0, y, x - 3}));
      for (std::size_t x = 0; x < 5; ++x) CHECK(a.frames.at({2, 0, y, x}) == b.frames.at({2, 0, y, x + 3}));
    }
  }

  TEST_CASE("align stores sub-pixel residuals and rejects bad shifts") {
    Rng rng(3);
    auto b = make_burst(rng, 2, 3, 6, 6);
    std::vector<synth::Shift> s = {{0, 0}, {1.3, -0.6}};
    const auto a = align(b, &s);
    CHECK(a.shifts[1].dx == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(a.shifts[1].dy == doctest::Approx(0.4).epsilon(1e-12));
    s[1] = {6.2, 0};
    QT_CHECK_ERROR(align(b, &s), ErrorCode::kValidation);
    s[1] = {std::nan(""), 0};
    QT_CHECK_ERROR(align(b, &s), ErrorCode::kValidation);
    s.pop_back();
    QT_CHECK_ERROR(align(b, &s), ErrorCode::kValidation);
  }

  TEST_CASE("phase correlation recovers integer shifts") {
    Rng rng(4);
    const Tensor ref = texture(rng, 48, 48);
    for (int trial = 0; trial < 40; ++trial) {
      const long sx = static_cast<long>(rng.next_u64() % 17) - 8;
      const long sy = static_cast<long>(rng.next_u64() % 17) - 8;
      // frame(p) = ref(p + s), edge-clamped
      const Tensor frame = synth::shift_image(ref, static_cast<double>(sx), static_cast<double>(sy));
      const auto est = estimate_shift(ref, frame);
      CHECK(est.dx == static_cast<double>(sx));
      CHECK(est.dy == static_cast<double>(sy));
    }
    const auto zero = estimate_shift(ref, ref);
    CHECK(zero == synth::Shift{});
  }

  TEST_CASE("forward output shape") {
    ModelConfig cfg = small_config();
    const Model m = Model::init(cfg, 11);
    Rng rng(5);
    const auto b = make_burst(rng, 14, 4, 24, 24);
    CHECK(forward(b, m, cfg).shape() == Shape{3, 96, 96});

    cfg.scale = 2;
    cfg.input_mode = synth::InputMode::kRgb3;
    cfg.burst_size = 3;
    const Model m2 = Model::init(cfg, 11);
    const auto b2 = make_burst(rng, 3, 3, 10, 7);
    CHECK(forward(b2, m2, cfg).shape() == Shape{3, 20, 14});
  }

  TEST_CASE("zero network with head bias gives a constant image") {
    const ModelConfig cfg = small_config();
    Model m = Model::zeros(cfg);
    REQUIRE(m.skip_scale[0] == 0.0);
    m.head_bias = Tensor({3}, {0.1, -0.2, 0.7});
    Rng rng(6);
    const Tensor y = forward(make_burst(rng, 14, 4, 6, 6), m, cfg);
    REQUIRE(y.shape() == Shape{3, 24, 24});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 24 * 24; ++p) CHECK(y[c * 576 + p] == m.head_bias[c]);
  }

  TEST_CASE("global skip") {
    const Tensor flat = Tensor::full({4, 3, 3}, 0.25);
    const Tensor s = global_skip(flat, synth::InputMode::kRaw4, 4);
    CHECK(s.shape() == Shape{3, 24, 24});
    CHECK(max_abs_diff(s, Tensor::full({3, 24, 24}, 0.25)) <= 1e-15);
    CHECK(global_skip(Tensor({3, 5, 4}), synth::InputMode::kRgb3, 2).shape() == Shape{3, 10, 8});
  }

  TEST_CASE("forward is deterministic") {
    const ModelConfig cfg = small_config();
    Rng rng(7);
    const auto b = make_burst(rng, 14, 4, 8, 8);
    const Tensor a = forward(b, Model::init(cfg, 3), cfg);
    CHECK(forward(b, Model::init(cfg, 3), cfg) == a);
    CHECK_FALSE(forward(b, Model::init(cfg, 4), cfg) == a);
  }

  TEST_CASE("burst must match the config") {
    const ModelConfig cfg = small_config();
    const Model m = Model::init(cfg, 1);
    Rng rng(8);
    QT_CHECK_ERROR(forward(make_burst(rng, 5, 4, 6, 6), m, cfg), ErrorCode::kShape);
    QT_CHECK_ERROR(forward(make_burst(rng, 14, 3, 6, 6), m, cfg), ErrorCode::kShape);
  }

  TEST_CASE("weights round trip through the tensor map") {
    const ModelConfig cfg = small_config();
    const Model m = Model::init(cfg, 5);
    const TensorMap map = to_tensor_map(m);
    const auto specs = declare_weights(cfg);
    REQUIRE(map.size() == specs.size());
    for (const auto& s : specs) {
      REQUIRE(map.contains(s.name));
      CHECK(map.at(s.name).shape() == s.shape);
    }
    CHECK(to_tensor_map(model_from_tensors(map, cfg)) == map);

    auto missing = map;
    missing.erase("head.bias");
    QT_CHECK_ERROR(model_from_tensors(missing, cfg), ErrorCode::kWeightMismatch);
    auto bad = map;
    bad["head.bias"] = Tensor({4});
    QT_CHECK_ERROR(model_from_tensors(bad, cfg), ErrorCode::kWeightMismatch);
    auto extra = map;
    extra["stray"] = Tensor({1});
    QT_CHECK_ERROR(model_from_tensors(extra, cfg), ErrorCode::kWeightMismatch);
  }

  TEST_CASE("config validation") {
    ModelConfig c = small_config();
    CHECK_NOTHROW(c.validate());
    c.burst_size = 1;
    QT_CHECK_ERROR(c.validate(), ErrorCode::kValidation);
    c = small_config();
    c.scale = 3;
    QT_CHECK_ERROR(c.validate(), ErrorCode::kValidation);
    c = small_config();
    c.channels = 2;
    QT_CHECK_ERROR(c.validate(), ErrorCode::kValidation);
  }

  TEST_CASE("reference pipelines") {
    synth::BurstOptions o;
    o.n_frames = 4;
    o.max_shift = 0.0;
    o.gamma = 1.0;
    Rng rng(9);
    const Tensor hr = rng.uniform_tensor({3, 32, 32}, 0.0, 1.0);
    const auto sb = synth::generate_burst(hr, o);
    // identical noise-free frames: averaging changes nothing
    CHECK(max_abs_diff(average_then_bicubic(sb.burst, 4), single_frame_bicubic(sb.burst, 4)) <= 1e-12);
    CHECK(single_frame_bicubic(sb.burst, 4).shape() == synth::eval_target(hr, o.input_mode).shape());
  }
}
