#include <cmath>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "qmamba/cli.hpp"
#include "qmamba/synthburst.hpp"

using namespace qmamba;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome qm(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_scene(const fs::path& path, std::size_t h, std::size_t w) {
  Tensor t({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t.at({c, y, x}) = 0.5 + 0.4 * std::sin(0.3 * static_cast<double>(x + 7 * c)) * std::cos(0.2 * static_cast<double>(y));
  synth::save_image(t, path, 16);
}

// checksum column of each bench row
std::vector<std::string> checksums(const std::string& table) {
  std::vector<std::string> out;
  std::istringstream is(table);
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty() || !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
    out.push_back(line.substr(line.rfind(',') + 1));
  }
  return out;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

const std::vector<std::string> kSmall = {"--channels", "4", "--state", "2", "--qssm-blocks", "1", "--msfm-blocks", "1"};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("synth writes frames, gt and manifest deterministically") {
    qt::TempDir dir;
    fs::create_directories(dir / "hr");
    write_scene(dir / "hr" / "scene.png", 64, 64);
    const auto args = [&](const fs::path& out) {
      return std::vector<std::string>{"synth", "--input-dir", (dir / "hr").string(), "--out-dir", out.string(),
                                      "--frames", "14", "--seed", "7", "--sigma-read", "0.01"};
    };
    const auto r = qm(args(dir / "a"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::size_t pngs = 0;
    for (const auto& e : fs::directory_iterator(dir / "a" / "scene")) pngs += e.path().extension() == ".png";
    CHECK(pngs == 15);
    CHECK(fs::exists(dir / "a" / "scene" / "gt.png"));
    const auto burst = cli::load_burst(dir / "a" / "scene" / "manifest.json");
    CHECK(burst.frames.shape() == Shape{14, 4, 8, 8});
    CHECK(synth::load_image(dir / "a" / "scene" / "gt.png").shape() == Shape{3, 32, 32});

    REQUIRE(qm(args(dir / "b")).code == 0);
    CHECK(slurp(dir / "a" / "scene" / "manifest.json") == slurp(dir / "b" / "scene" / "manifest.json"));
    CHECK(slurp(dir / "a" / "scene" / "frame_013.png") == slurp(dir / "b" / "scene" / "frame_013.png"));
  }

  TEST_CASE("synth validation") {
    qt::TempDir dir;
    fs::create_directories(dir / "hr");
    write_scene(dir / "hr" / "x.png", 32, 32);
    auto r = qm({"synth", "--input-dir", (dir / "hr").string(), "--out-dir", (dir / "o").string(), "--frames", "1"});
    CHECK(r.code == 2);
    CHECK(r.err.find("2 frames") != std::string::npos);
    CHECK(lines(r.err) == 1);

    fs::create_directories(dir / "empty");
    r = qm({"synth", "--input-dir", (dir / "empty").string(), "--out-dir", (dir / "o").string()});
    CHECK(r.code != 0);
    CHECK(lines(r.err) == 1);

    r = qm({"synth", "--input-dir", (dir / "hr").string(), "--out-dir", (dir / "o").string(), "--scale", "3"});
    CHECK(r.code == 2);
    CHECK(lines(r.err) == 1);
    CHECK(qm({"synth"}).code == 2);
    CHECK(qm({}).code == 2);
    CHECK(qm({"frobnicate"}).code == 2);
  }

  TEST_CASE("input mode is case-insensitive") {
    qt::TempDir dir;
    fs::create_directories(dir / "hr");
    write_scene(dir / "hr" / "x.png", 32, 32);
    const auto r = qm({"synth", "--input-dir", (dir / "hr").string(), "--out-dir", (dir / "o").string(), "--frames",
                       "3", "--input-mode", "RGB3"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(cli::load_burst(dir / "o" / "x" / "manifest.json").frames.shape() == Shape{3, 3, 8, 8});
  }

  TEST_CASE("infer: shape, determinism and errors") {
    qt::TempDir dir;
    fs::create_directories(dir / "hr");
    write_scene(dir / "hr" / "s.png", 64, 64);
    REQUIRE(qm({"synth", "--input-dir", (dir / "hr").string(), "--out-dir", (dir / "b").string()}).code == 0);
    std::vector<std::string> init = {"init-weights", "--out", (dir / "w.qmbw").string(), "--seed", "3"};
    init.insert(init.end(), kSmall.begin(), kSmall.end());
    REQUIRE(qm(init).code == 0);

    const auto infer = [&](const fs::path& weights, const fs::path& out) {
      std::vector<std::string> a = {"infer", "--weights", weights.string(), "--burst-manifest",
                                    (dir / "b" / "s" / "manifest.json").string(), "--out", out.string()};
      a.insert(a.end(), kSmall.begin(), kSmall.end());
      return qm(a);
    };
    const auto r = infer(dir / "w.qmbw", dir / "o1.png");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("output 3x32x32") != std::string::npos);
    CHECK(synth::load_image(dir / "o1.png").shape() == Shape{3, 32, 32});
    REQUIRE(infer(dir / "w.qmbw", dir / "o2.png").code == 0);
    CHECK(slurp(dir / "o1.png") == slurp(dir / "o2.png"));

    const auto missing = infer(dir / "nope.qmbw", dir / "o3.png");
    CHECK(missing.code != 0);
    CHECK(missing.err.find("error: io error: ") != std::string::npos);

    std::vector<std::string> other = {"init-weights", "--out", (dir / "w8.qmbw").string(), "--channels", "8",
                                      "--state", "2", "--qssm-blocks", "1", "--msfm-blocks", "1"};
    REQUIRE(qm(other).code == 0);
    const auto mismatch = infer(dir / "w8.qmbw", dir / "o4.png");
    CHECK(mismatch.code != 0);
    CHECK(mismatch.err.find("shallow.weight") != std::string::npos);
    CHECK(lines(mismatch.err) == 1);
  }

  TEST_CASE("eval reports") {
    qt::TempDir dir;
    fs::create_directories(dir / "pred");
    fs::create_directories(dir / "gt");
    Rng rng(1);
    const Tensor img = rng.uniform_tensor({3, 16, 16}, 0.0, 1.0);
    synth::save_image(img, dir / "pred" / "same.png");
    synth::save_image(img, dir / "gt" / "same.png");
    auto r = qm({"eval", "--pred-dir", (dir / "pred").string(), "--gt-dir", (dir / "gt").string(), "--report",
                 (dir / "r.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string json = slurp(dir / "r.json");
    CHECK(json.find("\"inf\"") != std::string::npos);
    CHECK(slurp(dir / "r.csv").find("same,inf,1,inf") != std::string::npos);

    // a 16-bit PNG cannot hold an offset of exactly 0.5; the nearest is 32768/65535
    synth::save_image(Tensor::full({3, 16, 16}, 0.0), dir / "pred" / "off.png");
    synth::save_image(Tensor::full({3, 16, 16}, 32768.0 / 65535.0), dir / "gt" / "off.png");
    r = qm({"eval", "--pred-dir", (dir / "pred").string(), "--gt-dir", (dir / "gt").string(), "--report",
            (dir / "r2.json").string(), "--csv", (dir / "t.csv").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string csv = slurp(dir / "t.csv");
    const auto at = csv.find("off,");
    REQUIRE(at != std::string::npos);
    const double db = std::stod(csv.substr(at + 4));
    CHECK(std::abs(db - 20.0 * std::log10(65535.0 / 32768.0)) <= 1e-6);
    CHECK(std::abs(db - 6.0206) <= 2e-4);

    synth::save_image(img, dir / "pred" / "lonely.png");
    r = qm({"eval", "--pred-dir", (dir / "pred").string(), "--gt-dir", (dir / "gt").string(), "--report",
            (dir / "r3.json").string()});
    CHECK(r.code != 0);
    CHECK(r.err.find("pred/lonely.png") != std::string::npos);

    fs::create_directories(dir / "e1");
    fs::create_directories(dir / "e2");
    r = qm({"eval", "--pred-dir", (dir / "e1").string(), "--gt-dir", (dir / "e2").string(), "--report",
            (dir / "r4.json").string()});
    CHECK(r.code == 2);
    CHECK(lines(r.err) == 1);
  }

  TEST_CASE("check exit status") {
    auto r = qm({"check", "--suite", "ssm"});
    CHECK_MESSAGE(r.code == 0, r.out);
    CHECK(r.out.find("FAIL") == std::string::npos);
    r = qm({"check", "--suite", "ssm", "--inject-bbar-sign-flip"});
    CHECK(r.code != 0);
    CHECK(r.out.find("FAIL") != std::string::npos);
    CHECK(qm({"check", "--suite", "nonsense"}).code == 2);
  }

  TEST_CASE("bench numbers are seed-deterministic") {
    const std::vector<std::string> a = {"bench", "--lengths", "16,32", "--channels", "2", "--state", "2",
                                        "--min-seconds", "0.0001", "--seed", "5"};
    const auto r1 = qm(a), r2 = qm(a);
    REQUIRE(r1.out.rfind("length,scan_s_per_token", 0) == 0);
    CHECK(checksums(r1.out).size() == 2);
    CHECK(checksums(r1.out) == checksums(r2.out));
  }

  TEST_CASE("config file with flag precedence") {
    qt::TempDir dir;
    std::ofstream(dir / "c.json") << R"({"bench": {"lengths": [16, 32], "channels": 3, "state": 2, "min-seconds": 0.0001}})";
    const auto base = std::vector<std::string>{"--config", (dir / "c.json").string(), "bench"};
    const auto from_file = qm(base);
    REQUIRE_MESSAGE(from_file.code <= 1, from_file.err);
    const auto explicit_flags =
        qm({"bench", "--lengths", "16,32", "--channels", "3", "--state", "2", "--min-seconds", "0.0001"});
    CHECK(checksums(from_file.out) == checksums(explicit_flags.out));

    auto over = base;
    over.insert(over.end(), {"--channels", "2"});
    const auto overridden = qm(over);
    const auto flags2 = qm({"bench", "--lengths", "16,32", "--channels", "2", "--state", "2", "--min-seconds", "0.0001"});
    CHECK(checksums(overridden.out) == checksums(flags2.out));
    CHECK_FALSE(checksums(overridden.out) == checksums(from_file.out));

    std::ofstream(dir / "bad.json") << "{not json";
    const auto bad = qm({"--config", (dir / "bad.json").string(), "bench"});
    CHECK(bad.code == 2);
    CHECK(lines(bad.err) == 1);
  }
}
