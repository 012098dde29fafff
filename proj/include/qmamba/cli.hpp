#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "qmamba/pipeline.hpp"
#include "qmamba/synthburst.hpp"

namespace qmamba::cli {

namespace fs = std::filesystem;

struct SynthOptions {
  fs::path input_dir;
  fs::path out_dir;
  std::size_t frames = 14;
  std::size_t scale = 4;
  double sigma_read = 0.0;
  double sigma_shot = 0.0;
  double max_shift = 3.0;
  std::uint64_t seed = 0;
  synth::InputMode input_mode = synth::InputMode::kRaw4;
  double gamma = 2.2;
};

/// Model dimensions not recorded in a burst manifest.
struct ModelDims {
  std::size_t channels = 32;
  std::size_t state = 16;
  std::size_t qssm_blocks = 2;
  std::size_t msfm_blocks = 2;
};

struct InferOptions {
  fs::path weights;
  fs::path manifest;
  fs::path out;
  ModelDims dims;
};

struct EvalOptions {
  fs::path pred_dir;
  fs::path gt_dir;
  fs::path report;
  /// Defaults to the report path with a .csv extension.
  fs::path csv;
};

struct CheckCmdOptions {
  std::string suite = "all";
  std::uint64_t seed = 0;
  bool inject_bbar_sign_flip = false;
};

struct BenchOptions {
  std::vector<std::size_t> lengths = {64, 256, 1024, 4096};
  std::size_t channels = 32;
  std::size_t state = 16;
  std::uint64_t seed = 0;
  fs::path csv;
  /// Each measurement repeats until at least this much time has elapsed.
  double min_seconds = 0.02;
};

struct InitWeightsOptions {
  fs::path out;
  std::uint64_t seed = 0;
  std::size_t frames = 14;
  std::size_t scale = 4;
  synth::InputMode input_mode = synth::InputMode::kRaw4;
  ModelDims dims;
  bool zero = false;
};

/// A burst on disk: frames, ground-truth shifts and generation parameters.
struct BurstManifest {
  std::string id;
  std::vector<std::string> frames;  // relative to the manifest directory
  std::string gt;
  synth::BurstMeta meta;
  std::vector<synth::Shift> shifts;
  std::size_t n_frames = 0;
};

std::string manifest_to_json(const BurstManifest& m);
BurstManifest manifest_from_json(const std::string& text);
/// Loads the frames listed in a manifest file into a BurstStack.
synth::BurstStack load_burst(const fs::path& manifest_path, BurstManifest* manifest_out = nullptr);

/// Each command returns a process exit status; errors surface as qmamba::Error.
int cmd_synth(const SynthOptions& opt, std::ostream& out);
int cmd_infer(const InferOptions& opt, std::ostream& out);
int cmd_eval(const EvalOptions& opt, std::ostream& out);
int cmd_check(const CheckCmdOptions& opt, std::ostream& out);
int cmd_bench(const BenchOptions& opt, std::ostream& out);
int cmd_init_weights(const InitWeightsOptions& opt, std::ostream& out);

struct BenchRow {
  std::size_t length = 0;
  double scan_seconds_per_token = 0.0;
  double closed_seconds_per_token = 0.0;
  double checksum = 0.0;  // sum of scan outputs; timing-independent
  double ratio() const { return closed_seconds_per_token / scan_seconds_per_token; }
};
std::vector<BenchRow> run_bench(const BenchOptions& opt);

/// Full command line (without the program name). Usage and validation
/// problems print one line to `err` and return 2; runtime failures return 1.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qmamba::cli
