#include <algorithm>
#include <cctype>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qmamba/cli.hpp"

namespace qmamba::cli {

namespace {

// Config file reader: a JSON object whose top-level keys are subcommand
// names, each mapping option names (without dashes) to values, e.g.
// {"synth": {"frames": 14, "sigma-read": 0.05}}. Flags override file values.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json doc;
    try {
      input >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(doc, "", {}, items);
    return items;
  }

 private:
  static void flatten(const nlohmann::json& j, const std::string& name, std::vector<std::string> parents,
                      std::vector<CLI::ConfigItem>& items) {
    if (j.is_object()) {
      if (!name.empty()) parents.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) flatten(*it, it.key(), parents, items);
      return;
    }
    CLI::ConfigItem item;
    item.name = name;
    item.parents = parents;
    auto scalar = [&](const nlohmann::json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
      if (v.is_number()) return v.dump();
      throw CLI::ConversionError("unsupported config value for '" + name + "'");
    };
    if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(scalar(v));
    } else {
      item.inputs.push_back(scalar(j));
    }
    items.push_back(std::move(item));
  }
};

const std::map<std::string, synth::InputMode> kModes = {{"raw4", synth::InputMode::kRaw4},
                                                         {"rgb3", synth::InputMode::kRgb3}};

void add_dims(CLI::App* sub, ModelDims& d) {
  sub->add_option("--channels", d.channels, "Feature channels")->check(CLI::Range(4, 4096))->capture_default_str();
  sub->add_option("--state", d.state, "SSM state size")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--qssm-blocks", d.qssm_blocks, "Number of QSSM blocks")->capture_default_str();
  sub->add_option("--msfm-blocks", d.msfm_blocks, "Number of MSFM blocks")->capture_default_str();
}

// One line, no trailing period; CLI11 messages can span lines.
std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Query state space model burst super-resolution toolkit", "qmamba"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; keys grouped by subcommand");
  app.require_subcommand(1);

  SynthOptions synth_opt;
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic bursts from HR PNG images");
  synth_cmd->add_option("--input-dir", synth_opt.input_dir, "Directory of HR PNG images")->required();
  synth_cmd->add_option("--out-dir", synth_opt.out_dir, "Output directory")->required();
  synth_cmd->add_option("--frames", synth_opt.frames, "Burst size N")->capture_default_str();
  synth_cmd->add_option("--scale", synth_opt.scale, "Downsampling factor s")->check(CLI::IsMember({2, 4}))->capture_default_str();
  synth_cmd->add_option("--sigma-read", synth_opt.sigma_read, "Read noise std")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--sigma-shot", synth_opt.sigma_shot, "Shot noise coefficient")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--max-shift", synth_opt.max_shift, "Max |shift| in frame pixels")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--seed", synth_opt.seed, "RNG seed")->capture_default_str();
  std::string synth_mode = "raw4";
  synth_cmd->add_option("--input-mode", synth_mode, "raw4 or rgb3")
      ->check(CLI::IsMember(kModes, CLI::ignore_case))
      ->capture_default_str();
  synth_cmd->add_option("--gamma", synth_opt.gamma, "Linearization exponent (1 disables)")->check(CLI::PositiveNumber)->capture_default_str();

  InferOptions infer_opt;
  auto* infer_cmd = app.add_subcommand("infer", "Run the network on one burst");
  infer_cmd->add_option("--weights", infer_opt.weights, "QMBW weight file")->required();
  infer_cmd->add_option("--burst-manifest", infer_opt.manifest, "manifest.json written by synth")->required();
  infer_cmd->add_option("--out", infer_opt.out, "Output PNG")->required();
  add_dims(infer_cmd, infer_opt.dims);

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR / SSIM / L-PSNR of predictions against ground truth");
  eval_cmd->add_option("--pred-dir", eval_opt.pred_dir, "Predicted PNGs")->required();
  eval_cmd->add_option("--gt-dir", eval_opt.gt_dir, "Ground-truth PNGs with matching names")->required();
  eval_cmd->add_option("--report", eval_opt.report, "JSON report path")->required();
  eval_cmd->add_option("--csv", eval_opt.csv, "CSV path (default: report path with .csv)");

  CheckCmdOptions check_opt;
  auto* check_cmd = app.add_subcommand("check", "Run oracle and invariant check suites");
  check_cmd->add_option("--suite", check_opt.suite, "ssm, qssm, adaup, msfm, grad or all")
      ->check(CLI::IsMember({"ssm", "qssm", "adaup", "msfm", "grad", "all"}))
      ->capture_default_str();
  check_cmd->add_option("--seed", check_opt.seed, "RNG seed")->capture_default_str();
  check_cmd->add_flag("--inject-bbar-sign-flip", check_opt.inject_bbar_sign_flip,
                      "Fault injection: negate Bbar in the scans under test");

  BenchOptions bench_opt;
  auto* bench_cmd = app.add_subcommand("bench", "Time selective scan against the quadratic closed form");
  bench_cmd->add_option("--lengths", bench_opt.lengths, "Sequence lengths")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--channels", bench_opt.channels, "Channels")->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--state", bench_opt.state, "State size")->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--seed", bench_opt.seed, "RNG seed")->capture_default_str();
  bench_cmd->add_option("--csv", bench_opt.csv, "Also write the table here");
  bench_cmd->add_option("--min-seconds", bench_opt.min_seconds, "Minimum timing window per measurement")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  InitWeightsOptions init_opt;
  auto* init_cmd = app.add_subcommand("init-weights", "Write randomly initialized (or zero) weights");
  init_cmd->add_option("--out", init_opt.out, "QMBW output path")->required();
  init_cmd->add_option("--seed", init_opt.seed, "RNG seed")->capture_default_str();
  init_cmd->add_option("--frames", init_opt.frames, "Burst size N")->capture_default_str();
  init_cmd->add_option("--scale", init_opt.scale, "Upscaling factor")->check(CLI::IsMember({2, 4}))->capture_default_str();
  std::string init_mode = "raw4";
  init_cmd->add_option("--input-mode", init_mode, "raw4 or rgb3")
      ->check(CLI::IsMember(kModes, CLI::ignore_case))
      ->capture_default_str();
  init_cmd->add_flag("--zero", init_opt.zero, "All-zero weights");
  add_dims(init_cmd, init_opt.dims);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;
    err << "error: " << one_line(e.what()) << "\n";
    return 2;
  }

  auto mode_of = [](std::string m) {
    std::transform(m.begin(), m.end(), m.begin(), [](unsigned char c) { return std::tolower(c); });
    return kModes.at(m);
  };
  synth_opt.input_mode = mode_of(synth_mode);
  init_opt.input_mode = mode_of(init_mode);

  try {
    if (*synth_cmd) return cmd_synth(synth_opt, out);
    if (*infer_cmd) return cmd_infer(infer_opt, out);
    if (*eval_cmd) return cmd_eval(eval_opt, out);
    if (*check_cmd) return cmd_check(check_opt, out);
    if (*bench_cmd) return cmd_bench(bench_opt, out);
    if (*init_cmd) return cmd_init_weights(init_opt, out);
  } catch (const Error& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return e.code() == ErrorCode::kValidation ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}

}  // namespace qmamba::cli
