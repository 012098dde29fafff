#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "qmamba/cli.hpp"
#include "qmamba/metrics.hpp"
#include "qmamba/random.hpp"
#include "qmamba/verify/oracles.hpp"
#include "qmamba/verify/suites.hpp"

namespace qmamba::cli {

using json = nlohmann::ordered_json;

namespace {

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::kIo, "'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::kIo, "cannot create directory '" + dir.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// 3-channel view of a loaded image: gray is replicated, alpha dropped.
Tensor as_rgb(const Tensor& img) {
  if (img.dim(0) == 3) return img;
  const std::size_t h = img.dim(1), w = img.dim(2), hw = h * w;
  Tensor rgb({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < hw; ++p) rgb[c * hw + p] = img[(img.dim(0) == 1 ? 0 : c) * hw + p];
  return rgb;
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%02zu.png", i);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string manifest_to_json(const BurstManifest& m) {
  json shifts = json::array();
  for (const auto& s : m.shifts) shifts.push_back({s.dx, s.dy});
  json doc = {{"id", m.id},
              {"n_frames", m.n_frames},
              {"frames", m.frames},
              {"gt", m.gt},
              {"shifts", shifts},
              {"seed", m.meta.seed},
              {"scale", m.meta.scale},
              {"input_mode", std::string(synth::to_string(m.meta.input_mode))},
              {"noise", {{"sigma_read", m.meta.noise.sigma_read}, {"sigma_shot", m.meta.noise.sigma_shot}}},
              {"gamma", m.meta.gamma},
              {"max_shift", m.meta.max_shift}};
  return doc.dump(2) + "\n";
}

BurstManifest manifest_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
    BurstManifest m;
    m.id = doc.at("id").get<std::string>();
    m.frames = doc.at("frames").get<std::vector<std::string>>();
    m.n_frames = doc.value("n_frames", m.frames.size());
    m.gt = doc.value("gt", std::string());
    for (const auto& s : doc.value("shifts", json::array())) m.shifts.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    m.meta.seed = doc.value("seed", std::uint64_t{0});
    m.meta.scale = doc.at("scale").get<std::size_t>();
    m.meta.input_mode = synth::parse_input_mode(doc.at("input_mode").get<std::string>());
    if (doc.contains("noise")) {
      m.meta.noise.sigma_read = doc["noise"].value("sigma_read", 0.0);
      m.meta.noise.sigma_shot = doc["noise"].value("sigma_shot", 0.0);
    }
    m.meta.gamma = doc.value("gamma", 2.2);
    m.meta.max_shift = doc.value("max_shift", 0.0);
    if (m.frames.size() != m.n_frames)
      throw Error(ErrorCode::kFormat, "manifest lists " + std::to_string(m.frames.size()) + " frames but n_frames is " +
                                          std::to_string(m.n_frames));
    if (!m.shifts.empty() && m.shifts.size() != m.n_frames)
      throw Error(ErrorCode::kFormat, "manifest has " + std::to_string(m.shifts.size()) + " shifts for " +
                                          std::to_string(m.n_frames) + " frames");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed manifest: ") + e.what());
  }
}

synth::BurstStack load_burst(const fs::path& manifest_path, BurstManifest* manifest_out) {
  const BurstManifest m = manifest_from_json(read_text(manifest_path));
  const fs::path dir = manifest_path.parent_path();
  const std::size_t channels = synth::input_channels(m.meta.input_mode);
  std::vector<Tensor> frames;
  for (const auto& name : m.frames) {
    Tensor f = synth::load_image(dir / name);
    if (f.dim(0) != channels)
      throw Error(ErrorCode::kShape, "frame '" + name + "' has " + std::to_string(f.dim(0)) + " channels, " +
                                         std::string(synth::to_string(m.meta.input_mode)) + " needs " +
                                         std::to_string(channels));
    if (!frames.empty() && f.shape() != frames.front().shape())
      throw Error(ErrorCode::kShape, "frame '" + name + "' shape " + shape_str(f.shape()) + " differs from frame 0");
    frames.push_back(std::move(f));
  }
  synth::BurstStack b;
  b.frames = stack(frames);
  b.shifts = m.shifts;
  b.meta = m.meta;
  if (manifest_out) *manifest_out = m;
  return b;
}

int cmd_synth(const SynthOptions& opt, std::ostream& out) {
  if (opt.frames < 2) throw Error(ErrorCode::kValidation, "burst needs at least 2 frames, got " + std::to_string(opt.frames));
  const auto images = list_pngs(opt.input_dir);
  if (images.empty()) throw Error(ErrorCode::kValidation, "no PNG images in '" + opt.input_dir.string() + "'");
  ensure_dir(opt.out_dir);

  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor hr = as_rgb(synth::load_image(images[i]));
    synth::BurstOptions bo;
    bo.n_frames = opt.frames;
    bo.scale = opt.scale;
    bo.noise = {opt.sigma_read, opt.sigma_shot};
    bo.max_shift = opt.max_shift;
    bo.seed = derive_seed(opt.seed, i);
    bo.input_mode = opt.input_mode;
    bo.gamma = opt.gamma;
    const auto sb = synth::generate_burst(hr, bo);

    BurstManifest m;
    m.id = images[i].stem().string();
    const fs::path dir = opt.out_dir / m.id;
    ensure_dir(dir);
    for (std::size_t f = 0; f < opt.frames; ++f) {
      m.frames.push_back(frame_name(f));
      synth::save_image(sb.burst.frame(f), dir / m.frames.back(), 16);
    }
    m.gt = "gt.png";
    synth::save_image(synth::eval_target(hr, opt.input_mode), dir / m.gt, 16);
    m.meta = sb.burst.meta;
    m.shifts = sb.burst.shifts;
    m.n_frames = opt.frames;
    write_text(dir / "manifest.json", manifest_to_json(m));
    out << "burst " << m.id << ": " << opt.frames << " frames " << shape_str(sb.burst.frame(0).shape()) << " -> "
        << dir.string() << "\n";
  }
  return 0;
}

int cmd_infer(const InferOptions& opt, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  BurstManifest m;
  const synth::BurstStack burst = load_burst(opt.manifest, &m);
  pipeline::ModelConfig cfg;
  cfg.burst_size = m.n_frames;
  cfg.scale = m.meta.scale;
  cfg.input_mode = m.meta.input_mode;
  cfg.channels = opt.dims.channels;
  cfg.state = opt.dims.state;
  cfg.num_qssm_blocks = opt.dims.qssm_blocks;
  cfg.num_msfm_blocks = opt.dims.msfm_blocks;
  cfg.validate();
  const pipeline::Model model = pipeline::model_from_tensors(load_weights(opt.weights), cfg);
  const Tensor hr = pipeline::forward(burst, model, cfg);
  if (!all_finite(hr)) throw Error(ErrorCode::kNumeric, "forward produced non-finite values");
  if (!opt.out.parent_path().empty()) ensure_dir(opt.out.parent_path());
  synth::save_image(hr, opt.out, 16);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", seconds_since(t0));
  out << "output " << hr.dim(0) << "x" << hr.dim(1) << "x" << hr.dim(2) << " -> " << opt.out.string() << " in " << buf
      << " s\n";
  return 0;
}

int cmd_eval(const EvalOptions& opt, std::ostream& out) {
  const auto preds = list_pngs(opt.pred_dir), gts = list_pngs(opt.gt_dir);
  if (preds.empty() && gts.empty()) throw Error(ErrorCode::kValidation, "no PNG images to evaluate");
  std::map<std::string, fs::path> pred_by_name, gt_by_name;
  for (const auto& p : preds) pred_by_name[p.filename().string()] = p;
  for (const auto& p : gts) gt_by_name[p.filename().string()] = p;
  std::vector<std::string> orphans;
  for (const auto& [name, p] : pred_by_name)
    if (!gt_by_name.contains(name)) orphans.push_back("pred/" + name);
  for (const auto& [name, p] : gt_by_name)
    if (!pred_by_name.contains(name)) orphans.push_back("gt/" + name);
  if (!orphans.empty()) {
    std::string list;
    for (const auto& o : orphans) list += (list.empty() ? "" : ", ") + o;
    throw Error(ErrorCode::kValidation, "unmatched files: " + list);
  }

  std::vector<metrics::ImageScore> scores;
  for (const auto& [name, pred_path] : pred_by_name) {
    const Tensor pred = as_rgb(synth::load_image(pred_path));
    const Tensor gt = as_rgb(synth::load_image(gt_by_name.at(name)));
    if (pred.shape() != gt.shape())
      throw Error(ErrorCode::kShape, "'" + name + "': prediction " + shape_str(pred.shape()) + " vs ground truth " +
                                         shape_str(gt.shape()));
    metrics::ImageScore s;
    s.id = fs::path(name).stem().string();
    s.psnr_db = metrics::psnr(pred, gt, 1.0);
    s.ssim = metrics::ssim(pred, gt);
    s.lpsnr_db = metrics::linear_psnr(pred, gt);
    scores.push_back(s);
  }
  const auto report = metrics::make_report(std::move(scores));
  if (!opt.report.parent_path().empty()) ensure_dir(opt.report.parent_path());
  write_text(opt.report, metrics::report_to_json(report));
  fs::path csv = opt.csv;
  if (csv.empty()) csv = fs::path(opt.report).replace_extension(".csv");
  write_text(csv, metrics::report_to_csv(report));
  out << "images " << report.aggregate.count << " mean_psnr " << metrics::format_number(report.aggregate.mean_psnr)
      << " dB mean_ssim " << metrics::format_number(report.aggregate.mean_ssim) << "\n";
  return 0;
}

int cmd_check(const CheckCmdOptions& opt, std::ostream& out) {
  verify::CheckOptions co;
  co.seed = opt.seed;
  co.inject_bbar_sign_flip = opt.inject_bbar_sign_flip;
  const auto results = verify::run_suite(opt.suite, co);
  std::size_t passed = 0;
  for (const auto& r : results) {
    out << verify::format_result(r) << "\n";
    if (r.passed) ++passed;
  }
  out << passed << "/" << results.size() << " checks passed\n";
  return passed == results.size() ? 0 : 1;
}

std::vector<BenchRow> run_bench(const BenchOptions& opt) {
  if (opt.lengths.empty()) throw Error(ErrorCode::kValidation, "bench needs at least one length");
  if (opt.channels == 0 || opt.state == 0) throw Error(ErrorCode::kValidation, "bench channels and state must be positive");
  std::vector<BenchRow> rows;
  for (std::size_t li = 0; li < opt.lengths.size(); ++li) {
    const std::size_t len = opt.lengths[li];
    if (len == 0) throw Error(ErrorCode::kValidation, "bench lengths must be positive");
    Rng rng(derive_seed(opt.seed, len));
    const auto p = oracle::random_ssm(rng, len, opt.channels, opt.state);
    const Tensor x = oracle::random_normal(rng, {len, opt.channels});

    auto time_per_call = [&](auto&& fn) {
      std::size_t reps = 0;
      const auto t0 = std::chrono::steady_clock::now();
      do {
        fn();
        ++reps;
      } while (seconds_since(t0) < opt.min_seconds);
      return seconds_since(t0) / static_cast<double>(reps);
    };
    BenchRow row;
    row.length = len;
    Tensor y;
    const double scan_s = time_per_call([&] {
      const auto disc = ssm::zoh_discretize(p.a, p.b_seq, p.delta_seq);
      y = ssm::selective_scan(disc, p.c_out, p.d_skip, x).y;
    });
    const double closed_s = time_per_call([&] { (void)ssm::closed_form_scan(p, x); });
    row.scan_seconds_per_token = scan_s / static_cast<double>(len);
    row.closed_seconds_per_token = closed_s / static_cast<double>(len);
    for (double v : y.data()) row.checksum += v;
    rows.push_back(row);
  }
  return rows;
}

int cmd_bench(const BenchOptions& opt, std::ostream& out) {
  const auto rows = run_bench(opt);
  std::ostringstream csv;
  csv << "length,scan_s_per_token,closed_s_per_token,ratio,scan_tokens_per_s,checksum\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%.6e,%.6e,%.4f,%.6e,%.17g\n", r.length, r.scan_seconds_per_token,
                  r.closed_seconds_per_token, r.ratio(), 1.0 / r.scan_seconds_per_token, r.checksum);
    csv << buf;
  }
  out << csv.str();
  if (!opt.csv.empty()) write_text(opt.csv, csv.str());
  if (rows.size() < 2) return 0;
  const auto shortest = std::min_element(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.length < b.length; });
  const auto longest = std::max_element(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.length < b.length; });
  const double growth = longest->ratio() / shortest->ratio();
  const bool ok = growth > 8.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s ratio growth L=%zu -> L=%zu: %.2fx (needs > 8x)\n", ok ? "PASS" : "FAIL",
                shortest->length, longest->length, growth);
  out << buf;
  return ok ? 0 : 1;
}

int cmd_init_weights(const InitWeightsOptions& opt, std::ostream& out) {
  pipeline::ModelConfig cfg;
  cfg.burst_size = opt.frames;
  cfg.scale = opt.scale;
  cfg.input_mode = opt.input_mode;
  cfg.channels = opt.dims.channels;
  cfg.state = opt.dims.state;
  cfg.num_qssm_blocks = opt.dims.qssm_blocks;
  cfg.num_msfm_blocks = opt.dims.msfm_blocks;
  cfg.validate();
  const auto model = opt.zero ? pipeline::Model::zeros(cfg) : pipeline::Model::init(cfg, opt.seed);
  const auto tensors = pipeline::to_tensor_map(model);
  if (!opt.out.parent_path().empty()) ensure_dir(opt.out.parent_path());
  save_weights(tensors, opt.out);
  std::size_t params = 0;
  for (const auto& [name, t] : tensors) params += t.size();
  out << "wrote " << tensors.size() << " tensors (" << params << " parameters) -> " << opt.out.string() << "\n";
  return 0;
}

}  // namespace qmamba::cli
