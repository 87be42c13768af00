#include "life/binarize.hpp"
#include "life/eval.hpp"
#include "life/fusion.hpp"
#include "life/log.hpp"
#include "life/nn/model.hpp"
#include "life/parallel.hpp"
#include "life/phantom.hpp"
#include "life/pipeline.hpp"
#include "life/preprocess.hpp"
#include "life/provenance.hpp"
#include "life/vesselness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <optional>
#include <stdexcept>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  bool force = false;
  int jobs = 1;
  std::string log_level = "warn";
  json blocks = json::object();
};

template <typename T>
T block(const Globals& g, const char* key) {
  if (g.blocks.contains(key)) return g.blocks[key].get<T>();
  return T{};
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void require_volume(const fs::path& p, const std::string& flag) {
  if (!life::volume_exists(p)) throw std::invalid_argument(flag + ": volume not found: " + p.string());
}

/// Skips the command when every output exists and --force is not set.
bool up_to_date(const Globals& g, std::initializer_list<fs::path> outputs) {
  if (g.force) return false;
  for (const auto& p : outputs) {
    const bool exists = p.has_extension() && p.extension() != ".json" && p.extension() != ".raw"
                            ? fs::exists(p)
                            : life::volume_exists(p);
    if (!exists) return false;
  }
  life::log::info("outputs exist, nothing to do (use --force to rebuild)");
  return true;
}

void cmd_phantom(const Globals& g, const std::string& spec_path, const fs::path& out,
                 std::optional<std::uint64_t> seed, std::optional<int> vessel_case) {
  life::PhantomSpec spec = spec_path.empty() ? block<life::PhantomSpec>(g, "phantom")
                                             : read_json(spec_path).get<life::PhantomSpec>();
  if (seed) spec.seed = *seed;
  spec.validate();
  if (vessel_case && *vessel_case < 1) throw std::invalid_argument("--vessel-case must be >= 1");
  if (up_to_date(g, {out / "volume", out / "mask"})) return;
  fs::create_directories(out);
  json params = spec;
  if (vessel_case) {
    const auto c = life::make_phantom_vessel_case(spec, *vessel_case);
    params["vessel_case"] = {{"R", *vessel_case}, {"target_z", c.target_z}};
    life::save_volume_artifact(c.volume, out / "volume", "phantom", json::array(), params);
    life::save_mask_artifact(c.masks, out / "mask", "phantom", json::array(), params);
    std::ofstream(out / "case.json") << json{{"target_z", c.target_z}, {"R", *vessel_case}}.dump() << '\n';
  } else {
    const auto p = life::generate_phantom(spec);
    life::save_volume_artifact(p.volume, out / "volume", "phantom", json::array(), params);
    life::save_mask_artifact(p.mask, out / "mask", "phantom", json::array(), params);
  }
}

void cmd_preprocess(const Globals& g, const fs::path& in, const fs::path& out, std::optional<double> zthresh,
                    std::optional<int> bins) {
  require_volume(in, "--in");
  life::PreprocessParams p = block<life::PreprocessParams>(g, "preprocess");
  if (zthresh) p.z_thresh = *zthresh;
  if (bins) p.bins = *bins;
  if (p.bins < 1) throw std::invalid_argument("--bins must be >= 1");
  if (up_to_date(g, {life::volume_stem(out)})) return;
  const life::Volume3D vol = life::normalize(life::load_volume(in));
  const auto report = life::detect_artifacts(vol, p.z_thresh);
  const auto cleaned = life::remove_motion_artifacts(vol, report, p.bins);
  fs::path report_path = life::volume_stem(out);
  report_path += ".artifacts.json";
  std::ofstream(report_path) << life::to_json(report).dump() << '\n';
  life::save_volume_artifact(cleaned, out, "preprocess", {life::input_record(in)}, p);
}

void cmd_lif(const Globals& g, const fs::path& in, const fs::path& out, std::optional<int> r) {
  require_volume(in, "--in");
  life::FusionParams fp = block<life::FusionParams>(g, "fusion");
  const life::RegParams rp = block<life::RegParams>(g, "registration");
  if (r) fp.radius = *r;
  fp.validate();
  rp.validate();
  if (up_to_date(g, {out / "lif", out / "celif"})) return;
  fs::create_directories(out);
  const auto lv = life::lif_volume(life::normalize(life::load_volume(in)), fp, rp);
  const json params{{"fusion", fp}, {"registration", rp}};
  life::save_volume_artifact(lv.lif, out / "lif", "lif", {life::input_record(in)}, params);
  life::save_volume_artifact(lv.ce_lif, out / "celif", "celif", {life::input_record(in)}, params);
}

void cmd_baseline(const Globals& g, const fs::path& in, const fs::path& out, const std::string& method) {
  require_volume(in, "--in");
  const auto vp = block<life::VesselnessParams>(g, "vesselness");
  const auto bp = block<life::BinarizeParams>(g, "binarize");
  if (up_to_date(g, {life::volume_stem(out)})) return;
  const life::Volume3D vol = life::normalize(life::load_volume(in));
  const json inputs{life::input_record(in)};
  if (method == "frangi") {
    life::save_volume_artifact(life::normalize(life::frangi(vol, vp)), out, "frangi", inputs, vp);
  } else if (method == "oof") {
    life::save_volume_artifact(life::normalize(life::oof(vol, vp)), out, "oof", inputs, vp);
  } else if (method == "otsu") {
    const auto r = life::otsu(vol, bp.bins);
    life::save_mask_artifact(r.mask.data, out, "otsu", inputs, {{"bins", bp.bins}, {"threshold", r.threshold}});
  } else {
    const auto m = life::kmeans_binarize(vol);
    life::save_mask_artifact(m.data, out, "kmeans", inputs, m.provenance);
  }
}

void cmd_train(const Globals& g, const fs::path& raw, const fs::path& lif, const fs::path& celif,
               const fs::path& out, const std::string& loss_path, std::optional<int> epochs,
               std::optional<std::uint64_t> seed) {
  require_volume(raw, "--in");
  require_volume(lif, "--lif");
  require_volume(celif, "--celif");
  life::nn::LifeConfig cfg = block<life::nn::LifeConfig>(g, "network");
  if (epochs) cfg.epochs = *epochs;
  if (seed) cfg.seed = *seed;
  cfg.validate();
  const fs::path loss = loss_path.empty() ? fs::path(out).replace_extension(".loss.csv") : fs::path(loss_path);
  if (up_to_date(g, {out, loss})) return;
  const auto v_raw = life::load_volume(raw), v_lif = life::load_volume(lif), v_ce = life::load_volume(celif);
  life::nn::Model model(cfg);
  const auto history = life::nn::train(model, life::nn::make_training_set(v_raw, v_lif, v_ce, cfg));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  life::nn::save_checkpoint(out, model);
  life::nn::write_loss_csv(loss, history);
  const json inputs{life::input_record(raw), life::input_record(lif), life::input_record(celif)};
  life::write_provenance(out, "train", inputs, cfg);
  life::write_provenance(loss, "train", inputs, cfg);
}

void cmd_infer(const Globals& g, const fs::path& in, const fs::path& model_path, const fs::path& out) {
  require_volume(in, "--in");
  if (!fs::exists(model_path)) throw std::invalid_argument("--model: checkpoint not found: " + model_path.string());
  if (up_to_date(g, {life::volume_stem(out)})) return;
  const auto model = life::nn::load_checkpoint(model_path);
  const auto latent = life::nn::infer_latent(model, life::normalize(life::load_volume(in)));
  life::save_volume_artifact(latent, out, "infer", {life::input_record(in), life::input_record(model_path)},
                             {{"latent", "mu"}});
}

void cmd_binarize(const Globals& g, const fs::path& in, const fs::path& out, std::optional<int> min_island) {
  require_volume(in, "--in");
  auto bp = block<life::BinarizeParams>(g, "binarize");
  if (min_island) bp.min_island = *min_island;
  bp.diffusion.validate();
  if (up_to_date(g, {life::volume_stem(out)})) return;
  const auto mask = life::binarize_pipeline(life::load_volume(in), bp);
  life::save_mask_artifact(mask.data, out, "binarize", {life::input_record(in)}, mask.provenance);
}

void cmd_eval(const Globals& g, const std::string& pred, const fs::path& gt_path, const std::string& in,
              const std::string& methods, const std::string& model_path, const std::string& out) {
  require_volume(gt_path, "--gt");
  const life::MaskVolume gt = life::load_mask(gt_path);
  if (!pred.empty()) {
    require_volume(pred, "--pred");
    json j = life::score(life::load_mask(pred), gt);
    std::vector<double> dice;
    for (const auto& s : life::per_slice_scores(life::load_mask(pred), gt)) dice.push_back(s.dice);
    j["per_slice_dice"] = life::summarize(dice);
    std::cout << j.dump() << std::endl;
    return;
  }
  if (in.empty()) throw std::invalid_argument("eval needs --pred, or --in with --methods");
  require_volume(in, "--in");
  if (out.empty()) throw std::invalid_argument("eval --in needs --out");
  life::ComparisonOptions options;
  options.methods.clear();
  std::stringstream ss(methods);
  for (std::string m; std::getline(ss, m, ',');) {
    if (!m.empty()) options.methods.push_back(m);
  }
  options.binarize = block<life::BinarizeParams>(g, "binarize");
  options.vesselness = block<life::VesselnessParams>(g, "vesselness");
  options.fusion = block<life::FusionParams>(g, "fusion");
  options.registration = block<life::RegParams>(g, "registration");
  std::optional<life::nn::Model> model;
  if (!model_path.empty()) {
    if (!fs::exists(model_path)) throw std::invalid_argument("--model: checkpoint not found: " + model_path);
    model.emplace(life::nn::load_checkpoint(model_path));
    options.model = &*model;
  }
  for (const auto& m : options.methods) {
    if (std::find(life::known_methods().begin(), life::known_methods().end(), m) == life::known_methods().end()) {
      throw std::invalid_argument("unknown method: " + m);
    }
    if (m == "life" && !model) throw std::invalid_argument("method 'life' needs --model");
  }
  const fs::path dir(out);
  if (up_to_date(g, {dir / "report.csv", dir / "report.json"})) return;
  fs::create_directories(dir);
  const auto report = life::compare_methods(life::load_volume(in), gt, options);
  life::write_report_csv(dir / "report.csv", report);
  life::write_per_slice_csv(dir / "per_slice.csv", report);
  std::ofstream(dir / "report.json") << life::to_json(report).dump(2) << '\n';
  const json inputs{life::input_record(in), life::input_record(gt_path)};
  life::write_provenance(dir / "report.csv", "eval", inputs, {{"methods", options.methods}});
}

void cmd_pipeline(const Globals& g) {
  if (g.config.empty()) throw std::invalid_argument("pipeline needs --config");
  const auto cfg = life::load_pipeline_config(g.config);
  const auto result = life::run_pipeline(cfg, g.force);
  json stages = json::array();
  for (const auto& s : result.stages) stages.push_back({{"stage", s.name}, {"skipped", s.skipped}});
  std::cout << json{{"output_dir", cfg.output_dir.string()}, {"stages", stages}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OCT-A vessel segmentation by local intensity fusion encoding"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "JSON config (pipeline config, or parameter blocks for a subcommand)");
  app.add_flag("--force", g.force, "Rebuild outputs that already exist");
  app.add_option("--jobs", g.jobs, "Worker thread cap")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level, "debug|info|warn|error|off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  std::string spec_path, in, out, lif, celif, model, pred, gt, method = "otsu", methods = "kmeans,otsu,frangi,oof,life",
                                                              loss;
  std::optional<std::uint64_t> seed;
  std::optional<int> vessel_case, r, bins, epochs, min_island;
  std::optional<double> zthresh;

  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic vessel phantom and its mask");
  phantom->add_option("--spec", spec_path, "Phantom spec JSON")->check(CLI::ExistingFile);
  phantom->add_option("--out", out, "Output directory")->required();
  phantom->add_option("--seed", seed, "Override the spec seed");
  phantom->add_option("--vessel-case", vessel_case, "Build the neighbor-only vessel case with radius R");

  auto* pre = app.add_subcommand("preprocess", "Detect and repair motion-artifact rows");
  pre->add_option("--in", in, "Input volume")->required();
  pre->add_option("--out", out, "Output volume")->required();
  pre->add_option("--artifact-zthresh", zthresh, "Row-mean z-score threshold");
  pre->add_option("--bins", bins, "Histogram bins");

  auto* lif_cmd = app.add_subcommand("lif", "Local intensity fusion: LIF and CE-LIF volumes");
  lif_cmd->add_option("--in", in, "Input volume")->required();
  lif_cmd->add_option("--out", out, "Output directory")->required();
  lif_cmd->add_option("--r", r, "Neighborhood radius R");

  auto* base = app.add_subcommand("baseline", "Classical baselines");
  base->add_option("--in", in, "Input volume")->required();
  base->add_option("--out", out, "Output volume or mask")->required();
  base->add_option("--method", method, "frangi|oof|otsu|kmeans")
      ->check(CLI::IsMember({"frangi", "oof", "otsu", "kmeans"}));

  auto* train = app.add_subcommand("train", "Train the denoiser and translator");
  train->add_option("--in", in, "Raw volume")->required();
  train->add_option("--lif", lif, "LIF volume")->required();
  train->add_option("--celif", celif, "CE-LIF volume")->required();
  train->add_option("--out", out, "Checkpoint path")->required();
  train->add_option("--loss-csv", loss, "Loss curve CSV (default <out>.loss.csv)");
  train->add_option("--epochs", epochs, "Override epochs");
  train->add_option("--seed", seed, "Override seed");

  auto* infer = app.add_subcommand("infer", "Latent map of a volume");
  infer->add_option("--in", in, "Input volume")->required();
  infer->add_option("--model", model, "Checkpoint")->required();
  infer->add_option("--out", out, "Output volume")->required();

  auto* bin = app.add_subcommand("binarize", "Diffusion, Otsu and island removal");
  bin->add_option("--in", in, "Input volume")->required();
  bin->add_option("--out", out, "Output mask")->required();
  bin->add_option("--min-island", min_island, "Smallest component kept (voxels)");

  auto* ev = app.add_subcommand("eval", "Score a mask, or compare methods on a volume");
  ev->add_option("--pred", pred, "Predicted mask");
  ev->add_option("--gt", gt, "Ground-truth mask")->required();
  ev->add_option("--in", in, "Volume for method comparison");
  ev->add_option("--methods", methods, "Comma-separated methods");
  ev->add_option("--model", model, "Checkpoint for the life method");
  ev->add_option("--out", out, "Report directory");

  auto* pipe = app.add_subcommand("pipeline", "Run every stage from a config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    life::log::set_level(life::log::parse_level(g.log_level));
    life::set_jobs(g.jobs);
    if (!g.config.empty() && !pipe->parsed()) g.blocks = read_json(g.config);

    if (phantom->parsed()) cmd_phantom(g, spec_path, out, seed, vessel_case);
    else if (pre->parsed()) cmd_preprocess(g, in, out, zthresh, bins);
    else if (lif_cmd->parsed()) cmd_lif(g, in, out, r);
    else if (base->parsed()) cmd_baseline(g, in, out, method);
    else if (train->parsed()) cmd_train(g, in, lif, celif, out, loss, epochs, seed);
    else if (infer->parsed()) cmd_infer(g, in, model, out);
    else if (bin->parsed()) cmd_binarize(g, in, out, min_island);
    else if (ev->parsed()) cmd_eval(g, pred, gt, in, methods, model, out);
    else if (pipe->parsed()) cmd_pipeline(g);
    return 0;
  } catch (const std::invalid_argument& e) {
    life::log::error(e.what(), "validation");
    return 2;
  } catch (const nlohmann::json::exception& e) {
    life::log::error(e.what(), "config");
    return 2;
  } catch (const std::exception& e) {
    life::log::error(e.what(), "runtime");
    return 1;
  }
}
