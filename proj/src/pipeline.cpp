#include "life/pipeline.hpp"

#include "life/eval.hpp"
#include "life/log.hpp"
#include "life/preprocess.hpp"
#include "life/provenance.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <stdexcept>

namespace life {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const PreprocessParams& p) {
  j = {{"enabled", p.enabled}, {"z_thresh", p.z_thresh}, {"bins", p.bins}};
}

void from_json(const nlohmann::json& j, PreprocessParams& p) {
  p.enabled = j.value("enabled", p.enabled);
  p.z_thresh = j.value("z_thresh", p.z_thresh);
  p.bins = j.value("bins", p.bins);
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown key '" + key + "' in " + where);
    }
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string relative_name(const fs::path& p) { return p.filename().string(); }

}  // namespace

void PipelineConfig::validate() const {
  if (input.empty()) throw std::invalid_argument("pipeline config: 'input' is required");
  if (!fs::exists(header_path(input)) || !fs::exists(payload_path(input))) {
    throw std::invalid_argument("pipeline config: input volume not found: " + input.string());
  }
  if (output_dir.empty()) throw std::invalid_argument("pipeline config: 'output_dir' is required");
  if (ground_truth && (!fs::exists(header_path(*ground_truth)) || !fs::exists(payload_path(*ground_truth)))) {
    throw std::invalid_argument("pipeline config: ground truth not found: " + ground_truth->string());
  }
  if (checkpoint && !fs::exists(*checkpoint)) {
    throw std::invalid_argument("pipeline config: checkpoint not found: " + checkpoint->string());
  }
  if (preprocess.bins < 1) throw std::invalid_argument("preprocess.bins must be >= 1");
  fusion.validate();
  registration.validate();
  network.validate();
  binarize.diffusion.validate();
  if (binarize.bins < 2) throw std::invalid_argument("binarize.otsu_bins must be >= 2");
  for (const auto& m : eval_methods) {
    if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end()) {
      throw std::invalid_argument("unknown eval method: " + m);
    }
  }
}

PipelineConfig parse_pipeline_config(const nlohmann::json& j, const fs::path& base_dir) {
  reject_unknown(j,
                 {"input", "output_dir", "ground_truth", "checkpoint", "seed", "preprocess", "fusion",
                  "registration", "network", "binarize", "vesselness", "eval"},
                 "pipeline config");
  PipelineConfig cfg;
  try {
    if (j.contains("input")) cfg.input = resolve(base_dir, j.at("input").get<std::string>());
    cfg.output_dir = resolve(base_dir, j.value("output_dir", std::string("life_out")));
    if (j.contains("ground_truth")) cfg.ground_truth = resolve(base_dir, j.at("ground_truth").get<std::string>());
    if (j.contains("checkpoint")) cfg.checkpoint = resolve(base_dir, j.at("checkpoint").get<std::string>());
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("preprocess")) {
      reject_unknown(j["preprocess"], {"enabled", "z_thresh", "bins"}, "preprocess");
      cfg.preprocess = j["preprocess"].get<PreprocessParams>();
    }
    if (j.contains("fusion")) cfg.fusion = j["fusion"].get<FusionParams>();
    if (j.contains("registration")) cfg.registration = j["registration"].get<RegParams>();
    cfg.network.seed = cfg.seed;
    if (j.contains("network")) {
      nlohmann::json net = j["network"];
      if (!net.contains("seed")) net["seed"] = cfg.seed;
      cfg.network = net.get<nn::LifeConfig>();
    }
    if (j.contains("binarize")) cfg.binarize = j["binarize"].get<BinarizeParams>();
    if (j.contains("vesselness")) cfg.vesselness = j["vesselness"].get<VesselnessParams>();
    if (j.contains("eval")) {
      reject_unknown(j["eval"], {"enabled", "methods"}, "eval");
      cfg.run_eval = j["eval"].value("enabled", cfg.run_eval);
      cfg.eval_methods = j["eval"].value("methods", cfg.eval_methods);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("pipeline config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_pipeline_config(j, path.parent_path());
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  nlohmann::json j{{"input", cfg.input.string()},
                   {"output_dir", cfg.output_dir.string()},
                   {"seed", cfg.seed},
                   {"preprocess", cfg.preprocess},
                   {"fusion", cfg.fusion},
                   {"registration", cfg.registration},
                   {"network", cfg.network},
                   {"binarize", cfg.binarize},
                   {"vesselness", cfg.vesselness},
                   {"eval", {{"enabled", cfg.run_eval}, {"methods", cfg.eval_methods}}}};
  if (cfg.ground_truth) j["ground_truth"] = cfg.ground_truth->string();
  if (cfg.checkpoint) j["checkpoint"] = cfg.checkpoint->string();
  return j;
}

PipelinePaths::PipelinePaths(const fs::path& dir)
    : preprocessed(dir / "preprocessed"),
      artifacts(dir / "artifacts.json"),
      lif(dir / "lif"),
      ce_lif(dir / "celif"),
      checkpoint(dir / "model.ckpt"),
      loss(dir / "loss.csv"),
      latent(dir / "latent"),
      mask(dir / "mask"),
      report_csv(dir / "report.csv"),
      report_json(dir / "report.json"),
      per_slice_csv(dir / "per_slice.csv") {}

bool volume_exists(const fs::path& path) {
  return fs::exists(header_path(path)) && fs::exists(payload_path(path));
}

nlohmann::json input_record(const fs::path& path) {
  if (volume_exists(path)) {
    return {{"name", relative_name(volume_stem(path))}, {"hash", volume_hash(path)}};
  }
  return {{"name", relative_name(path)}, {"hash", sha256_file(path)}};
}

void save_volume_artifact(const Volume3D& vol, const fs::path& path, std::string_view stage,
                          const nlohmann::json& inputs, const nlohmann::json& params) {
  save_volume(vol, path);
  write_provenance(path, stage, inputs, params);
}

void save_mask_artifact(const MaskVolume& mask, const fs::path& path, std::string_view stage,
                        const nlohmann::json& inputs, const nlohmann::json& params) {
  save_mask(mask, path);
  write_provenance(path, stage, inputs, params);
}

namespace {

class StageRunner {
 public:
  StageRunner(bool force, PipelineResult& result) : force_(force), result_(result) {}

  /// Outputs without an extension are volume stems.
  void run(const std::string& name, const std::vector<fs::path>& outputs, const std::function<void()>& body) {
    const bool done = std::all_of(outputs.begin(), outputs.end(), [](const fs::path& p) {
      return p.has_extension() ? fs::exists(p) : volume_exists(p);
    });
    if (done && !force_) {
      log::info("stage skipped, outputs exist", name);
      result_.stages.push_back({name, true});
      return;
    }
    log::info("stage start", name);
    try {
      body();
    } catch (const std::exception& e) {
      throw std::runtime_error("stage '" + name + "' failed: " + e.what());
    }
    result_.stages.push_back({name, false});
  }

 private:
  bool force_;
  PipelineResult& result_;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, bool force) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  const PipelinePaths paths(cfg.output_dir);
  PipelineResult result;
  StageRunner stages(force, result);

  stages.run(
      "preprocess", {paths.preprocessed, paths.artifacts},
      [&] {
        const Volume3D vol = normalize(load_volume(cfg.input));
        Volume3D cleaned = vol;
        ArtifactReport report;
        if (cfg.preprocess.enabled) {
          report = detect_artifacts(vol, cfg.preprocess.z_thresh);
          cleaned = remove_motion_artifacts(vol, report, cfg.preprocess.bins);
        }
        std::ofstream(paths.artifacts) << to_json(report).dump() << '\n';
        save_volume_artifact(cleaned, paths.preprocessed, "preprocess", {input_record(cfg.input)},
                             cfg.preprocess);
      });

  stages.run(
      "lif", {paths.lif, paths.ce_lif},
      [&] {
        const Volume3D vol = load_volume(paths.preprocessed);
        const LifVolumes lv = lif_volume(vol, cfg.fusion, cfg.registration);
        const nlohmann::json params{{"fusion", cfg.fusion}, {"registration", cfg.registration}};
        save_volume_artifact(lv.lif, paths.lif, "lif", {input_record(paths.preprocessed)}, params);
        save_volume_artifact(lv.ce_lif, paths.ce_lif, "celif", {input_record(paths.preprocessed)}, params);
      });

  const fs::path checkpoint = cfg.checkpoint.value_or(paths.checkpoint);
  if (!cfg.checkpoint) {
    stages.run(
        "train", {paths.checkpoint, paths.loss},
        [&] {
          const Volume3D raw = load_volume(paths.preprocessed);
          const Volume3D lif = load_volume(paths.lif);
          const Volume3D ce = load_volume(paths.ce_lif);
          nn::LifeConfig net = cfg.network;
          const Index m = net.size_multiple();
          const Index fit = std::min(raw.height(), raw.width()) / m * m;
          if (fit < m) throw std::invalid_argument("volume slices are smaller than the network stride");
          if (net.patch > fit) {
            log::warn("training patch larger than slices, shrinking to " + std::to_string(fit), "train");
            net.patch = fit;
          }
          nn::Model model(net);
          const auto history = nn::train(model, nn::make_training_set(raw, lif, ce, net));
          nn::save_checkpoint(paths.checkpoint, model);
          nn::write_loss_csv(paths.loss, history);
          const nlohmann::json inputs{input_record(paths.preprocessed), input_record(paths.lif),
                                      input_record(paths.ce_lif)};
          write_provenance(paths.checkpoint, "train", inputs, net);
          write_provenance(paths.loss, "train", inputs, net);
        });
  }

  std::optional<nn::Model> model;
  auto get_model = [&]() -> const nn::Model& {
    if (!model) model.emplace(nn::load_checkpoint(checkpoint));
    return *model;
  };

  stages.run(
      "infer", {paths.latent},
      [&] {
        const Volume3D vol = load_volume(paths.preprocessed);
        save_volume_artifact(nn::infer_latent(get_model(), vol), paths.latent, "infer",
                             {input_record(paths.preprocessed), input_record(checkpoint)},
                             {{"latent", "mu"}});
      });

  stages.run(
      "binarize", {paths.mask},
      [&] {
        const BinaryMask mask = binarize_pipeline(load_volume(paths.latent), cfg.binarize);
        save_mask_artifact(mask.data, paths.mask, "binarize", {input_record(paths.latent)}, mask.provenance);
      });

  if (cfg.ground_truth && cfg.run_eval) {
    stages.run(
        "eval", {paths.report_csv, paths.report_json, paths.per_slice_csv},
        [&] {
          const Volume3D vol = load_volume(paths.preprocessed);
          const MaskVolume gt = load_mask(*cfg.ground_truth);
          ComparisonOptions options;
          options.methods = cfg.eval_methods;
          options.binarize = cfg.binarize;
          options.vesselness = cfg.vesselness;
          options.fusion = cfg.fusion;
          options.registration = cfg.registration;
          const bool wants_model = std::find(options.methods.begin(), options.methods.end(), "life") !=
                                   options.methods.end();
          if (wants_model) options.model = &get_model();
          if (std::any_of(options.methods.begin(), options.methods.end(),
                          [](const std::string& m) { return m == "lif" || m == "celif"; })) {
            options.lif = LifVolumes{load_volume(paths.lif), load_volume(paths.ce_lif)};
          }
          const ComparisonReport report = compare_methods(vol, gt, options);
          write_report_csv(paths.report_csv, report);
          write_per_slice_csv(paths.per_slice_csv, report);
          std::ofstream(paths.report_json) << to_json(report).dump(2) << '\n';
          const nlohmann::json inputs{input_record(paths.preprocessed), input_record(*cfg.ground_truth)};
          const nlohmann::json params{{"methods", cfg.eval_methods}};
          write_provenance(paths.report_csv, "eval", inputs, params);
          write_provenance(paths.report_json, "eval", inputs, params);
          write_provenance(paths.per_slice_csv, "eval", inputs, params);
        });
  }
  return result;
}

}  // namespace life
