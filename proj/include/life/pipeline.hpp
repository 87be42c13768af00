#pragma once

#include "life/binarize.hpp"
#include "life/fusion.hpp"
#include "life/nn/model.hpp"
#include "life/registration.hpp"
#include "life/vesselness.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace life {

struct PreprocessParams {
  bool enabled = true;
  double z_thresh = 2.0;
  int bins = 256;
};

void to_json(nlohmann::json& j, const PreprocessParams& p);
void from_json(const nlohmann::json& j, PreprocessParams& p);

struct PipelineConfig {
  std::filesystem::path input;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> ground_truth;
  /// Existing checkpoint to use instead of training.
  std::optional<std::filesystem::path> checkpoint;
  std::uint64_t seed = 1;

  PreprocessParams preprocess;
  FusionParams fusion;
  RegParams registration;
  nn::LifeConfig network;
  BinarizeParams binarize;
  VesselnessParams vesselness;
  std::vector<std::string> eval_methods{"kmeans", "otsu", "frangi", "oof", "life"};
  bool run_eval = true;

  /// Throws std::invalid_argument on missing paths or bad parameters.
  void validate() const;
};

/// Parses a config. Relative paths resolve against `base_dir`. Unknown keys
/// are rejected.
PipelineConfig parse_pipeline_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& cfg);

struct StageStatus {
  std::string name;
  bool skipped = false;
};

struct PipelineResult {
  std::vector<StageStatus> stages;
};

/// Standard artifact locations inside the output directory.
struct PipelinePaths {
  std::filesystem::path preprocessed, artifacts, lif, ce_lif, checkpoint, loss, latent, mask, report_csv,
      report_json, per_slice_csv;
  explicit PipelinePaths(const std::filesystem::path& dir);
};

/// preprocess -> LIF/CE-LIF -> train (or load) -> infer latent -> binarize ->
/// eval (when ground truth is configured). Stages whose outputs already exist
/// are skipped unless `force`. A failing stage throws std::runtime_error
/// naming the stage.
PipelineResult run_pipeline(const PipelineConfig& cfg, bool force = false);

/// Saves a volume and its provenance record.
void save_volume_artifact(const Volume3D& vol, const std::filesystem::path& path, std::string_view stage,
                          const nlohmann::json& inputs, const nlohmann::json& params);
void save_mask_artifact(const MaskVolume& mask, const std::filesystem::path& path, std::string_view stage,
                        const nlohmann::json& inputs, const nlohmann::json& params);

/// {"path": ..., "hash": ...} entry for a provenance input list.
nlohmann::json input_record(const std::filesystem::path& path);

/// True when both the header and the payload of a volume exist.
bool volume_exists(const std::filesystem::path& path);

}  // namespace life
