#pragma once

#include "life/binarize.hpp"
#include "life/fusion.hpp"
#include "life/nn/model.hpp"
#include "life/registration.hpp"
#include "life/vesselness.hpp"
#include "life/volume.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace life {

struct SegScores {
  double tpr = 0, fpr = 0, accuracy = 0, dice = 0;
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

void to_json(nlohmann::json& j, const SegScores& s);

/// Rates from raw counts. With no positives in the ground truth, dice is 1
/// when the prediction is empty too and 0 otherwise; tpr is then 1.
SegScores scores_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn);

SegScores score(const MaskVolume& pred, const MaskVolume& gt);

/// One score per en-face slice.
std::vector<SegScores> per_slice_scores(const MaskVolume& pred, const MaskVolume& gt);

struct SummaryStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};

void to_json(nlohmann::json& j, const SummaryStats& s);

/// Quartiles by linear interpolation between order statistics.
SummaryStats summarize(std::vector<double> values);

/// Known method names: kmeans, otsu, frangi, oof, life, lif, celif.
const std::vector<std::string>& known_methods();

struct ComparisonOptions {
  std::vector<std::string> methods{"kmeans", "otsu", "frangi", "oof", "life"};
  BinarizeParams binarize;
  VesselnessParams vesselness;
  FusionParams fusion;
  RegParams registration;
  const nn::Model* model = nullptr;      // required for "life"
  std::optional<LifVolumes> lif;         // computed on demand for "lif"/"celif"
};

struct MethodResult {
  std::string method;
  SegScores scores;
  std::vector<SegScores> slices;
  MaskVolume mask;
  nlohmann::json parameters;
};

struct ComparisonReport {
  std::vector<MethodResult> methods;
};

/// Runs each requested method end to end on `vol` and scores it against `gt`.
ComparisonReport compare_methods(const Volume3D& vol, const MaskVolume& gt, const ComparisonOptions& options);

nlohmann::json to_json(const ComparisonReport& report);

/// method,tpr,fpr,accuracy,dice
void write_report_csv(const std::filesystem::path& path, const ComparisonReport& report);

/// method,z,tp,fp,tn,fn,tpr,fpr,accuracy,dice
void write_per_slice_csv(const std::filesystem::path& path, const ComparisonReport& report);

}  // namespace life
