#pragma once

#include "life/volume.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <utility>
#include <vector>

namespace life {

struct ArtifactReport {
  /// (z, y) rows whose row-mean z-score exceeded the threshold, sorted.
  std::vector<std::pair<Index, Index>> flagged;
  /// scores(z, y): z-score of row y's mean intensity within en-face slice z.
  Plane<double> scores;
  double z_thresh = 2.0;
};

nlohmann::json to_json(const ArtifactReport& report);

/// Flags bright horizontal stripes: rows whose mean intensity is more than
/// `z_thresh` standard deviations above the slice's mean row intensity.
ArtifactReport detect_artifacts(const Volume3D& vol, double z_thresh = 2.0);

/// Monotone CDF matching over [0, 255]: out = F_ref^-1(F_src(x)), both CDFs
/// piecewise linear over `bins` equal-width bins.
Eigen::ArrayXf histogram_match(const Eigen::ArrayXf& src, const Eigen::ArrayXf& ref, int bins = 256);

/// Replaces each flagged row with its histogram matched to the nearest
/// unflagged row of the same slice (smallest |dy|, ties to the smaller y).
Volume3D remove_motion_artifacts(const Volume3D& vol, const ArtifactReport& report, int bins = 256);

}  // namespace life
