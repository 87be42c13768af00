#include "life/preprocess.hpp"

#include "life/log.hpp"
#include "life/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>

namespace life {

nlohmann::json to_json(const ArtifactReport& report) {
  nlohmann::json j;
  j["z_thresh"] = std::isfinite(report.z_thresh) ? nlohmann::json(report.z_thresh)
                                                 : nlohmann::json("inf");
  j["flagged"] = report.flagged;
  nlohmann::json scores = nlohmann::json::array();
  for (Index z = 0; z < report.scores.rows(); ++z) {
    std::vector<double> row(report.scores.cols());
    for (Index y = 0; y < report.scores.cols(); ++y) row[y] = report.scores(z, y);
    scores.push_back(row);
  }
  j["scores"] = scores;
  return j;
}

ArtifactReport detect_artifacts(const Volume3D& vol, double z_thresh) {
  if (vol.height() < 3) throw std::invalid_argument("detect_artifacts needs at least 3 rows");
  ArtifactReport report;
  report.z_thresh = z_thresh;
  report.scores = Plane<double>::Zero(vol.depth(), vol.height());
  for (Index z = 0; z < vol.depth(); ++z) {
    const Eigen::ArrayXd means = vol.slice(z).cast<double>().rowwise().mean();
    const double mu = means.mean();
    const double sd = std::sqrt((means - mu).square().mean());
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
      log::warn("zero-variance row means, no rows flagged", "detect_artifacts z=" + std::to_string(z));
      continue;
    }
    for (Index y = 0; y < vol.height(); ++y) {
      const double score = (means[y] - mu) / sd;
      report.scores(z, y) = score;
      if (score > z_thresh) report.flagged.emplace_back(z, y);
    }
  }
  return report;
}

namespace {

struct BinnedCdf {
  double width = 1.0;
  Eigen::ArrayXd mass;  // per-bin probability
  Eigen::ArrayXd cdf;   // cdf at bin edges, size bins + 1

  BinnedCdf(const Eigen::ArrayXf& values, int bins) : width(255.0 / bins) {
    mass = Eigen::ArrayXd::Zero(bins);
    for (float v : values) {
      const double c = std::clamp(static_cast<double>(v), 0.0, 255.0);
      const int b = std::min(bins - 1, static_cast<int>(c / width));
      mass[b] += 1.0;
    }
    mass /= static_cast<double>(values.size());
    cdf = Eigen::ArrayXd::Zero(bins + 1);
    for (int b = 0; b < bins; ++b) cdf[b + 1] = cdf[b] + mass[b];
    cdf[bins] = 1.0;
  }

  double forward(double x) const {
    const int bins = static_cast<int>(mass.size());
    x = std::clamp(x, 0.0, 255.0);
    const int b = std::min(bins - 1, static_cast<int>(x / width));
    const double frac = (x - b * width) / width;
    return cdf[b] + frac * mass[b];
  }

  double inverse(double u) const {
    const int bins = static_cast<int>(mass.size());
    u = std::clamp(u, 0.0, 1.0);
    // First non-empty bin whose upper edge reaches u.
    auto it = std::lower_bound(cdf.data() + 1, cdf.data() + bins + 1, u);
    int b = static_cast<int>(it - (cdf.data() + 1));
    b = std::clamp(b, 0, bins - 1);
    while (b < bins - 1 && mass[b] <= 0) ++b;
    if (mass[b] <= 0) return b * width;
    const double frac = std::clamp((u - cdf[b]) / mass[b], 0.0, 1.0);
    return (b + frac) * width;
  }
};

}  // namespace

Eigen::ArrayXf histogram_match(const Eigen::ArrayXf& src, const Eigen::ArrayXf& ref, int bins) {
  if (src.size() == 0 || ref.size() == 0) throw std::invalid_argument("histogram_match: empty input");
  if (bins < 1) throw std::invalid_argument("histogram_match: bins must be >= 1");
  if (ref.maxCoeff() == ref.minCoeff()) return Eigen::ArrayXf::Constant(src.size(), ref[0]);

  const BinnedCdf fsrc(src, bins);
  const BinnedCdf fref(ref, bins);
  Eigen::ArrayXf out(src.size());
  for (Index i = 0; i < src.size(); ++i) {
    out[i] = static_cast<float>(fref.inverse(fsrc.forward(src[i])));
  }
  return out;
}

Volume3D remove_motion_artifacts(const Volume3D& vol, const ArtifactReport& report, int bins) {
  std::vector<std::set<Index>> flagged_by_slice(static_cast<std::size_t>(vol.depth()));
  for (const auto& [z, y] : report.flagged) {
    if (z < 0 || z >= vol.depth() || y < 0 || y >= vol.height()) {
      throw std::out_of_range("artifact report row out of range");
    }
    flagged_by_slice[static_cast<std::size_t>(z)].insert(y);
  }

  Volume3D out = vol;
  parallel_for(static_cast<std::size_t>(vol.depth()), [&](std::size_t zi) {
    const auto& flagged = flagged_by_slice[zi];
    if (flagged.empty()) return;
    const auto z = static_cast<Index>(zi);
    if (static_cast<Index>(flagged.size()) == vol.height()) {
      log::warn("every row flagged, slice left unchanged", "remove_motion_artifacts z=" + std::to_string(z));
      return;
    }
    const auto src_slice = vol.slice(z);
    auto dst_slice = out.slice(z);
    for (Index y : flagged) {
      Index best = -1;
      for (Index d = 1; d < vol.height() && best < 0; ++d) {
        if (y - d >= 0 && !flagged.contains(y - d)) best = y - d;
        else if (y + d < vol.height() && !flagged.contains(y + d)) best = y + d;
      }
      const Eigen::ArrayXf row = src_slice.row(y).transpose();
      const Eigen::ArrayXf ref = src_slice.row(best).transpose();
      dst_slice.row(y) = histogram_match(row, ref, bins).transpose();
    }
  });
  return out;
}

}  // namespace life
