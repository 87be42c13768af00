#include "life/fusion.hpp"

#include "life/filters.hpp"
#include "life/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace life {

void FusionParams::validate() const {
  if (radius < 0) throw std::invalid_argument("fusion radius R must be >= 0");
  if (patch_radius < 0) throw std::invalid_argument("patch_radius must be >= 0");
  if (!(beta > 0)) throw std::invalid_argument("fusion beta must be > 0");
  if (!(eps > 0)) throw std::invalid_argument("fusion eps must be > 0");
  if (!(contrast_factor >= 1)) throw std::invalid_argument("contrast_factor must be >= 1");
}

void to_json(nlohmann::json& j, const FusionParams& p) {
  j = {{"R", p.radius},   {"patch_radius", p.patch_radius}, {"beta", p.beta},
       {"eps", p.eps},    {"contrast_factor", p.contrast_factor}};
}

void from_json(const nlohmann::json& j, FusionParams& p) {
  const FusionParams d;
  p.radius = j.value("R", d.radius);
  p.patch_radius = j.value("patch_radius", d.patch_radius);
  p.beta = j.value("beta", d.beta);
  p.eps = j.value("eps", d.eps);
  p.contrast_factor = j.value("contrast_factor", d.contrast_factor);
}

std::vector<Image> local_weights(const Image& target, const std::vector<Image>& warped_atlases,
                                 const FusionParams& params) {
  if (warped_atlases.empty()) throw std::invalid_argument("local_weights: empty atlas list");
  for (const auto& a : warped_atlases) {
    if (a.rows() != target.rows() || a.cols() != target.cols()) {
      throw std::invalid_argument("local_weights: atlas size differs from target");
    }
  }
  const std::size_t K = warped_atlases.size();
  const Index H = target.rows();
  const Index W = target.cols();
  constexpr float kInv255 = 1.0f / 255.0f;

  // Work in log space: log w_k = -beta * log(e_k + eps), normalized with a softmax.
  std::vector<Eigen::ArrayXXd> log_w(K);
  Eigen::ArrayXXd max_log = Eigen::ArrayXXd::Constant(H, W, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < K; ++k) {
    const Image diff = (target - warped_atlases[k]) * kInv255;
    const Image err = box_mean(diff.square(), params.patch_radius).cwiseMax(0.0f);
    log_w[k] = -params.beta * (err.cast<double>() + params.eps).log();
    max_log = max_log.max(log_w[k]);
  }
  Eigen::ArrayXXd total = Eigen::ArrayXXd::Zero(H, W);
  for (auto& lw : log_w) {
    lw = (lw - max_log).exp();
    total += lw;
  }
  std::vector<Image> weights(K);
  for (std::size_t k = 0; k < K; ++k) weights[k] = (log_w[k] / total).cast<float>();
  return weights;
}

Image fuse(const std::vector<Image>& atlases, const std::vector<Image>& weights) {
  if (atlases.empty() || atlases.size() != weights.size()) {
    throw std::invalid_argument("fuse: atlas/weight count mismatch");
  }
  const Index H = atlases.front().rows();
  const Index W = atlases.front().cols();
  Eigen::ArrayXXd acc = Eigen::ArrayXXd::Zero(H, W);
  Image lo = atlases.front();
  Image hi = atlases.front();
  for (std::size_t k = 0; k < atlases.size(); ++k) {
    acc += weights[k].cast<double>() * atlases[k].cast<double>();
    lo = lo.min(atlases[k]);
    hi = hi.max(atlases[k]);
  }
  return acc.cast<float>().max(lo).min(hi);
}

FusionResult lif_slice(const Volume3D& vol, Index z, const FusionParams& params,
                       const RegParams& reg) {
  params.validate();
  if (z < 0 || z >= vol.depth()) throw std::out_of_range("lif_slice: z out of range");
  const Image target = vol.slice(z);

  FusionResult result;
  std::vector<Image> atlases;
  for (Index k = z - params.radius; k <= z + params.radius; ++k) {
    if (k < 0 || k >= vol.depth()) continue;
    result.atlas_z.push_back(k);
    atlases.emplace_back();
  }
  parallel_for(atlases.size(), [&](std::size_t i) {
    const Index k = result.atlas_z[i];
    if (k == z) {
      atlases[i] = target;
    } else {
      const Image moving = vol.slice(k);
      atlases[i] = warp(moving, register_2d(moving, target, reg));
    }
  });

  result.weights = local_weights(target, atlases, params);
  result.lif = fuse(atlases, result.weights);
  result.ce_lif = contrast_enhance(result.lif, params.contrast_factor);
  return result;
}

LifVolumes lif_volume(const Volume3D& vol, const FusionParams& params, const RegParams& reg) {
  params.validate();
  LifVolumes out{Volume3D(vol.depth(), vol.height(), vol.width()),
                 Volume3D(vol.depth(), vol.height(), vol.width())};
  out.lif.spacing = out.ce_lif.spacing = vol.spacing;
  parallel_for(static_cast<std::size_t>(vol.depth()), [&](std::size_t zi) {
    const auto z = static_cast<Index>(zi);
    FusionResult r = lif_slice(vol, z, params, reg);
    out.lif.slice(z) = r.lif;
    out.ce_lif.slice(z) = r.ce_lif;
  });
  return out;
}

Image contrast_enhance(const Image& img, double factor) {
  if (factor < 0) throw std::invalid_argument("contrast factor must be >= 0");
  const double mean = img.cast<double>().mean();
  return (mean + factor * (img.cast<double>() - mean)).cwiseMax(0.0).cwiseMin(255.0).cast<float>();
}

}  // namespace life
