#pragma once

#include "life/registration.hpp"
#include "life/volume.hpp"

#include <json.hpp>

#include <vector>

namespace life {

struct FusionParams {
  int radius = 2;          // neighborhood radius R, atlases z-R..z+R
  int patch_radius = 2;    // local error window half-width (px)
  double beta = 1.0;       // weight sharpness
  double eps = 0.05;       // error floor, on [0,1]-rescaled intensities
  double contrast_factor = 1.5;

  void validate() const;
};

void to_json(nlohmann::json& j, const FusionParams& p);
void from_json(const nlohmann::json& j, FusionParams& p);

struct FusionResult {
  Image lif;
  Image ce_lif;
  std::vector<Image> weights;     // one map per atlas, summing to 1 per pixel
  std::vector<Index> atlas_z;     // source slice of each atlas
};

/// w_k proportional to (box-filtered squared error + eps)^-beta, normalized per pixel.
std::vector<Image> local_weights(const Image& target, const std::vector<Image>& warped_atlases,
                                 const FusionParams& params);

/// Weighted sum of atlases, clamped to the per-pixel atlas range.
Image fuse(const std::vector<Image>& atlases, const std::vector<Image>& weights);

/// Fuses slice z with its registered neighbors z-R..z+R. Neighbors past the
/// volume boundary are dropped; the target enters unwarped.
FusionResult lif_slice(const Volume3D& vol, Index z, const FusionParams& params,
                       const RegParams& reg = {});

struct LifVolumes {
  Volume3D lif;
  Volume3D ce_lif;
};

LifVolumes lif_volume(const Volume3D& vol, const FusionParams& params, const RegParams& reg = {});

/// clamp(mean + factor * (in - mean), 0, 255) with the mean taken over the slice.
Image contrast_enhance(const Image& img, double factor);

}  // namespace life
