#pragma once

#include "life/volume.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace life {

struct DiffusionParams {
  double K = 10.0;       // edge-stopping contrast (intensity units)
  double lambda = 0.2;   // time step
  int iters = 10;
  int dims = 2;          // 2: slice-wise 4-neighbor, 3: 6-neighbor

  void validate() const;
};

void to_json(nlohmann::json& j, const DiffusionParams& p);
void from_json(const nlohmann::json& j, DiffusionParams& p);

struct BinaryMask {
  MaskVolume data;
  nlohmann::json provenance;
};

/// Explicit Perona-Malik diffusion with conductance g(s) = 1 / (1 + (s/K)^2)
/// and zero-flux boundaries.
Volume3D perona_malik(const Volume3D& vol, const DiffusionParams& params);

struct OtsuResult {
  double threshold = 0;
  BinaryMask mask;  // voxel > threshold
};

/// Histogram edges used by otsu(): candidate k is min + (k + 1) * width.
double otsu_edge(double lo, double hi, int bins, int k);

/// Global Otsu over `bins` equal-width bins spanning [min, max]; ties go to
/// the lower threshold. Throws on a constant volume.
OtsuResult otsu(const Volume3D& vol, int bins = 256);

/// Two-cluster 1D k-means; foreground is the higher-center cluster.
BinaryMask kmeans_binarize(const Volume3D& vol, std::uint64_t seed = 0);

/// Component labels (0 = background, 1..n) with 6- or 26-connectivity.
Volume<std::int32_t> label_components(const MaskVolume& mask, int connectivity, int* count = nullptr);

/// Drops components with fewer than `min_size` voxels.
BinaryMask remove_islands(const BinaryMask& mask, int min_size = 30, int connectivity = 26);

struct BinarizeParams {
  DiffusionParams diffusion;
  int bins = 256;
  int min_island = 30;
  int connectivity = 26;
};

void to_json(nlohmann::json& j, const BinarizeParams& p);
void from_json(const nlohmann::json& j, BinarizeParams& p);

/// perona_malik -> otsu -> remove_islands, all parameters in provenance.
BinaryMask binarize_pipeline(const Volume3D& vol, const BinarizeParams& params = {});

}  // namespace life
