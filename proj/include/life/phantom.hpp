#pragma once

#include "life/volume.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace life {

/// One centerline polyline in voxel coordinates (x, y, z) with a radius per point.
struct VesselBranch {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> radii;
};

struct VesselTree {
  std::vector<VesselBranch> branches;
  double intensity = 200.0;
};

struct PhantomSpec {
  std::array<Index, 3> dims{16, 64, 64};
  int n_trees = 3;
  std::pair<double, double> radius_range{1.0, 2.5};
  std::pair<double, double> vessel_intensity_range{120.0, 220.0};
  double background_level = 30.0;
  double speckle_shape = 2.0;
  double depth_jitter = 2.0;
  std::vector<std::pair<Index, Index>> artifact_rows;
  double artifact_gain = 1.0;
  std::uint64_t seed = 1;

  // Tree geometry. Not tied to any measured anatomy.
  double max_turn = 0.25;           // radians per unit step
  double branch_probability = 0.02; // per step
  int max_branch_depth = 2;

  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomSpec& spec);
void from_json(const nlohmann::json& j, PhantomSpec& spec);

struct Phantom {
  Volume3D volume;
  MaskVolume mask;
  Volume3D clean;  // before speckle and artifacts
};

std::vector<VesselTree> grow_trees(const PhantomSpec& spec);

/// Rasterizes the trees (cosine-tapered tube profile, max-combined), applies
/// mean-one gamma speckle and the configured motion artifacts.
Phantom render_phantom(const PhantomSpec& spec, const std::vector<VesselTree>& trees);

Phantom generate_phantom(const PhantomSpec& spec);

/// Scales the listed (z, y) rows by `gain` and clamps to [0, 255].
Volume3D inject_motion_artifact(const Volume3D& vol,
                                const std::vector<std::pair<Index, Index>>& rows, double gain);

/// A volume where vessel A lives only in the target slice and vessel B only in
/// the slices z +- 1..R around it, so fusing the neighborhood paints B onto the
/// target slice although the target's ground truth excludes it.
struct PhantomVesselCase {
  Volume3D volume;
  MaskVolume masks;  // per-slice ground truth
  Index target_z = 0;
  Plane<std::uint8_t> a_footprint;
  Plane<std::uint8_t> b_footprint;
};

PhantomVesselCase make_phantom_vessel_case(const PhantomSpec& spec, int radius_r);

/// Tube profile used for rasterization: 1 inside radius - 0.5, cosine taper to
/// 0 at radius + 0.5.
double tube_profile(double distance, double radius);

}  // namespace life
