#pragma once

#include "life/volume.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <vector>

namespace life {

/// The six unique second derivatives at one scale, sigma^2-normalized.
struct HessianField {
  Volume3D xx, yy, zz, xy, xz, yz;
  double scale = 1.0;

  Eigen::Matrix3d at(Index z, Index y, Index x) const;
};

/// Separable Gaussian-derivative convolution with mirror boundaries. The
/// derivative axes are filtered first, so adding a constant to an
/// integer-valued volume leaves the result bit-identical.
HessianField hessian_3d(const Volume3D& vol, double sigma);

/// Gradient of the Gaussian-smoothed volume, components (x, y, z).
std::array<Volume3D, 3> gaussian_gradient(const Volume3D& vol, double sigma);

/// Eigenpairs of a symmetric 3x3 matrix ordered by |lambda| ascending.
struct SymEigen3 {
  Eigen::Vector3d values;
  Eigen::Matrix3d vectors;  // column i pairs with values[i]
};

SymEigen3 eig_sym3(const Eigen::Matrix3d& h);
Eigen::Vector3d eigenvalues_sym3(const Eigen::Matrix3d& h);

struct VesselnessParams {
  std::vector<double> sigmas{1.0, 2.0, 3.0, 4.0};
  double alpha = 0.5;
  double beta = 0.5;
  double c = 0.5;  // fraction of the per-scale max Frobenius norm
  std::vector<double> oof_radii{1.0, 2.0, 3.0, 4.0, 5.0};
  double oof_sigma = 1.0;  // gradient smoothing for OOF
  bool bright_on_dark = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const VesselnessParams& p);
void from_json(const nlohmann::json& j, VesselnessParams& p);

/// Per-voxel blob/plate ratios and structureness at one scale.
struct FrangiComponents {
  Volume3D ra;  // |l2| / |l3|
  Volume3D rb;  // |l1| / sqrt(|l2 l3|)
  Volume3D s;   // Frobenius norm
};

FrangiComponents frangi_components(const Volume3D& vol, double sigma);

/// Multiscale Frangi vesselness, max over scales.
Volume3D frangi(const Volume3D& vol, const VesselnessParams& params = {});

/// Optimally oriented flux by spatial quadrature over a 110-point sphere.
/// Response -(l1 + l2)/2 of the flux matrix, clamped at 0, divided by r,
/// max over radii.
Volume3D oof(const Volume3D& vol, const VesselnessParams& params = {});

/// Quadrature directions used by oof() (unit vectors, equal weights).
const std::vector<Eigen::Vector3d>& sphere_directions();

}  // namespace life
