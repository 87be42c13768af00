#pragma once

#include "life/volume.hpp"

#include <json.hpp>

namespace life {

/// Per-pixel displacement (pixels). warp() samples the moving image at
/// (x + u, y + v).
struct DeformationField2D {
  Image u;  // x component
  Image v;  // y component

  static DeformationField2D zero(Index rows, Index cols) {
    return {Image::Zero(rows, cols), Image::Zero(rows, cols)};
  }
  Image magnitude() const { return (u.square() + v.square()).sqrt(); }
  double rms() const { return std::sqrt(static_cast<double>((u.square() + v.square()).mean())); }
};

struct RegParams {
  int levels = 3;
  int iters_per_level = 30;
  double smoothing_sigma = 1.0;  // field regularization (px at each level)
  double step = 0.5;             // max update per iteration (px at each level)
  int metric_window = 3;         // local NCC window radius (px)
  double max_disp = 8.0;         // displacement cap (px, full resolution)

  void validate() const;
};

void to_json(nlohmann::json& j, const RegParams& p);
void from_json(const nlohmann::json& j, RegParams& p);

/// Global normalized cross-correlation. Returns 0 if either image is constant.
double ncc(const Image& a, const Image& b);

/// Bilinear resampling of `img` at (x + u, y + v), edge clamped.
Image warp(const Image& img, const DeformationField2D& field);

/// Greedy multi-resolution registration of `moving` onto `fixed`, driven by
/// local-NCC gradient forces with Gaussian regularization of the total field.
/// The returned field never lowers ncc(fixed, warp(moving, field)) below the
/// identity's value; it falls back to the zero field instead.
DeformationField2D register_2d(const Image& moving, const Image& fixed,
                               const RegParams& params = {});

/// Two-channel (u, v) dump of a field in the volume container, for debugging.
Volume3D field_as_volume(const DeformationField2D& field);

}  // namespace life
