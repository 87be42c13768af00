#include "life/registration.hpp"

#include "life/filters.hpp"
#include "life/log.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace life {

void RegParams::validate() const {
  if (levels < 1) throw std::invalid_argument("registration levels must be >= 1");
  if (iters_per_level < 0) throw std::invalid_argument("iters_per_level must be >= 0");
  if (smoothing_sigma < 0) throw std::invalid_argument("smoothing_sigma must be >= 0");
  if (!(step > 0)) throw std::invalid_argument("registration step must be > 0");
  if (metric_window < 1) throw std::invalid_argument("metric_window must be >= 1");
  if (!(max_disp > 0)) throw std::invalid_argument("max_disp must be > 0");
}

void to_json(nlohmann::json& j, const RegParams& p) {
  j = {{"levels", p.levels},           {"iters_per_level", p.iters_per_level},
       {"smoothing_sigma", p.smoothing_sigma}, {"step", p.step},
       {"metric_window", p.metric_window},     {"max_disp", p.max_disp}};
}

void from_json(const nlohmann::json& j, RegParams& p) {
  const RegParams d;
  p.levels = j.value("levels", d.levels);
  p.iters_per_level = j.value("iters_per_level", d.iters_per_level);
  p.smoothing_sigma = j.value("smoothing_sigma", d.smoothing_sigma);
  p.step = j.value("step", d.step);
  p.metric_window = j.value("metric_window", d.metric_window);
  p.max_disp = j.value("max_disp", d.max_disp);
}

double ncc(const Image& a, const Image& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("ncc: size mismatch");
  const Eigen::ArrayXXd da = a.cast<double>() - a.cast<double>().mean();
  const Eigen::ArrayXXd db = b.cast<double>() - b.cast<double>().mean();
  const double saa = da.square().sum();
  const double sbb = db.square().sum();
  if (saa <= 0 || sbb <= 0) return 0.0;
  return (da * db).sum() / std::sqrt(saa * sbb);
}

Image warp(const Image& img, const DeformationField2D& field) {
  if (field.u.rows() != img.rows() || field.u.cols() != img.cols() ||
      field.v.rows() != img.rows() || field.v.cols() != img.cols()) {
    throw std::invalid_argument("warp: field and image sizes differ");
  }
  if (!field.u.allFinite() || !field.v.allFinite()) throw std::invalid_argument("warp: non-finite field");
  Image out(img.rows(), img.cols());
  for (Index y = 0; y < img.rows(); ++y) {
    for (Index x = 0; x < img.cols(); ++x) {
      out(y, x) = sample_bilinear(img, static_cast<double>(x) + field.u(y, x),
                                  static_cast<double>(y) + field.v(y, x));
    }
  }
  return out;
}

namespace {

/// Coarse pixel i sits at fine pixel 2i (see downsample2).
DeformationField2D upsample_field(const DeformationField2D& coarse, Index rows, Index cols) {
  DeformationField2D fine = DeformationField2D::zero(rows, cols);
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      fine.u(y, x) = 2.0f * sample_bilinear(coarse.u, 0.5 * x, 0.5 * y);
      fine.v(y, x) = 2.0f * sample_bilinear(coarse.v, 0.5 * x, 0.5 * y);
    }
  }
  return fine;
}

void clamp_magnitude(DeformationField2D& f, double cap) {
  const Image mag = f.magnitude();
  for (Index i = 0; i < mag.size(); ++i) {
    if (mag(i) > cap) {
      const auto s = static_cast<float>(cap / mag(i));
      f.u(i) *= s;
      f.v(i) *= s;
    }
  }
}

Image gradient_x(const Image& img) {
  const Index W = img.cols();
  Image g(img.rows(), W);
  for (Index x = 0; x < W; ++x) {
    const Index l = std::max<Index>(x - 1, 0);
    const Index r = std::min<Index>(x + 1, W - 1);
    g.col(x) = (img.col(r) - img.col(l)) / static_cast<float>(std::max<Index>(r - l, 1));
  }
  return g;
}

Image gradient_y(const Image& img) {
  const Index H = img.rows();
  Image g(H, img.cols());
  for (Index y = 0; y < H; ++y) {
    const Index t = std::max<Index>(y - 1, 0);
    const Index b = std::min<Index>(y + 1, H - 1);
    g.row(y) = (img.row(b) - img.row(t)) / static_cast<float>(std::max<Index>(b - t, 1));
  }
  return g;
}

/// Derivative of the local NCC w.r.t. the warped image intensity.
Image local_ncc_gradient(const Image& fixed, const Image& warped, int radius) {
  const Image mf = box_mean(fixed, radius);
  const Image mw = box_mean(warped, radius);
  const Image sff = (box_mean(fixed.square(), radius) - mf.square()).cwiseMax(0.0f) + 1e-2f;
  const Image sww = (box_mean(warped.square(), radius) - mw.square()).cwiseMax(0.0f) + 1e-2f;
  const Image sfw = box_mean(fixed * warped, radius) - mf * mw;
  return 2.0f * sfw / (sff * sww) * ((fixed - mf) - (sfw / sww) * (warped - mw));
}

void register_level(const Image& moving, const Image& fixed, const RegParams& p, double cap,
                    DeformationField2D& field) {
  float scale = 0.0f;
  for (int it = 0; it < p.iters_per_level; ++it) {
    const Image warped = warp(moving, field);
    const Image dcc = local_ncc_gradient(fixed, warped, p.metric_window);
    const Image fx = dcc * gradient_x(warped);
    const Image fy = dcc * gradient_y(warped);
    const float max_force = (fx.square() + fy.square()).sqrt().maxCoeff();
    if (!(max_force > 0)) break;
    // Step scale is fixed by the first iteration so updates shrink as the
    // forces do near convergence.
    if (it == 0) scale = static_cast<float>(p.step) / max_force;
    const float s = std::min(scale, static_cast<float>(p.step) / max_force);
    field.u = gaussian_blur(field.u + s * fx, p.smoothing_sigma);
    field.v = gaussian_blur(field.v + s * fy, p.smoothing_sigma);
    clamp_magnitude(field, cap);
  }
}

}  // namespace

DeformationField2D register_2d(const Image& moving, const Image& fixed, const RegParams& params) {
  params.validate();
  if (moving.rows() != fixed.rows() || moving.cols() != fixed.cols()) {
    throw std::invalid_argument("register_2d: moving and fixed sizes differ");
  }
  const Index H = fixed.rows();
  const Index W = fixed.cols();
  if (fixed.maxCoeff() == fixed.minCoeff()) {
    log::warn("constant fixed image, returning identity field", "register_2d");
    return DeformationField2D::zero(H, W);
  }

  std::vector<Image> fixed_pyr{fixed};
  std::vector<Image> moving_pyr{moving};
  for (int l = 1; l < params.levels; ++l) {
    if (std::min(fixed_pyr.back().rows(), fixed_pyr.back().cols()) < 16) break;
    fixed_pyr.push_back(downsample2(fixed_pyr.back()));
    moving_pyr.push_back(downsample2(moving_pyr.back()));
  }

  const auto coarsest = static_cast<int>(fixed_pyr.size()) - 1;
  DeformationField2D field =
      DeformationField2D::zero(fixed_pyr[coarsest].rows(), fixed_pyr[coarsest].cols());
  for (int l = coarsest; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    if (l != coarsest) field = upsample_field(field, fixed_pyr[ul].rows(), fixed_pyr[ul].cols());
    const double cap = params.max_disp / std::pow(2.0, l);
    register_level(moving_pyr[ul], fixed_pyr[ul], params, cap, field);
  }
  clamp_magnitude(field, params.max_disp);

  if (ncc(fixed, warp(moving, field)) < ncc(fixed, moving)) {
    log::debug("registration lowered NCC, falling back to identity", "register_2d");
    return DeformationField2D::zero(H, W);
  }
  return field;
}

Volume3D field_as_volume(const DeformationField2D& field) {
  Volume3D out(2, field.u.rows(), field.u.cols());
  out.slice(0) = field.u;
  out.slice(1) = field.v;
  return out;
}

}  // namespace life
