#include "life/vesselness.hpp"

#include "life/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace life {

namespace {

enum class Axis { x, y, z };

Index mirror(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Kernel taps for k = 0..r of a Gaussian derivative of the given order.
/// Moments are fixed so order 0 sums to 1, order 1 maps x to 1 and order 2
/// maps x^2 to 2 exactly.
Eigen::ArrayXd half_kernel(double sigma, int order) {
  const int r = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  Eigen::ArrayXd g(r + 1);
  for (int k = 0; k <= r; ++k) g[k] = std::exp(-0.5 * k * k / (sigma * sigma));
  if (order == 0) {
    const double total = g[0] + 2.0 * g.tail(r).sum();
    return g / total;
  }
  if (order == 1) {
    Eigen::ArrayXd d(r + 1);
    d[0] = 0;
    double moment = 0;
    for (int k = 1; k <= r; ++k) {
      d[k] = -k / (sigma * sigma) * g[k];
      moment += 2.0 * k * d[k];
    }
    return d * (-1.0 / moment);
  }
  Eigen::ArrayXd d(r + 1);
  double tail = 0;
  for (int k = 1; k <= r; ++k) {
    d[k] = (k * k / std::pow(sigma, 4) - 1.0 / (sigma * sigma)) * g[k];
    tail += d[k];
  }
  d[0] = -2.0 * tail;
  double moment = 0;
  for (int k = 1; k <= r; ++k) moment += 2.0 * k * k * d[k];
  return d * (2.0 / moment);
}

/// 1D filter along one axis. Order 1 uses antisymmetric differences and
/// order 2 uses second differences, so constants cancel before any weighting.
Volume<double> filter_axis(const Volume<double>& in, Axis axis, const Eigen::ArrayXd& k, int order) {
  const Index Z = in.depth(), H = in.height(), W = in.width();
  const Index n = axis == Axis::x ? W : axis == Axis::y ? H : Z;
  const Index stride = axis == Axis::x ? 1 : axis == Axis::y ? W : H * W;
  const int r = static_cast<int>(k.size()) - 1;
  Volume<double> out(Z, H, W);
  const double* src = in.data().data();
  double* dst = out.data().data();

  parallel_for(static_cast<std::size_t>(Z), [&](std::size_t zi) {
    const auto z = static_cast<Index>(zi);
    for (Index y = 0; y < H; ++y) {
      for (Index x = 0; x < W; ++x) {
        const Index pos = axis == Axis::x ? x : axis == Axis::y ? y : z;
        const Index base = (z * H + y) * W + x - pos * stride;
        auto at = [&](Index i) { return src[base + mirror(i, n) * stride]; };
        double acc = 0;
        if (order == 0) {
          acc = k[0] * at(pos);
          for (int j = 1; j <= r; ++j) acc += k[j] * (at(pos - j) + at(pos + j));
        } else if (order == 1) {
          for (int j = 1; j <= r; ++j) acc += k[j] * (at(pos - j) - at(pos + j));
        } else {
          const double c = at(pos);
          for (int j = 1; j <= r; ++j) acc += k[j] * ((at(pos - j) - c) + (at(pos + j) - c));
        }
        dst[(z * H + y) * W + x] = acc;
      }
    }
  });
  return out;
}

/// Applies per-axis derivative orders, derivative axes first.
Volume3D separable_derivative(const Volume<double>& vol, double sigma, int ox, int oy, int oz) {
  struct Pass {
    Axis axis;
    int order;
  };
  std::vector<Pass> passes{{Axis::x, ox}, {Axis::y, oy}, {Axis::z, oz}};
  std::stable_sort(passes.begin(), passes.end(),
                   [](const Pass& a, const Pass& b) { return a.order > b.order; });
  Volume<double> cur = vol;
  for (const auto& p : passes) cur = filter_axis(cur, p.axis, half_kernel(sigma, p.order), p.order);
  return cur.cast<float>();
}

}  // namespace

Eigen::Matrix3d HessianField::at(Index z, Index y, Index x) const {
  Eigen::Matrix3d h;
  h << xx(z, y, x), xy(z, y, x), xz(z, y, x),
       xy(z, y, x), yy(z, y, x), yz(z, y, x),
       xz(z, y, x), yz(z, y, x), zz(z, y, x);
  return h;
}

HessianField hessian_3d(const Volume3D& vol, double sigma) {
  if (!(sigma >= 0.5)) throw std::invalid_argument("hessian_3d: sigma must be >= 0.5");
  const Volume<double> v = vol.cast<double>();
  const auto norm = static_cast<float>(sigma * sigma);
  HessianField h;
  h.scale = sigma;
  h.xx = separable_derivative(v, sigma, 2, 0, 0);
  h.yy = separable_derivative(v, sigma, 0, 2, 0);
  h.zz = separable_derivative(v, sigma, 0, 0, 2);
  h.xy = separable_derivative(v, sigma, 1, 1, 0);
  h.xz = separable_derivative(v, sigma, 1, 0, 1);
  h.yz = separable_derivative(v, sigma, 0, 1, 1);
  for (Volume3D* c : {&h.xx, &h.yy, &h.zz, &h.xy, &h.xz, &h.yz}) c->data() *= norm;
  return h;
}

std::array<Volume3D, 3> gaussian_gradient(const Volume3D& vol, double sigma) {
  if (!(sigma >= 0.5)) throw std::invalid_argument("gaussian_gradient: sigma must be >= 0.5");
  const Volume<double> v = vol.cast<double>();
  return {separable_derivative(v, sigma, 1, 0, 0), separable_derivative(v, sigma, 0, 1, 0),
          separable_derivative(v, sigma, 0, 0, 1)};
}

namespace {

void sort_by_magnitude(Eigen::Vector3d& values, Eigen::Matrix3d* vectors) {
  std::array<int, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return std::abs(values[a]) < std::abs(values[b]); });
  const Eigen::Vector3d v = values;
  for (int i = 0; i < 3; ++i) values[i] = v[idx[i]];
  if (vectors) {
    const Eigen::Matrix3d m = *vectors;
    for (int i = 0; i < 3; ++i) vectors->col(i) = m.col(idx[i]);
  }
}

}  // namespace

SymEigen3 eig_sym3(const Eigen::Matrix3d& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
  solver.computeDirect(h, Eigen::ComputeEigenvectors);
  SymEigen3 out{solver.eigenvalues(), solver.eigenvectors()};
  sort_by_magnitude(out.values, &out.vectors);
  return out;
}

Eigen::Vector3d eigenvalues_sym3(const Eigen::Matrix3d& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
  solver.computeDirect(h, Eigen::EigenvaluesOnly);
  Eigen::Vector3d values = solver.eigenvalues();
  sort_by_magnitude(values, nullptr);
  return values;
}

void VesselnessParams::validate() const {
  auto check = [](const std::vector<double>& v, const char* what) {
    if (v.empty()) throw std::invalid_argument(std::string(what) + " list is empty");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] > 0)) throw std::invalid_argument(std::string(what) + " must be positive");
      if (i > 0 && v[i] < v[i - 1]) throw std::invalid_argument(std::string(what) + " must be sorted");
    }
  };
  check(sigmas, "sigmas");
  check(oof_radii, "oof_radii");
  if (!(alpha > 0) || !(beta > 0) || !(c > 0)) throw std::invalid_argument("alpha, beta, c must be > 0");
  if (!(oof_sigma >= 0.5)) throw std::invalid_argument("oof_sigma must be >= 0.5");
}

void to_json(nlohmann::json& j, const VesselnessParams& p) {
  j = {{"sigmas", p.sigmas},       {"alpha", p.alpha},         {"beta", p.beta},
       {"c", p.c},                 {"oof_radii", p.oof_radii}, {"oof_sigma", p.oof_sigma},
       {"bright_on_dark", p.bright_on_dark},
       {"oof_response", "-(l1+l2)/2 clamped at 0, scaled by 1/r"}};
}

void from_json(const nlohmann::json& j, VesselnessParams& p) {
  const VesselnessParams d;
  p.sigmas = j.value("sigmas", d.sigmas);
  p.alpha = j.value("alpha", d.alpha);
  p.beta = j.value("beta", d.beta);
  p.c = j.value("c", d.c);
  p.oof_radii = j.value("oof_radii", d.oof_radii);
  p.oof_sigma = j.value("oof_sigma", d.oof_sigma);
  p.bright_on_dark = j.value("bright_on_dark", d.bright_on_dark);
}

FrangiComponents frangi_components(const Volume3D& vol, double sigma) {
  const HessianField h = hessian_3d(vol, sigma);
  const Index Z = vol.depth(), H = vol.height(), W = vol.width();
  FrangiComponents out{Volume3D(Z, H, W), Volume3D(Z, H, W), Volume3D(Z, H, W)};
  parallel_for(static_cast<std::size_t>(Z), [&](std::size_t zi) {
    const auto z = static_cast<Index>(zi);
    for (Index y = 0; y < H; ++y) {
      for (Index x = 0; x < W; ++x) {
        const Eigen::Vector3d l = eigenvalues_sym3(h.at(z, y, x));
        const double a1 = std::abs(l[0]), a2 = std::abs(l[1]), a3 = std::abs(l[2]);
        out.ra(z, y, x) = a3 > 0 ? static_cast<float>(a2 / a3) : 0.0f;
        out.rb(z, y, x) = a2 * a3 > 0 ? static_cast<float>(a1 / std::sqrt(a2 * a3)) : 0.0f;
        out.s(z, y, x) = static_cast<float>(l.norm());
      }
    }
  });
  return out;
}

Volume3D frangi(const Volume3D& vol, const VesselnessParams& params) {
  params.validate();
  const Index Z = vol.depth(), H = vol.height(), W = vol.width();
  Volume3D best(Z, H, W, 0.0f);
  for (double sigma : params.sigmas) {
    const HessianField h = hessian_3d(vol, sigma);
    Volume<double> l2v(Z, H, W), l3v(Z, H, W), rav(Z, H, W), rbv(Z, H, W), sv(Z, H, W);
    parallel_for(static_cast<std::size_t>(Z), [&](std::size_t zi) {
      const auto z = static_cast<Index>(zi);
      for (Index y = 0; y < H; ++y) {
        for (Index x = 0; x < W; ++x) {
          const Eigen::Vector3d l = eigenvalues_sym3(h.at(z, y, x));
          const double a1 = std::abs(l[0]), a2 = std::abs(l[1]), a3 = std::abs(l[2]);
          l2v(z, y, x) = l[1];
          l3v(z, y, x) = l[2];
          rav(z, y, x) = a3 > 0 ? a2 / a3 : 0.0;
          rbv(z, y, x) = a2 * a3 > 0 ? a1 / std::sqrt(a2 * a3) : 0.0;
          sv(z, y, x) = l.norm();
        }
      }
    });
    const double s_max = sv.data().maxCoeff();
    if (!(s_max > 0)) continue;
    const double c = params.c * s_max;
    const double two_a2 = 2 * params.alpha * params.alpha;
    const double two_b2 = 2 * params.beta * params.beta;
    const double two_c2 = 2 * c * c;
    for (Index i = 0; i < best.size(); ++i) {
      const double l2 = l2v.data()[i], l3 = l3v.data()[i];
      const bool wrong_sign = params.bright_on_dark ? (l2 > 0 || l3 > 0) : (l2 < 0 || l3 < 0);
      if (wrong_sign || l3 == 0) continue;
      const double ra = rav.data()[i], rb = rbv.data()[i], s = sv.data()[i];
      const double v = (1 - std::exp(-ra * ra / two_a2)) * std::exp(-rb * rb / two_b2) *
                       (1 - std::exp(-s * s / two_c2));
      best.data()[i] = std::max(best.data()[i], static_cast<float>(v));
    }
  }
  best.spacing = vol.spacing;
  return best;
}

const std::vector<Eigen::Vector3d>& sphere_directions() {
  static const std::vector<Eigen::Vector3d> dirs = [] {
    // Fibonacci points on the upper hemisphere plus their antipodes.
    constexpr int half = 55;
    std::vector<Eigen::Vector3d> d;
    d.reserve(2 * half);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < half; ++i) {
      const double z = 1.0 - (i + 0.5) / half;
      const double rho = std::sqrt(1.0 - z * z);
      const double phi = golden * i;
      d.emplace_back(rho * std::cos(phi), rho * std::sin(phi), z);
    }
    for (int i = 0; i < half; ++i) d.push_back(-d[static_cast<std::size_t>(i)]);
    return d;
  }();
  return dirs;
}

namespace {

double trilinear(const Volume3D& v, double x, double y, double z) {
  const Index Z = v.depth(), H = v.height(), W = v.width();
  x = std::clamp(x, 0.0, static_cast<double>(W - 1));
  y = std::clamp(y, 0.0, static_cast<double>(H - 1));
  z = std::clamp(z, 0.0, static_cast<double>(Z - 1));
  const auto x0 = static_cast<Index>(x), y0 = static_cast<Index>(y), z0 = static_cast<Index>(z);
  const Index x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1), z1 = std::min(z0 + 1, Z - 1);
  const double fx = x - x0, fy = y - y0, fz = z - z0;
  auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
  const double c00 = lerp(v(z0, y0, x0), v(z0, y0, x1), fx);
  const double c01 = lerp(v(z0, y1, x0), v(z0, y1, x1), fx);
  const double c10 = lerp(v(z1, y0, x0), v(z1, y0, x1), fx);
  const double c11 = lerp(v(z1, y1, x0), v(z1, y1, x1), fx);
  return lerp(lerp(c00, c01, fy), lerp(c10, c11, fy), fz);
}

}  // namespace

Volume3D oof(const Volume3D& vol, const VesselnessParams& params) {
  params.validate();
  const Index Z = vol.depth(), H = vol.height(), W = vol.width();
  const double half_min = 0.5 * static_cast<double>(std::min({Z, H, W}));
  if (params.oof_radii.back() > half_min) {
    throw std::invalid_argument("oof: radius exceeds half the smallest volume dimension");
  }
  const auto grad = gaussian_gradient(vol, params.oof_sigma);
  const auto& dirs = sphere_directions();
  Volume3D best(Z, H, W, 0.0f);
  parallel_for(static_cast<std::size_t>(Z), [&](std::size_t zi) {
    const auto z = static_cast<Index>(zi);
    for (Index y = 0; y < H; ++y) {
      for (Index x = 0; x < W; ++x) {
        float response = 0.0f;
        for (double r : params.oof_radii) {
          const double area_weight = 4.0 * std::numbers::pi * r * r / static_cast<double>(dirs.size());
          Eigen::Matrix3d q = Eigen::Matrix3d::Zero();
          for (const auto& n : dirs) {
            const double px = x + r * n.x(), py = y + r * n.y(), pz = z + r * n.z();
            const Eigen::Vector3d g(trilinear(grad[0], px, py, pz), trilinear(grad[1], px, py, pz),
                                    trilinear(grad[2], px, py, pz));
            q.noalias() += g * n.transpose();
          }
          q = 0.5 * area_weight * (q + q.transpose());
          Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
          solver.computeDirect(q, Eigen::EigenvaluesOnly);
          const Eigen::Vector3d l = solver.eigenvalues();  // ascending
          const double raw = params.bright_on_dark ? -(l[0] + l[1]) / 2.0 : (l[1] + l[2]) / 2.0;
          response = std::max(response, static_cast<float>(std::max(0.0, raw) / r));
        }
        best(z, y, x) = response;
      }
    }
  });
  best.spacing = vol.spacing;
  return best;
}

}  // namespace life
