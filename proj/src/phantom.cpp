#include "life/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <random>
#include <stdexcept>

namespace life {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent stream per (seed, purpose, index).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed ^ (purpose << 48)) + index));
}

constexpr std::uint64_t kTreeStream = 1;
constexpr std::uint64_t kSpeckleStream = 2;
constexpr std::uint64_t kCaseStream = 3;

double segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                        const Eigen::Vector3d& b, double& t_out) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  t_out = t;
  return (p - (a + t * ab)).norm();
}

struct Raster {
  Volume<double> contrast;  // max over vessels of (I - background) * profile
  MaskVolume mask;
};

void rasterize_branch(const VesselBranch& br, double contrast, Raster& r) {
  const Index Z = r.mask.depth(), H = r.mask.height(), W = r.mask.width();
  for (std::size_t i = 0; i + 1 < br.points.size(); ++i) {
    const Eigen::Vector3d& a = br.points[i];
    const Eigen::Vector3d& b = br.points[i + 1];
    const double rmax = std::max(br.radii[i], br.radii[i + 1]) + 1.0;
    const Eigen::Vector3d lo = a.cwiseMin(b).array() - rmax;
    const Eigen::Vector3d hi = a.cwiseMax(b).array() + rmax;
    const Index x0 = std::max<Index>(0, static_cast<Index>(std::floor(lo.x())));
    const Index y0 = std::max<Index>(0, static_cast<Index>(std::floor(lo.y())));
    const Index z0 = std::max<Index>(0, static_cast<Index>(std::floor(lo.z())));
    const Index x1 = std::min<Index>(W - 1, static_cast<Index>(std::ceil(hi.x())));
    const Index y1 = std::min<Index>(H - 1, static_cast<Index>(std::ceil(hi.y())));
    const Index z1 = std::min<Index>(Z - 1, static_cast<Index>(std::ceil(hi.z())));
    for (Index z = z0; z <= z1; ++z) {
      for (Index y = y0; y <= y1; ++y) {
        for (Index x = x0; x <= x1; ++x) {
          double t = 0;
          const Eigen::Vector3d p(static_cast<double>(x), static_cast<double>(y),
                                  static_cast<double>(z));
          const double d = segment_distance(p, a, b, t);
          const double radius = br.radii[i] + t * (br.radii[i + 1] - br.radii[i]);
          const double prof = tube_profile(d, radius);
          if (prof <= 0) continue;
          double& c = r.contrast(z, y, x);
          c = std::max(c, contrast * prof);
          if (d <= radius) r.mask(z, y, x) = 1;
        }
      }
    }
  }
}

}  // namespace

double tube_profile(double distance, double radius) {
  const double inner = radius - 0.5;
  const double outer = radius + 0.5;
  if (distance <= inner) return 1.0;
  if (distance >= outer) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (distance - inner) / (outer - inner)));
}

void PhantomSpec::validate() const {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw std::invalid_argument("phantom dims must be >= 1");
  if (n_trees < 0) throw std::invalid_argument("n_trees must be >= 0");
  if (!(radius_range.first > 0) || radius_range.first > radius_range.second) {
    throw std::invalid_argument("radius_range must be ordered and positive");
  }
  if (vessel_intensity_range.first > vessel_intensity_range.second) {
    throw std::invalid_argument("vessel_intensity_range must be ordered");
  }
  if (!(speckle_shape > 0)) throw std::invalid_argument("speckle_shape must be > 0");
  if (!(artifact_gain >= 1)) throw std::invalid_argument("artifact_gain must be >= 1");
  if (depth_jitter < 0) throw std::invalid_argument("depth_jitter must be >= 0");
  if (n_trees > 0) {
    const auto min_extent = static_cast<double>(std::min(dims[1], dims[2]));
    if (min_extent < 2.0 * radius_range.first + 3.0) {
      throw std::invalid_argument("phantom dims too small to contain a tube of the minimum radius");
    }
  }
  for (const auto& [z, y] : artifact_rows) {
    if (z < 0 || z >= dims[0] || y < 0 || y >= dims[1]) {
      throw std::out_of_range("artifact row out of range");
    }
  }
}

void to_json(nlohmann::json& j, const PhantomSpec& s) {
  j = nlohmann::json{{"dims", s.dims},
                     {"n_trees", s.n_trees},
                     {"radius_range", {s.radius_range.first, s.radius_range.second}},
                     {"vessel_intensity_range",
                      {s.vessel_intensity_range.first, s.vessel_intensity_range.second}},
                     {"background_level", s.background_level},
                     {"speckle_shape", s.speckle_shape},
                     {"depth_jitter", s.depth_jitter},
                     {"artifact_rows", s.artifact_rows},
                     {"artifact_gain", s.artifact_gain},
                     {"seed", s.seed},
                     {"max_turn", s.max_turn},
                     {"branch_probability", s.branch_probability},
                     {"max_branch_depth", s.max_branch_depth}};
}

void from_json(const nlohmann::json& j, PhantomSpec& s) {
  PhantomSpec d;
  s.dims = j.value("dims", d.dims);
  s.n_trees = j.value("n_trees", d.n_trees);
  if (j.contains("radius_range")) {
    const auto r = j.at("radius_range").get<std::array<double, 2>>();
    s.radius_range = {r[0], r[1]};
  }
  if (j.contains("vessel_intensity_range")) {
    const auto r = j.at("vessel_intensity_range").get<std::array<double, 2>>();
    s.vessel_intensity_range = {r[0], r[1]};
  }
  s.background_level = j.value("background_level", d.background_level);
  s.speckle_shape = j.value("speckle_shape", d.speckle_shape);
  s.depth_jitter = j.value("depth_jitter", d.depth_jitter);
  if (j.contains("artifact_rows")) {
    s.artifact_rows = j.at("artifact_rows").get<std::vector<std::pair<Index, Index>>>();
  }
  s.artifact_gain = j.value("artifact_gain", d.artifact_gain);
  s.seed = j.value("seed", d.seed);
  s.max_turn = j.value("max_turn", d.max_turn);
  s.branch_probability = j.value("branch_probability", d.branch_probability);
  s.max_branch_depth = j.value("max_branch_depth", d.max_branch_depth);
}

std::vector<VesselTree> grow_trees(const PhantomSpec& spec) {
  spec.validate();
  const double Z = static_cast<double>(spec.dims[0]);
  const double H = static_cast<double>(spec.dims[1]);
  const double W = static_cast<double>(spec.dims[2]);
  std::vector<VesselTree> trees;
  for (int t = 0; t < spec.n_trees; ++t) {
    auto rng = stream(spec.seed, kTreeStream, static_cast<std::uint64_t>(t));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    VesselTree tree;
    tree.intensity = spec.vessel_intensity_range.first +
                     unit(rng) * (spec.vessel_intensity_range.second - spec.vessel_intensity_range.first);

    struct Seed {
      Eigen::Vector3d start;
      double heading;
      double radius;
      int depth;
    };
    // Roots enter from a random edge heading inward so trees span the slab.
    const int edge = static_cast<int>(unit(rng) * 4.0) % 4;
    const double along = 0.1 + 0.8 * unit(rng);
    Eigen::Vector3d root;
    double heading = 0;
    switch (edge) {
      case 0: root = {along * (W - 1), 0.0, 0.0}; heading = std::numbers::pi / 2; break;
      case 1: root = {along * (W - 1), H - 1, 0.0}; heading = -std::numbers::pi / 2; break;
      case 2: root = {0.0, along * (H - 1), 0.0}; heading = 0.0; break;
      default: root = {W - 1, along * (H - 1), 0.0}; heading = std::numbers::pi; break;
    }
    root.z() = unit(rng) * (Z - 1);
    heading += (unit(rng) - 0.5) * 0.8;
    const double r0 = spec.radius_range.first +
                      unit(rng) * (spec.radius_range.second - spec.radius_range.first);

    std::deque<Seed> pending{{root, heading, r0, 0}};
    while (!pending.empty()) {
      Seed s = pending.front();
      pending.pop_front();
      VesselBranch br;
      Eigen::Vector3d p = s.start;
      double th = s.heading;
      const double z_center = p.z();
      const double half_jitter = 0.5 * spec.depth_jitter;
      const int max_steps = static_cast<int>(2.0 * (H + W));
      for (int step = 0; step < max_steps; ++step) {
        br.points.push_back(p);
        br.radii.push_back(s.radius);
        th += (2.0 * unit(rng) - 1.0) * spec.max_turn;
        p.x() += std::cos(th);
        p.y() += std::sin(th);
        p.z() = std::clamp(p.z() + (unit(rng) - 0.5) * 0.5,
                           std::max(0.0, z_center - half_jitter),
                           std::min(Z - 1, z_center + half_jitter));
        if (p.x() < -1 || p.x() > W || p.y() < -1 || p.y() > H) break;
        if (s.depth < spec.max_branch_depth && step > 4 && unit(rng) < spec.branch_probability) {
          const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
          const double child_r = std::max(spec.radius_range.first, 0.7 * s.radius);
          pending.push_back({p, th + side * (0.6 + 0.4 * unit(rng)), child_r, s.depth + 1});
        }
      }
      if (br.points.size() >= 2) tree.branches.push_back(std::move(br));
    }
    trees.push_back(std::move(tree));
  }
  return trees;
}

Phantom render_phantom(const PhantomSpec& spec, const std::vector<VesselTree>& trees) {
  spec.validate();
  const auto [Z, H, W] = spec.dims;
  Raster r{Volume<double>(Z, H, W, 0.0), MaskVolume(Z, H, W, 0)};
  for (const auto& tree : trees) {
    const double contrast = std::max(0.0, tree.intensity - spec.background_level);
    for (const auto& br : tree.branches) {
      if (br.points.size() != br.radii.size()) throw std::invalid_argument("branch radii/points mismatch");
      rasterize_branch(br, contrast, r);
    }
  }

  Phantom out{Volume3D(Z, H, W), std::move(r.mask), Volume3D(Z, H, W)};
  out.clean.data() = (r.contrast.data() + spec.background_level).cast<float>();

  const double k = spec.speckle_shape;
  for (Index z = 0; z < Z; ++z) {
    auto rng = stream(spec.seed, kSpeckleStream, static_cast<std::uint64_t>(z));
    std::gamma_distribution<double> speckle(k, 1.0 / k);
    auto src = out.clean.slice(z);
    auto dst = out.volume.slice(z);
    for (Index y = 0; y < H; ++y) {
      for (Index x = 0; x < W; ++x) {
        dst(y, x) = static_cast<float>(std::clamp(src(y, x) * speckle(rng), 0.0, 255.0));
      }
    }
  }
  if (!spec.artifact_rows.empty() && spec.artifact_gain != 1.0) {
    out.volume = inject_motion_artifact(out.volume, spec.artifact_rows, spec.artifact_gain);
  }
  return out;
}

Phantom generate_phantom(const PhantomSpec& spec) { return render_phantom(spec, grow_trees(spec)); }

Volume3D inject_motion_artifact(const Volume3D& vol,
                                const std::vector<std::pair<Index, Index>>& rows, double gain) {
  if (!(gain >= 1)) throw std::invalid_argument("artifact gain must be >= 1");
  for (const auto& [z, y] : rows) {
    if (z < 0 || z >= vol.depth() || y < 0 || y >= vol.height()) {
      throw std::out_of_range("artifact row out of range");
    }
  }
  Volume3D out = vol;
  if (gain == 1.0) return out;
  // A row listed twice is scaled once.
  std::vector<std::pair<Index, Index>> unique_rows = rows;
  std::sort(unique_rows.begin(), unique_rows.end());
  unique_rows.erase(std::unique(unique_rows.begin(), unique_rows.end()), unique_rows.end());
  const auto g = static_cast<float>(gain);
  for (const auto& [z, y] : unique_rows) {
    auto row = out.slice(z).row(y);
    row = (row * g).cwiseMin(255.0f);
  }
  return out;
}

PhantomVesselCase make_phantom_vessel_case(const PhantomSpec& spec, int radius_r) {
  spec.validate();
  const auto [Z, H, W] = spec.dims;
  if (radius_r < 1) throw std::invalid_argument("phantom-vessel case needs R >= 1");
  if (Z < 2 * radius_r + 1) throw std::invalid_argument("phantom-vessel case: depth < 2R+1");
  if (H < 16 || W < 16) throw std::invalid_argument("phantom-vessel case: slices must be >= 16x16");

  const Index zc = Z / 2;
  auto rng = stream(spec.seed, kCaseStream, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double radius = 0.5 * (spec.radius_range.first + spec.radius_range.second);
  auto pick_intensity = [&] {
    return spec.vessel_intensity_range.first +
           unit(rng) * (spec.vessel_intensity_range.second - spec.vessel_intensity_range.first);
  };

  // In-plane wavy vessel spanning the width inside the band [y_lo, y_hi].
  auto wavy = [&](double y_lo, double y_hi, double z) {
    VesselBranch br;
    const double mid = 0.5 * (y_lo + y_hi);
    const double amp = std::max(0.0, 0.5 * (y_hi - y_lo) - radius - 1.0) * unit(rng);
    const double freq = 2.0 * std::numbers::pi * (0.5 + unit(rng)) / static_cast<double>(W);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    for (Index x = -1; x <= W; ++x) {
      const double xd = static_cast<double>(x);
      br.points.emplace_back(xd, mid + amp * std::sin(freq * xd + phase), z);
      br.radii.push_back(radius);
    }
    return br;
  };

  // Regular trees, then A and B painted on top with zero depth extent.
  std::vector<VesselTree> trees = spec.n_trees > 0 ? grow_trees(spec) : std::vector<VesselTree>{};
  const double h = static_cast<double>(H);
  const double a_intensity = pick_intensity();
  const VesselBranch a_line = wavy(0.15 * h, 0.4 * h, 0.0);
  const double b_intensity = pick_intensity();
  const VesselBranch b_line = wavy(0.6 * h, 0.85 * h, 0.0);

  Phantom base = render_phantom(spec, trees);
  // Re-render with A/B added. A/B are flat: rasterize their in-plane profile
  // into exactly the slices they belong to.
  auto flat_raster = [&](const VesselBranch& line, double intensity) {
    Raster r{Volume<double>(1, H, W, 0.0), MaskVolume(1, H, W, 0)};
    VesselBranch in_plane = line;
    for (auto& p : in_plane.points) p.z() = 0.0;
    rasterize_branch(in_plane, std::max(0.0, intensity - spec.background_level), r);
    return r;
  };
  const Raster ra = flat_raster(a_line, a_intensity);
  const Raster rb = flat_raster(b_line, b_intensity);

  PhantomVesselCase out;
  out.target_z = zc;
  out.a_footprint = ra.mask.slice(0);
  out.b_footprint = rb.mask.slice(0);
  out.masks = base.mask;
  Volume<double> contrast(Z, H, W, 0.0);
  contrast.data() = (base.clean.data().cast<double>() - spec.background_level).cwiseMax(0.0);
  auto paint = [&](Index z, const Raster& r) {
    auto c = contrast.slice(z);
    c = c.cwiseMax(r.contrast.slice(0));
    auto m = out.masks.slice(z);
    m = m.cwiseMax(r.mask.slice(0));
  };
  paint(zc, ra);
  for (int k = 1; k <= radius_r; ++k) {
    paint(zc - k, rb);
    paint(zc + k, rb);
  }

  out.volume = Volume3D(Z, H, W);
  const double k = spec.speckle_shape;
  for (Index z = 0; z < Z; ++z) {
    auto srng = stream(spec.seed, kSpeckleStream, static_cast<std::uint64_t>(z));
    std::gamma_distribution<double> speckle(k, 1.0 / k);
    auto src = contrast.slice(z);
    auto dst = out.volume.slice(z);
    for (Index y = 0; y < H; ++y) {
      for (Index x = 0; x < W; ++x) {
        const double clean = src(y, x) + spec.background_level;
        dst(y, x) = static_cast<float>(std::clamp(clean * speckle(srng), 0.0, 255.0));
      }
    }
  }
  if (!spec.artifact_rows.empty() && spec.artifact_gain != 1.0) {
    out.volume = inject_motion_artifact(out.volume, spec.artifact_rows, spec.artifact_gain);
  }
  return out;
}

}  // namespace life
