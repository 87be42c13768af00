#include "life/binarize.hpp"

#include "life/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace life {

void DiffusionParams::validate() const {
  if (dims != 2 && dims != 3) throw std::invalid_argument("diffusion dims must be 2 or 3");
  if (!(K > 0)) throw std::invalid_argument("Perona-Malik K must be > 0");
  if (iters < 0) throw std::invalid_argument("Perona-Malik iters must be >= 0");
  const double bound = 1.0 / (2.0 * dims);
  if (!(lambda > 0) || lambda > bound) {
    throw std::invalid_argument("Perona-Malik lambda violates stability bound 0 < lambda <= 1/(2*dims)");
  }
}

void to_json(nlohmann::json& j, const DiffusionParams& p) {
  j = {{"K", p.K}, {"lambda", p.lambda}, {"iters", p.iters}, {"dims", p.dims}};
}

void from_json(const nlohmann::json& j, DiffusionParams& p) {
  const DiffusionParams d;
  p.K = j.value("K", d.K);
  p.lambda = j.value("lambda", d.lambda);
  p.iters = j.value("iters", d.iters);
  p.dims = j.value("dims", d.dims);
}

Volume3D perona_malik(const Volume3D& vol, const DiffusionParams& params) {
  params.validate();
  if (params.iters == 0) return vol;
  const Index Z = vol.depth(), H = vol.height(), W = vol.width();
  const double inv_k2 = 1.0 / (params.K * params.K);
  auto g = [inv_k2](double d) { return 1.0 / (1.0 + d * d * inv_k2); };

  Volume<double> cur = vol.cast<double>();
  Volume<double> next(Z, H, W);
  for (int it = 0; it < params.iters; ++it) {
    parallel_for(static_cast<std::size_t>(Z), [&](std::size_t zi) {
      const auto z = static_cast<Index>(zi);
      for (Index y = 0; y < H; ++y) {
        for (Index x = 0; x < W; ++x) {
          const double c = cur(z, y, x);
          double flux = 0;
          auto add = [&](double nb) {
            const double d = nb - c;
            flux += g(std::abs(d)) * d;
          };
          if (x > 0) add(cur(z, y, x - 1));
          if (x + 1 < W) add(cur(z, y, x + 1));
          if (y > 0) add(cur(z, y - 1, x));
          if (y + 1 < H) add(cur(z, y + 1, x));
          if (params.dims == 3) {
            if (z > 0) add(cur(z - 1, y, x));
            if (z + 1 < Z) add(cur(z + 1, y, x));
          }
          next(z, y, x) = c + params.lambda * flux;
        }
      }
    });
    std::swap(cur, next);
  }
  Volume3D out = cur.cast<float>();
  out.spacing = vol.spacing;
  return out;
}

double otsu_edge(double lo, double hi, int bins, int k) {
  return lo + (k + 1) * ((hi - lo) / bins);
}

OtsuResult otsu(const Volume3D& vol, int bins) {
  if (bins < 2) throw std::invalid_argument("otsu needs at least 2 bins");
  const double lo = vol.data().minCoeff();
  const double hi = vol.data().maxCoeff();
  if (!(hi > lo)) throw std::invalid_argument("otsu: degenerate histogram (constant volume)");
  const double width = (hi - lo) / bins;

  // Bin b holds values in (edge(b-1), edge(b)]; edges are compared exactly so
  // the final mask (v > threshold) agrees with the histogram split.
  std::vector<double> count(bins, 0.0), sum(bins, 0.0);
  for (float fv : vol.data()) {
    const double v = fv;
    int b = std::clamp(static_cast<int>((v - lo) / width), 0, bins - 1);
    while (b > 0 && v <= otsu_edge(lo, hi, bins, b - 1)) --b;
    while (b < bins - 1 && v > otsu_edge(lo, hi, bins, b)) ++b;
    count[b] += 1.0;
    sum[b] += v;
  }
  const double n = static_cast<double>(vol.size());
  const double total = std::accumulate(sum.begin(), sum.end(), 0.0);

  int best_k = 0;
  double best_var = -1.0;
  double n0 = 0, s0 = 0;
  for (int k = 0; k < bins - 1; ++k) {
    n0 += count[k];
    s0 += sum[k];
    const double n1 = n - n0;
    if (n0 <= 0 || n1 <= 0) continue;
    const double m0 = s0 / n0;
    const double m1 = (total - s0) / n1;
    const double var = (n0 / n) * (n1 / n) * (m0 - m1) * (m0 - m1);
    if (var > best_var) {
      best_var = var;
      best_k = k;
    }
  }

  OtsuResult result;
  result.threshold = otsu_edge(lo, hi, bins, best_k);
  result.mask.data = MaskVolume(vol.depth(), vol.height(), vol.width());
  result.mask.data.data() = (vol.data().cast<double>() > result.threshold).cast<std::uint8_t>();
  result.mask.data.spacing = vol.spacing;
  result.mask.provenance = {{"method", "otsu"}, {"bins", bins}, {"threshold", result.threshold}};
  return result;
}

namespace {

double split_sse(const std::vector<double>& prefix, const std::vector<double>& prefix_sq,
                 std::size_t split) {
  const std::size_t n = prefix.size() - 1;
  auto part = [&](std::size_t a, std::size_t b) {
    const double cnt = static_cast<double>(b - a);
    if (cnt <= 0) return 0.0;
    const double s = prefix[b] - prefix[a];
    return (prefix_sq[b] - prefix_sq[a]) - s * s / cnt;
  };
  return part(0, split) + part(split, n);
}

}  // namespace

BinaryMask kmeans_binarize(const Volume3D& vol, std::uint64_t seed) {
  std::vector<double> sorted(vol.data().data(), vol.data().data() + vol.size());
  std::sort(sorted.begin(), sorted.end());
  if (!(sorted.back() > sorted.front())) {
    throw std::invalid_argument("kmeans_binarize: constant volume");
  }
  const std::size_t n = sorted.size();
  std::vector<double> prefix(n + 1, 0.0), prefix_sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + sorted[i];
    prefix_sq[i + 1] = prefix_sq[i] + sorted[i] * sorted[i];
  }
  auto percentile = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const std::size_t j = std::min(i + 1, n - 1);
    return sorted[i] + (pos - static_cast<double>(i)) * (sorted[j] - sorted[i]);
  };

  // Lloyd on the sorted sample: cluster 0 is everything <= midpoint.
  double c0 = percentile(0.25);
  double c1 = percentile(0.75);
  auto split_at = [&](double mid) {
    return static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), mid) - sorted.begin());
  };
  std::size_t split = split_at(0.5 * (c0 + c1));
  int iterations = 0;
  for (; iterations < 100; ++iterations) {
    split = split_at(0.5 * (c0 + c1));
    if (split == 0 || split == n) break;
    const double n0 = (prefix[split]) / static_cast<double>(split);
    const double n1 = (prefix[n] - prefix[split]) / static_cast<double>(n - split);
    const double delta = std::max(std::abs(n0 - c0), std::abs(n1 - c1));
    c0 = n0;
    c1 = n1;
    if (delta < 1e-4) break;
  }
  split = std::clamp<std::size_t>(split_at(0.5 * (c0 + c1)), 1, n - 1);

  // Lloyd can stall in a local optimum; the exact 1D optimum is a sorted split.
  const double lloyd_sse = split_sse(prefix, prefix_sq, split);
  std::size_t best = split;
  double best_sse = lloyd_sse;
  for (std::size_t s = 1; s < n; ++s) {
    if (sorted[s] == sorted[s - 1]) continue;  // equal values stay together
    const double sse = split_sse(prefix, prefix_sq, s);
    if (sse < best_sse - 1e-12 * std::max(1.0, best_sse)) {
      best_sse = sse;
      best = s;
    }
  }
  const double threshold = sorted[best - 1];  // cluster 0 is values <= threshold

  BinaryMask out;
  out.data = MaskVolume(vol.depth(), vol.height(), vol.width());
  out.data.data() = (vol.data().cast<double>() > threshold).cast<std::uint8_t>();
  out.data.spacing = vol.spacing;
  const double m0 = prefix[best] / static_cast<double>(best);
  const double m1 = (prefix[n] - prefix[best]) / static_cast<double>(n - best);
  out.provenance = {{"method", "kmeans"},        {"k", 2},
                    {"seed", seed},              {"centers", {m0, m1}},
                    {"lloyd_iterations", iterations}, {"refined", best != split}};
  return out;
}

Volume<std::int32_t> label_components(const MaskVolume& mask, int connectivity, int* count) {
  if (connectivity != 6 && connectivity != 26) throw std::invalid_argument("connectivity must be 6 or 26");
  const Index Z = mask.depth(), H = mask.height(), W = mask.width();
  std::vector<std::array<int, 3>> offsets;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (manhattan == 0) continue;
        if (connectivity == 6 && manhattan != 1) continue;
        offsets.push_back({dz, dy, dx});
      }

  Volume<std::int32_t> labels(Z, H, W, 0);
  std::int32_t next = 0;
  std::vector<std::array<Index, 3>> stack;
  for (Index z = 0; z < Z; ++z)
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        if (!mask(z, y, x) || labels(z, y, x)) continue;
        ++next;
        labels(z, y, x) = next;
        stack.push_back({z, y, x});
        while (!stack.empty()) {
          const auto [cz, cy, cx] = stack.back();
          stack.pop_back();
          for (const auto& o : offsets) {
            const Index nz = cz + o[0], ny = cy + o[1], nx = cx + o[2];
            if (nz < 0 || ny < 0 || nx < 0 || nz >= Z || ny >= H || nx >= W) continue;
            if (!mask(nz, ny, nx) || labels(nz, ny, nx)) continue;
            labels(nz, ny, nx) = next;
            stack.push_back({nz, ny, nx});
          }
        }
      }
  if (count) *count = next;
  return labels;
}

BinaryMask remove_islands(const BinaryMask& mask, int min_size, int connectivity) {
  int n = 0;
  const auto labels = label_components(mask.data, connectivity, &n);
  std::vector<int> sizes(static_cast<std::size_t>(n) + 1, 0);
  for (auto l : labels.data()) ++sizes[static_cast<std::size_t>(l)];
  BinaryMask out = mask;
  for (Index i = 0; i < labels.size(); ++i) {
    const auto l = labels.data()[i];
    if (l > 0 && sizes[static_cast<std::size_t>(l)] < min_size) out.data.data()[i] = 0;
  }
  out.provenance["remove_islands"] = {{"min_size", min_size}, {"connectivity", connectivity}};
  return out;
}

void to_json(nlohmann::json& j, const BinarizeParams& p) {
  j = {{"perona_malik", p.diffusion}, {"otsu_bins", p.bins},
       {"min_island", p.min_island},  {"connectivity", p.connectivity}};
}

void from_json(const nlohmann::json& j, BinarizeParams& p) {
  const BinarizeParams d;
  if (j.contains("perona_malik")) p.diffusion = j.at("perona_malik").get<DiffusionParams>();
  p.bins = j.value("otsu_bins", d.bins);
  p.min_island = j.value("min_island", d.min_island);
  p.connectivity = j.value("connectivity", d.connectivity);
}

BinaryMask binarize_pipeline(const Volume3D& vol, const BinarizeParams& params) {
  const Volume3D smoothed = perona_malik(vol, params.diffusion);
  OtsuResult th = otsu(smoothed, params.bins);
  BinaryMask out = remove_islands(th.mask, params.min_island, params.connectivity);
  out.provenance = {{"method", "binarize_pipeline"},
                    {"perona_malik", params.diffusion},
                    {"otsu", {{"bins", params.bins}, {"threshold", th.threshold}}},
                    {"remove_islands",
                     {{"min_size", params.min_island}, {"connectivity", params.connectivity}}}};
  return out;
}

}  // namespace life
