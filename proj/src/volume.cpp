#include "life/volume.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace life {

namespace fs = std::filesystem;
using nlohmann::json;

EnFaceSlice extract_slice(const Volume3D& vol, Index z) {
  if (z < 0 || z >= vol.depth()) throw std::out_of_range("slice index out of range");
  return {Image(vol.slice(z)), z};
}

Volume3D stack_slices(const std::vector<Image>& slices, Spacing spacing) {
  if (slices.empty()) throw std::invalid_argument("cannot stack zero slices");
  const Index h = slices.front().rows();
  const Index w = slices.front().cols();
  Volume3D out(static_cast<Index>(slices.size()), h, w);
  for (std::size_t z = 0; z < slices.size(); ++z) {
    if (slices[z].rows() != h || slices[z].cols() != w) {
      throw std::invalid_argument("stack_slices: slice dimensions differ");
    }
    out.slice(static_cast<Index>(z)) = slices[z];
  }
  out.spacing = spacing;
  return out;
}

fs::path volume_stem(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".json" || ext == ".raw") {
    fs::path stem = path;
    stem.replace_extension();
    return stem;
  }
  return path;
}

fs::path header_path(const fs::path& path) {
  fs::path p = volume_stem(path);
  p += ".json";
  return p;
}

fs::path payload_path(const fs::path& path) {
  fs::path p = volume_stem(path);
  p += ".raw";
  return p;
}

namespace {

void write_f32le(std::ostream& os, const float* values, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values),
             static_cast<std::streamsize>(count * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      auto bits = std::bit_cast<std::uint32_t>(values[i]);
      bits = ((bits & 0xFFu) << 24) | ((bits & 0xFF00u) << 8) | ((bits >> 8) & 0xFF00u) |
             (bits >> 24);
      os.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
}

void read_f32le(std::istream& is, float* values, std::size_t count) {
  is.read(reinterpret_cast<char*>(values), static_cast<std::streamsize>(count * sizeof(float)));
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < count; ++i) {
      auto bits = std::bit_cast<std::uint32_t>(values[i]);
      bits = ((bits & 0xFFu) << 24) | ((bits & 0xFF00u) << 8) | ((bits >> 8) & 0xFF00u) |
             (bits >> 24);
      values[i] = std::bit_cast<float>(bits);
    }
  }
}

}  // namespace

Volume3D load_volume(const fs::path& path) {
  const fs::path hdr = header_path(path);
  const fs::path raw = payload_path(path);
  if (!fs::exists(hdr)) throw std::runtime_error("volume header not found: " + hdr.string());
  if (!fs::exists(raw)) throw std::runtime_error("volume payload not found: " + raw.string());

  json header;
  {
    std::ifstream in(hdr);
    try {
      in >> header;
    } catch (const json::exception& e) {
      throw std::runtime_error("malformed volume header " + hdr.string() + ": " + e.what());
    }
  }
  if (!header.contains("dims") || !header["dims"].is_array() || header["dims"].size() != 3) {
    throw std::runtime_error("volume header missing dims[3]: " + hdr.string());
  }
  if (header.value("dtype", "f32le") != "f32le" || header.value("order", "zyx") != "zyx") {
    throw std::runtime_error("unsupported dtype/order in " + hdr.string());
  }
  const auto dims = header["dims"].get<std::array<Index, 3>>();
  Volume3D vol(dims[0], dims[1], dims[2]);
  if (header.contains("spacing")) vol.spacing = header["spacing"].get<Spacing>();
  if (header.contains("intensity_range") && header["intensity_range"].is_array()) {
    const auto r = header["intensity_range"].get<std::array<double, 2>>();
    vol.intensity_range = std::make_pair(r[0], r[1]);
  }

  const auto expected_bytes = static_cast<std::uintmax_t>(vol.size()) * sizeof(float);
  const auto actual_bytes = fs::file_size(raw);
  if (actual_bytes != expected_bytes) {
    std::ostringstream msg;
    msg << "volume size mismatch: header declares " << dims[0] << "x" << dims[1] << "x"
        << dims[2] << " (" << expected_bytes << " bytes) but payload has " << actual_bytes
        << " bytes";
    throw std::runtime_error(msg.str());
  }
  std::ifstream in(raw, std::ios::binary);
  read_f32le(in, vol.data().data(), static_cast<std::size_t>(vol.size()));
  if (!in) throw std::runtime_error("failed reading payload " + raw.string());
  if (!vol.data().allFinite()) throw std::runtime_error("non-finite voxel in " + raw.string());
  return vol;
}

void save_volume(const Volume3D& vol, const fs::path& path) {
  if (vol.empty()) throw std::invalid_argument("cannot save an empty volume");
  if (!vol.data().allFinite()) throw std::invalid_argument("refusing to save non-finite voxels");

  json header;
  header["dims"] = vol.dims();
  header["spacing"] = vol.spacing;
  header["dtype"] = "f32le";
  header["order"] = "zyx";
  const auto range = vol.intensity_range.value_or(
      std::make_pair(static_cast<double>(vol.data().minCoeff()),
                     static_cast<double>(vol.data().maxCoeff())));
  header["intensity_range"] = {range.first, range.second};

  const fs::path hdr = header_path(path);
  if (hdr.has_parent_path()) fs::create_directories(hdr.parent_path());
  {
    std::ofstream out(hdr);
    out << header.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + hdr.string());
  }
  std::ofstream out(payload_path(path), std::ios::binary);
  write_f32le(out, vol.data().data(), static_cast<std::size_t>(vol.size()));
  if (!out) throw std::runtime_error("failed writing " + payload_path(path).string());
}

MaskVolume load_mask(const fs::path& path) {
  const Volume3D vol = load_volume(path);
  if (!((vol.data() == 0.0f) || (vol.data() == 1.0f)).all()) {
    throw std::runtime_error("mask contains values outside {0,1}: " + path.string());
  }
  return vol.cast<std::uint8_t>();
}

void save_mask(const MaskVolume& mask, const fs::path& path) {
  Volume3D vol = mask.cast<float>();
  vol.intensity_range = std::make_pair(0.0, 1.0);
  save_volume(vol, path);
}

namespace {

template <typename Derived>
void rescale_in_place(Eigen::ArrayBase<Derived>& values) {
  const float lo = values.minCoeff();
  const float hi = values.maxCoeff();
  if (!(hi > lo)) {
    values.setZero();
    return;
  }
  const double range = static_cast<double>(hi) - lo;
  values = ((values.template cast<double>() - lo) / range * 255.0).template cast<float>();
}

}  // namespace

Volume3D normalize(const Volume3D& vol) {
  if (vol.empty()) throw std::invalid_argument("normalize: empty volume");
  Volume3D out = vol;
  rescale_in_place(out.data());
  out.intensity_range = std::make_pair(0.0, 255.0);
  return out;
}

Image normalize(const Image& img) {
  if (img.size() == 0) throw std::invalid_argument("normalize: empty image");
  Image out = img;
  rescale_in_place(out);
  return out;
}

Volume3D crop_slab(const Volume3D& vol, Index z0, Index z1) {
  if (z0 < 0 || z1 > vol.depth() || z0 >= z1) {
    throw std::out_of_range("crop_slab: require 0 <= z0 < z1 <= depth");
  }
  Volume3D out(z1 - z0, vol.height(), vol.width());
  out.data() = vol.data().segment(z0 * vol.plane_size(), out.size());
  out.spacing = vol.spacing;
  out.intensity_range = vol.intensity_range;
  return out;
}

std::vector<std::vector<Image>> augment_aligned(const std::vector<const Image*>& sources,
                                                const AugmentationSpec& spec) {
  if (sources.empty()) throw std::invalid_argument("augment: no sources");
  if (spec.windows_per_slice < 1) throw std::invalid_argument("augment: windows_per_slice < 1");
  const Index h = sources.front()->rows();
  const Index w = sources.front()->cols();
  for (const Image* s : sources) {
    if (s->rows() != h || s->cols() != w) {
      throw std::invalid_argument("augment: paired slices differ in size");
    }
  }
  if (spec.window_h < 1 || spec.window_w < 1 || spec.window_h > h || spec.window_w > w) {
    throw std::invalid_argument("augment: window larger than slice");
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<Index> pick_y(0, h - spec.window_h);
  std::uniform_int_distribution<Index> pick_x(0, w - spec.window_w);
  std::bernoulli_distribution coin(0.5);

  std::vector<std::vector<Image>> windows;
  windows.reserve(static_cast<std::size_t>(spec.windows_per_slice));
  for (int i = 0; i < spec.windows_per_slice; ++i) {
    const Index y0 = pick_y(rng);
    const Index x0 = pick_x(rng);
    const bool flip_h = spec.flip_horizontal && coin(rng);
    const bool flip_v = spec.flip_vertical && coin(rng);
    std::vector<Image> group;
    group.reserve(sources.size());
    for (const Image* s : sources) {
      Image patch = s->block(y0, x0, spec.window_h, spec.window_w);
      if (flip_h) patch = patch.rowwise().reverse().eval();
      if (flip_v) patch = patch.colwise().reverse().eval();
      group.push_back(std::move(patch));
    }
    windows.push_back(std::move(group));
  }
  return windows;
}

std::vector<std::pair<Image, Image>> augment(const std::pair<Image, Image>& slice_pair,
                                             const AugmentationSpec& spec) {
  auto groups = augment_aligned({&slice_pair.first, &slice_pair.second}, spec);
  std::vector<std::pair<Image, Image>> out;
  out.reserve(groups.size());
  for (auto& g : groups) out.emplace_back(std::move(g[0]), std::move(g[1]));
  return out;
}

}  // namespace life
