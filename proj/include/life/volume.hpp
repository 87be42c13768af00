#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace life {

using Index = Eigen::Index;

/// Row-major 2D array, indexed (y, x). Used for en-face slices and field components.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Image = Plane<float>;

/// Voxel spacing (dz, dy, dx) in micrometers. Informational only.
using Spacing = std::array<double, 3>;

/// Dense Z x H x W grid stored z-major, then y, then x.
template <typename Scalar>
class Volume {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Volume() = default;

  Volume(Index depth, Index height, Index width, Scalar fill = Scalar(0))
      : depth_(depth), height_(height), width_(width) {
    if (depth < 1 || height < 1 || width < 1) {
      throw std::invalid_argument("volume dimensions must be >= 1");
    }
    data_.setConstant(depth * height * width, fill);
  }

  Index depth() const { return depth_; }
  Index height() const { return height_; }
  Index width() const { return width_; }
  Index size() const { return data_.size(); }
  Index plane_size() const { return height_ * width_; }
  std::array<Index, 3> dims() const { return {depth_, height_, width_}; }
  bool empty() const { return data_.size() == 0; }

  Scalar& operator()(Index z, Index y, Index x) {
    return data_[(z * height_ + y) * width_ + x];
  }
  const Scalar& operator()(Index z, Index y, Index x) const {
    return data_[(z * height_ + y) * width_ + x];
  }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  Eigen::Map<Plane<Scalar>> slice(Index z) {
    return {data_.data() + z * plane_size(), height_, width_};
  }
  Eigen::Map<const Plane<Scalar>> slice(Index z) const {
    return {data_.data() + z * plane_size(), height_, width_};
  }

  template <typename To>
  Volume<To> cast() const {
    Volume<To> out(depth_, height_, width_);
    out.data() = data_.template cast<To>();
    out.spacing = spacing;
    out.intensity_range = intensity_range;
    return out;
  }

  bool same_shape(const Volume& other) const { return dims() == other.dims(); }
  template <typename Other>
  bool same_shape(const Volume<Other>& other) const {
    return dims() == other.dims();
  }

  friend bool operator==(const Volume& a, const Volume& b) {
    return a.dims() == b.dims() && (a.data_ == b.data_).all();
  }

  Spacing spacing{1.0, 1.0, 1.0};
  std::optional<std::pair<double, double>> intensity_range;

 private:
  Index depth_ = 0;
  Index height_ = 0;
  Index width_ = 0;
  Storage data_;
};

using Volume3D = Volume<float>;
using MaskVolume = Volume<std::uint8_t>;

struct EnFaceSlice {
  Image pixels;
  Index z = 0;
};

EnFaceSlice extract_slice(const Volume3D& vol, Index z);

/// Stacks equally sized planes into a volume.
Volume3D stack_slices(const std::vector<Image>& slices, Spacing spacing = {1.0, 1.0, 1.0});

// ---- file container: <stem>.json header + <stem>.raw little-endian f32 payload ----

/// Accepts "<stem>", "<stem>.json" or "<stem>.raw".
std::filesystem::path volume_stem(const std::filesystem::path& path);
std::filesystem::path header_path(const std::filesystem::path& path);
std::filesystem::path payload_path(const std::filesystem::path& path);

Volume3D load_volume(const std::filesystem::path& path);
void save_volume(const Volume3D& vol, const std::filesystem::path& path);

MaskVolume load_mask(const std::filesystem::path& path);
void save_mask(const MaskVolume& mask, const std::filesystem::path& path);

/// Affine rescale to [0, 255]. A constant volume maps to all zeros.
Volume3D normalize(const Volume3D& vol);
Image normalize(const Image& img);

/// Returns slices [z0, z1).
Volume3D crop_slab(const Volume3D& vol, Index z0, Index z1);

// ---- crop / flip augmentation ----

struct AugmentationSpec {
  Index window_h = 320;
  Index window_w = 320;
  int windows_per_slice = 10;
  bool flip_horizontal = true;
  bool flip_vertical = true;
  std::uint64_t seed = 0;
};

/// Draws `windows_per_slice` windows and applies the same crop origin and
/// flips to every aligned source. Result[i][k] is window i of source k.
std::vector<std::vector<Image>> augment_aligned(const std::vector<const Image*>& sources,
                                                const AugmentationSpec& spec);

std::vector<std::pair<Image, Image>> augment(const std::pair<Image, Image>& slice_pair,
                                             const AugmentationSpec& spec);

}  // namespace life
