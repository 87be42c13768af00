#pragma once

#include "life/volume.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace life::test {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("life_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Volume3D random_volume(Index z, Index h, Index w, std::uint64_t seed, float lo = 0.0f,
                              float hi = 255.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  Volume3D v(z, h, w);
  for (auto& x : v.data()) x = dist(rng);
  return v;
}

inline Image random_image(Index h, Index w, std::uint64_t seed, float lo = 0.0f, float hi = 255.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  Image img(h, w);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = dist(rng);
  return img;
}

}  // namespace life::test
