#pragma once

#include "life/phantom.hpp"
#include "life/provenance.hpp"
#include "life/volume.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

namespace life::test {

/// Writes a small phantom, its mask and a quick pipeline config into `dir`
/// and returns the config path. Outputs go to `dir / out_name`.
inline std::filesystem::path write_pipeline_fixture(const std::filesystem::path& dir,
                                                    const std::string& out_name = "out") {
  PhantomSpec spec;
  spec.dims = {6, 32, 32};
  spec.seed = 4;
  const Phantom p = generate_phantom(spec);
  save_volume(p.volume, dir / "phantom");
  save_mask(p.mask, dir / "truth");
  const nlohmann::json cfg{
      {"input", "phantom"},
      {"output_dir", out_name},
      {"ground_truth", "truth"},
      {"seed", 3},
      {"network",
       {{"dn_channels", {4, 8}}, {"enc_channels", {4, 8}}, {"dec_channels", {4}}, {"recurrent_steps", 1},
        {"epochs", 2}, {"patch", 16}, {"patches_per_slice", 1}}},
      {"eval", {{"methods", {"otsu", "life"}}}}};
  const auto path = dir / "min.json";
  std::ofstream(path) << cfg.dump(2) << '\n';
  return path;
}

/// SHA-256 of every regular file under `dir`, keyed by relative path.
inline std::map<std::string, std::string> hash_tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = sha256_file(e.path());
  }
  return out;
}

}  // namespace life::test
