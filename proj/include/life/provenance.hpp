#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace life {

inline constexpr std::string_view kToolVersion = "1.0.0";

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Hash of a volume container (its raw payload plus the dims line of the header).
std::string volume_hash(const std::filesystem::path& path);

/// Writes `<stem>.prov.json` next to a volume or other artifact. Records
/// input hashes, parameters, the tool version and the output's own hash.
/// No timestamps, so identical runs produce identical provenance files.
void write_provenance(const std::filesystem::path& artifact, std::string_view stage,
                      const nlohmann::json& inputs, const nlohmann::json& parameters);

std::filesystem::path provenance_path(const std::filesystem::path& artifact);

}  // namespace life
