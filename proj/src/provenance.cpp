#include "life/provenance.hpp"

#include "life/volume.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace life {

namespace fs = std::filesystem;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("sha256 init failed");
    }
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("sha256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), digest.data(), &len) != 1) {
      throw std::runtime_error("sha256 final failed");
    }
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) {
      out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return out.str();
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

void hash_stream(Sha256& h, std::istream& in) {
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for hashing: " + path.string());
  Sha256 h;
  hash_stream(h, in);
  return h.hex();
}

std::string volume_hash(const fs::path& path) {
  Sha256 h;
  {
    std::ifstream hdr(header_path(path));
    if (!hdr) throw std::runtime_error("cannot open for hashing: " + header_path(path).string());
    hash_stream(h, hdr);
  }
  std::ifstream raw(payload_path(path), std::ios::binary);
  if (!raw) throw std::runtime_error("cannot open for hashing: " + payload_path(path).string());
  hash_stream(h, raw);
  return h.hex();
}

fs::path provenance_path(const fs::path& artifact) {
  fs::path p = volume_stem(artifact);
  p += ".prov.json";
  return p;
}

void write_provenance(const fs::path& artifact, std::string_view stage,
                      const nlohmann::json& inputs, const nlohmann::json& parameters) {
  nlohmann::json prov;
  prov["stage"] = stage;
  prov["tool_version"] = kToolVersion;
  prov["inputs"] = inputs;
  prov["parameters"] = parameters;
  if (fs::exists(payload_path(artifact)) && fs::exists(header_path(artifact))) {
    prov["output_hash"] = volume_hash(artifact);
  } else if (fs::exists(artifact)) {
    prov["output_hash"] = sha256_file(artifact);
  }
  std::ofstream out(provenance_path(artifact));
  out << prov.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing provenance for " + artifact.string());
}

}  // namespace life
