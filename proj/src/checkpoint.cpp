#include "life/nn/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace life::nn {

namespace {

constexpr char kMagic[8] = {'L', 'I', 'F', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

std::string get_string(std::istream& in, std::uint32_t limit = 1u << 24) {
  const std::uint32_t n = get_u32(in);
  if (n > limit) throw std::runtime_error("checkpoint string length out of range");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_string(out, nlohmann::json(model.config()).dump());
  const auto& params = model.params().params();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_string(out, name);
    const Shape& s = t.shape();
    put_u32(out, 4);
    for (Index d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.value().data()),
              static_cast<std::streamsize>(t.value().size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  LifeConfig cfg = nlohmann::json::parse(get_string(in)).get<LifeConfig>();
  Model model(cfg);

  std::map<std::string, Tensor> by_name;
  for (const auto& [name, t] : model.params().params()) by_name.emplace(name, t);

  const std::uint32_t count = get_u32(in);
  if (count != by_name.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(count) + " parameters, model expects " +
                             std::to_string(by_name.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(in, 4096);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("unexpected checkpoint parameter " + name);
    const std::uint32_t ndims = get_u32(in);
    if (ndims != 4) throw std::runtime_error("parameter " + name + " must have 4 dims");
    Shape s;
    s.n = get_u32(in);
    s.c = get_u32(in);
    s.h = get_u32(in);
    s.w = get_u32(in);
    Tensor& t = it->second;
    if (!(s == t.shape())) {
      throw std::runtime_error("parameter " + name + " has shape " + s.str() + ", expected " + t.shape().str());
    }
    in.read(reinterpret_cast<char*>(t.value().data()), static_cast<std::streamsize>(t.value().size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint truncated in " + name);
    if (!t.value().allFinite()) throw std::runtime_error("non-finite values in parameter " + name);
  }
  return model;
}

}  // namespace life::nn
