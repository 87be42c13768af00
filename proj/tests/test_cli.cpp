#include "fixtures.hpp"
#include "support.hpp"

#include "life/pipeline.hpp"
#include "life/volume.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;
using life::test::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string("\"") + LIFE_CLI_PATH + "\" " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("help and argument errors") {
  const Run help = cli("--help");
  CHECK(help.code == 0);
  for (const char* sub : {"phantom", "preprocess", "lif", "baseline", "train", "infer", "binarize", "eval",
                          "pipeline"}) {
    CHECK_MESSAGE(help.out.find(sub) != std::string::npos, sub);
  }
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("phantom --out x --no-such-flag").code == 2);
  CHECK(cli("lif").code == 2);
  CHECK(cli("baseline --in a --out b --method sobel").code == 2);
}

TEST_CASE("missing inputs are validation errors") {
  TempDir dir("cli_missing");
  CHECK(cli("preprocess --in " + q(dir / "none") + " --out " + q(dir / "o")).code == 2);
  CHECK(cli("pipeline --config " + q(dir / "none.json")).code == 2);
  CHECK(cli("eval --gt " + q(dir / "none") + " --pred " + q(dir / "none")).code == 2);
  CHECK(fs::is_empty(dir.path()));
}

TEST_CASE("phantom, baseline and eval chain") {
  TempDir dir("cli_chain");
  std::ofstream(dir / "spec.json") << R"({"dims": [8, 32, 32], "seed": 9})";
  REQUIRE(cli("phantom --spec " + q(dir / "spec.json") + " --out " + q(dir / "ph")).code == 0);
  CHECK(life::volume_exists(dir / "ph" / "volume"));
  CHECK(life::volume_exists(dir / "ph" / "mask"));
  CHECK(fs::exists(dir / "ph" / "volume.prov.json"));

  REQUIRE(cli("baseline --method otsu --in " + q(dir / "ph" / "volume") + " --out " + q(dir / "otsu")).code == 0);
  const Run ev = cli("eval --pred " + q(dir / "otsu") + " --gt " + q(dir / "ph" / "mask"));
  REQUIRE(ev.code == 0);
  const auto j = nlohmann::json::parse(ev.out);
  for (const char* key : {"dice", "tpr", "fpr", "accuracy", "per_slice_dice"}) CHECK(j.contains(key));
  CHECK(j["dice"].get<double>() >= 0.0);
  CHECK(j["dice"].get<double>() <= 1.0);

  // A repeat without --force leaves outputs alone.
  const auto t = fs::last_write_time(life::payload_path(dir / "otsu"));
  CHECK(cli("baseline --method otsu --in " + q(dir / "ph" / "volume") + " --out " + q(dir / "otsu")).code == 0);
  CHECK(fs::last_write_time(life::payload_path(dir / "otsu")) == t);

  CHECK(cli("eval --in " + q(dir / "ph" / "volume") + " --gt " + q(dir / "ph" / "mask") +
            " --methods life --out " + q(dir / "rep")).code == 2);
}

TEST_CASE("lif subcommand writes both fused volumes") {
  TempDir dir("cli_lif");
  std::ofstream(dir / "spec.json") << R"({"dims": [5, 24, 24], "seed": 2})";
  REQUIRE(cli("phantom --spec " + q(dir / "spec.json") + " --out " + q(dir / "ph")).code == 0);
  REQUIRE(cli("lif --r 1 --in " + q(dir / "ph" / "volume") + " --out " + q(dir / "lif")).code == 0);
  const auto lif = life::load_volume(dir / "lif" / "lif");
  CHECK(lif.dims() == life::load_volume(dir / "ph" / "volume").dims());
  CHECK(life::volume_exists(dir / "lif" / "celif"));
  CHECK(cli("lif --r=-1 --in " + q(dir / "ph" / "volume") + " --out " + q(dir / "lif2")).code == 2);
}

TEST_CASE("pipeline subcommand") {
  TempDir dir("cli_pipe");
  const auto cfg = life::test::write_pipeline_fixture(dir.path());
  const Run first = cli("pipeline --config " + q(cfg));
  REQUIRE(first.code == 0);
  const auto j = nlohmann::json::parse(first.out);
  for (const auto& s : j["stages"]) CHECK_FALSE(s["skipped"].get<bool>());
  const Run again = cli("pipeline --config " + q(cfg));
  REQUIRE(again.code == 0);
  for (const auto& s : nlohmann::json::parse(again.out)["stages"]) CHECK(s["skipped"].get<bool>());
}
