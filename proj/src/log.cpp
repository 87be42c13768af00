#include "life/log.hpp"

#include <json.hpp>

#include <atomic>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>

namespace life::log {
namespace {

std::atomic<Level> g_level{Level::warn};
std::mutex g_mutex;

const char* name_of(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
    case Level::off: return "off";
  }
  return "?";
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

Level parse_level(std::string_view name) {
  if (name == "debug") return Level::debug;
  if (name == "info") return Level::info;
  if (name == "warn" || name == "warning") return Level::warn;
  if (name == "error") return Level::error;
  if (name == "off") return Level::off;
  throw std::invalid_argument("unknown log level: " + std::string(name));
}

void write(Level lvl, std::string_view msg, std::string_view context) {
  if (lvl < g_level.load() || g_level.load() == Level::off) return;
  nlohmann::json line{{"level", name_of(lvl)}, {"msg", msg}};
  if (!context.empty()) line["ctx"] = context;
  std::lock_guard lock(g_mutex);
  std::cerr << line.dump() << '\n';
}

}  // namespace life::log
