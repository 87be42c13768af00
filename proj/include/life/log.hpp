#pragma once

#include <string>
#include <string_view>

namespace life::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

void set_level(Level level);
Level level();
Level parse_level(std::string_view name);

/// Writes one JSON object per line to stderr: {"level":..,"msg":..,"ctx":..}.
void write(Level level, std::string_view msg, std::string_view context = {});

inline void debug(std::string_view msg, std::string_view ctx = {}) { write(Level::debug, msg, ctx); }
inline void info(std::string_view msg, std::string_view ctx = {}) { write(Level::info, msg, ctx); }
inline void warn(std::string_view msg, std::string_view ctx = {}) { write(Level::warn, msg, ctx); }
inline void error(std::string_view msg, std::string_view ctx = {}) { write(Level::error, msg, ctx); }

}  // namespace life::log
