#pragma once

#include <map>
#include <string>
#include <vector>

#include "ldr/synth.hpp"

namespace ldr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// `key = value` lines, `#` starts a comment. Throws ConfigError naming the
/// file and line on malformed input.
std::vector<ConfigEntry> parse_config_file(const std::string& path);

/// Named noise presets: none, mild, high.
NoiseModel noise_preset(const std::string& name);

/// Runs one subcommand; returns the process exit code.
int dispatch(int argc, const char* const* argv);

}  // namespace ldr::cli
