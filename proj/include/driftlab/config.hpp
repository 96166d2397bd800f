#pragma once

#include <stdexcept>
#include <string>

#include "driftlab/trainer.hpp"

namespace driftlab {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& origin, int line, const std::string& msg)
      : std::runtime_error(origin + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                           msg),
        line(line) {}
  int line;  // 0 for whole-config invariant violations
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and malformed values are errors carrying the line number. Keys not
/// given keep their TrainConfig defaults. The result is validated.
TrainConfig parse_config(const std::string& text, const std::string& origin = "<config>");
TrainConfig load_config(const std::string& path);

/// Canonical text form; parse_config(config_to_text(c)) == c field by field.
std::string config_to_text(const TrainConfig& c);

}  // namespace driftlab
