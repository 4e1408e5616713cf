#pragma once

#include <stdexcept>
#include <string>

namespace scex {

// Exit-code mapping used by the CLI: config 2, fit 3, numeric 4.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct input_error : std::runtime_error {
  explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct fit_error : std::runtime_error {
  explicit fit_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace scex
