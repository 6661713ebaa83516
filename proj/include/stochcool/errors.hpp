#pragma once

#include <stdexcept>
#include <string>

namespace stochcool {

// Basis cutoff cannot hold the requested state (corner-occupation rule).
struct capacity_error : std::runtime_error {
  explicit capacity_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A numerical procedure failed to reach its tolerance (quadrature,
// series truncation, grid refinement).  Never silent.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration (parse errors carry line numbers in the message).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace stochcool
