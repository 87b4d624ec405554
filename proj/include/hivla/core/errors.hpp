#pragma once

#include <stdexcept>
#include <string>

namespace hivla {

/// Invalid configuration or invalid arguments supplied by the caller.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Failure while executing an otherwise valid request (I/O, infeasible
/// placement, numeric contract violations observed at run time).
struct RuntimeError : std::runtime_error {
  explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hivla
