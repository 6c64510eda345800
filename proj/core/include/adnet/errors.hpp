#pragma once

#include <stdexcept>
#include <string>

namespace adnet {

// File and serialization failures (missing paths, malformed headers,
// payload size mismatches).
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rejected configuration: unknown keys, out-of-range values.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Semantically invalid data for an operation (empty masks where foreground
// is required, absent classes, shape mismatches between related inputs).
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace adnet
