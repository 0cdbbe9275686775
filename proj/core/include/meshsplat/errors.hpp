#pragma once

#include <stdexcept>
#include <string>

namespace meshsplat {

/// Bad argument values or mismatched dimensions.
struct ParameterError : std::invalid_argument {
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

/// Mesh connectivity violates an operation's requirements.
struct TopologyError : std::runtime_error {
  explicit TopologyError(const std::string& what) : std::runtime_error(what) {}
};

/// Caller broke a usage contract (e.g. backward with a stale forward cache).
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Degenerate input made a solve rank-deficient.
struct RankDeficiencyError : std::runtime_error {
  explicit RankDeficiencyError(const std::string& what) : std::runtime_error(what) {}
};

/// Missing or inconsistent training inputs / files.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// File parse or serialization failure.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Metric evaluated over an empty pixel set.
struct UndefinedMetricError : std::runtime_error {
  explicit UndefinedMetricError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace meshsplat
