#pragma once

#include <stdexcept>
#include <string>

namespace cemt {

// Error taxonomy shared by all modules. Every error carries a message with
// enough context to diagnose the failing call without a debugger.

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("ShapeError: " + msg) {}
};

struct DegenerateMask : std::runtime_error {
  explicit DegenerateMask(const std::string& msg) : std::runtime_error("DegenerateMask: " + msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("ConfigError: " + msg) {}
};

struct LayoutMismatch : std::runtime_error {
  explicit LayoutMismatch(const std::string& msg) : std::runtime_error("LayoutMismatch: " + msg) {}
};

struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error("DomainError: " + msg) {}
};

struct SplitError : std::runtime_error {
  explicit SplitError(const std::string& msg) : std::runtime_error("SplitError: " + msg) {}
};

struct GenerationRetryExceeded : std::runtime_error {
  explicit GenerationRetryExceeded(const std::string& msg)
      : std::runtime_error("GenerationRetryExceeded: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("IoError: " + msg) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error("FormatError: " + msg) {}
};

struct HashMismatch : std::runtime_error {
  explicit HashMismatch(const std::string& msg) : std::runtime_error("HashMismatch: " + msg) {}
};

struct TrainingAborted : std::runtime_error {
  explicit TrainingAborted(const std::string& msg) : std::runtime_error("TrainingAborted: " + msg) {}
};

}  // namespace cemt
