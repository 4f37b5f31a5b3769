#pragma once

#include <stdexcept>
#include <string>

namespace giamic {

/// Shape or dimension disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Misuse of the autodiff graph (non-scalar loss, double backward, ...).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN/Inf produced by an op, a gradient or a loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model, training or synthesis configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class FormatErrc {
  kIo = 1,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kDimensionOverflow,
  kInvalidLabel,
  kTrailingData,
};

inline const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::kIo: return "io";
    case FormatErrc::kBadMagic: return "bad-magic";
    case FormatErrc::kVersionMismatch: return "version-mismatch";
    case FormatErrc::kTruncated: return "truncated";
    case FormatErrc::kDimensionOverflow: return "dimension-overflow";
    case FormatErrc::kInvalidLabel: return "invalid-label";
    case FormatErrc::kTrailingData: return "trailing-data";
  }
  return "unknown";
}

/// Feature-file decoding/encoding failure.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  FormatErrc code() const noexcept { return code_; }

 private:
  FormatErrc code_;
};

}  // namespace giamic
