#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace suas {

enum class ErrorKind {
  kInvalidArgument,
  kDegenerateOutput,
  kParse,
  kFormat,
  kLength,
  kIo,
  kPairing,
  kMissingScores,
  kNoSampleableTiles,
  kNoSignal,
  kManifestInvariant,
  kBackend,
};

std::string_view ToString(ErrorKind kind);

// All toolkit failures surface as this exception; `kind` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ToString(kind)) + ": " + message),
        kind_(kind),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace suas
