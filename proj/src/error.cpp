#include "suas/error.hpp"

namespace suas {

std::string_view ToString(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kDegenerateOutput: return "degenerate-output";
    case ErrorKind::kParse: return "parse-error";
    case ErrorKind::kFormat: return "format-error";
    case ErrorKind::kLength: return "length-error";
    case ErrorKind::kIo: return "io-error";
    case ErrorKind::kPairing: return "pairing-error";
    case ErrorKind::kMissingScores: return "missing-scores";
    case ErrorKind::kNoSampleableTiles: return "no-sampleable-tiles";
    case ErrorKind::kNoSignal: return "no-signal";
    case ErrorKind::kManifestInvariant: return "manifest-invariant";
    case ErrorKind::kBackend: return "backend-error";
  }
  return "error";
}

}  // namespace suas
