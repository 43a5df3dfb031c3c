#include "oscbp/error.hpp"

namespace oscbp {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidConfiguration: return "invalid configuration";
    case ErrorKind::ShortRecord: return "short record";
    case ErrorKind::InsufficientPulses: return "insufficient pulses";
    case ErrorKind::DegenerateWaveform: return "degenerate waveform";
    case ErrorKind::DegeneratePulse: return "degenerate pulse";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::EmptyBatch: return "empty batch";
    case ErrorKind::InvalidGraph: return "invalid graph";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::RatioNotReached: return "ratio not reached";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::IncompleteTable: return "incomplete table";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

}  // namespace oscbp
