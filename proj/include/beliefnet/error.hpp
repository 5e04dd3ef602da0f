#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace beliefnet {

enum class ErrorKind {
  parse,        // malformed input row
  conflict,     // duplicated key
  domain,       // value outside its admissible range
  dimension,    // too few persons / time points / beliefs
  model_domain, // singular or non-PD model quantities
  convergence,
  lookup,
  degenerate,   // zero variance where a statistic needs some
  aggregation,
  io,
  config,
  dependency,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::domain: return "domain";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::model_domain: return "model_domain";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::lookup: return "lookup";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::aggregation: return "aggregation";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
    case ErrorKind::dependency: return "dependency";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// I/O and configuration problems map to exit code 2, everything else to 1.
inline bool is_io_error(ErrorKind kind) {
  return kind == ErrorKind::io || kind == ErrorKind::config ||
         kind == ErrorKind::parse || kind == ErrorKind::conflict ||
         kind == ErrorKind::dependency;
}

}  // namespace beliefnet
