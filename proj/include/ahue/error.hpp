#pragma once

#include <stdexcept>
#include <string>

namespace ahue {

enum class Errc {
  zero_vector,
  not_finite,
  invalid_dims,
  degenerate_plane,
  degenerate_spectrum,
  frozen_store,
  empty_store,
  not_frozen,
  bad_query_norm,
  empty_query,
  bad_class_count,
  shape_mismatch,
  stale_cache,
  config_error,
  no_angular_data,
  bad_magic,
  bad_version,
  truncated,
  io_failure,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::zero_vector: return "ZeroVector";
    case Errc::not_finite: return "NotFinite";
    case Errc::invalid_dims: return "InvalidDims";
    case Errc::degenerate_plane: return "DegeneratePlane";
    case Errc::degenerate_spectrum: return "DegenerateSpectrum";
    case Errc::frozen_store: return "FrozenStore";
    case Errc::empty_store: return "EmptyStore";
    case Errc::not_frozen: return "NotFrozen";
    case Errc::bad_query_norm: return "BadQueryNorm";
    case Errc::empty_query: return "EmptyQuery";
    case Errc::bad_class_count: return "BadClassCount";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::stale_cache: return "StaleCache";
    case Errc::config_error: return "ConfigError";
    case Errc::no_angular_data: return "NoAngularData";
    case Errc::bad_magic: return "BadMagic";
    case Errc::bad_version: return "BadVersion";
    case Errc::truncated: return "Truncated";
    case Errc::io_failure: return "IoFailure";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace ahue
