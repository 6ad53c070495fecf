#pragma once

#include <stdexcept>
#include <string>

namespace ntscan {

/// Unreadable or unsupported image/file content. The message names the
/// offending property (magic, bit depth, colour type, ...).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The mask holds no usable translucent (dark) cluster.
class NoTranslucency : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A millimetre result was requested without mm-per-pixel calibration.
class CalibrationRequired : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Blob second moments are isotropic, so the long axis is undefined.
class AxisIllDefined : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, manifest or phantom spec file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps a failure with the pipeline stage it came from.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace ntscan
