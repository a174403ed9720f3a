#pragma once

#include <stdexcept>

namespace drumremap {

/// Input data violates a documented invariant (bad file, bad config, degenerate audio).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A segment has no energy, so spectral or temporal statistics are undefined.
class SilentSegmentError : public DataError {
 public:
  SilentSegmentError() : DataError("silent segment") {}
};

}  // namespace drumremap
