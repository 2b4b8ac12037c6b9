#pragma once

#include <stdexcept>
#include <string>

namespace rvcguard {

// Root of every exception thrown by the library. Callers that only need to
// distinguish "our" failures from std::bad_alloc and friends catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RVCGUARD_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  };

// audio
RVCGUARD_DEFINE_ERROR(DecodeError)
RVCGUARD_DEFINE_ERROR(UnsupportedFormat)

// features / configuration
RVCGUARD_DEFINE_ERROR(InsufficientSamples)
RVCGUARD_DEFINE_ERROR(ConfigError)

// dataset
RVCGUARD_DEFINE_ERROR(ParseError)
RVCGUARD_DEFINE_ERROR(SchemaError)
RVCGUARD_DEFINE_ERROR(CorpusError)
RVCGUARD_DEFINE_ERROR(EmptyDataset)

// classifiers
RVCGUARD_DEFINE_ERROR(DegenerateLabels)
RVCGUARD_DEFINE_ERROR(ShapeError)
RVCGUARD_DEFINE_ERROR(VersionError)
RVCGUARD_DEFINE_ERROR(IncompatibleModel)

// evaluation / streaming
RVCGUARD_DEFINE_ERROR(UndefinedMetric)
RVCGUARD_DEFINE_ERROR(EmptyPartition)
RVCGUARD_DEFINE_ERROR(OrderingError)

#undef RVCGUARD_DEFINE_ERROR

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, int epoch)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace rvcguard
