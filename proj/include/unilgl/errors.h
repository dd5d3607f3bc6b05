#pragma once

#include <stdexcept>
#include <string>

namespace unilgl {

// Every failure raised by the library derives from Error so callers that
// isolate faults per item (e.g. per query) can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define UNILGL_DEFINE_ERROR(Name) \
  class Name : public Error {     \
   public:                        \
    using Error::Error;           \
  }

UNILGL_DEFINE_ERROR(ParseError);
UNILGL_DEFINE_ERROR(IoError);
UNILGL_DEFINE_ERROR(EmptyInputError);
UNILGL_DEFINE_ERROR(ValidationError);
UNILGL_DEFINE_ERROR(ConfigError);
UNILGL_DEFINE_ERROR(ArgumentError);
UNILGL_DEFINE_ERROR(RangeError);
UNILGL_DEFINE_ERROR(EmptyProjectionError);
UNILGL_DEFINE_ERROR(MissingBucketError);
UNILGL_DEFINE_ERROR(DegenerateHullError);
UNILGL_DEFINE_ERROR(EmptyIndexError);
UNILGL_DEFINE_ERROR(EvaluationError);
UNILGL_DEFINE_ERROR(InsufficientMatchesError);
UNILGL_DEFINE_ERROR(DegeneracyError);
UNILGL_DEFINE_ERROR(NoConsensusError);
UNILGL_DEFINE_ERROR(ConnectivityError);
UNILGL_DEFINE_ERROR(EmptyScanError);

#undef UNILGL_DEFINE_ERROR

}  // namespace unilgl
