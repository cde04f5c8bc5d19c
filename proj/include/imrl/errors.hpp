#pragma once

#include <stdexcept>
#include <string>

namespace imrl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define IMRL_DEFINE_ERROR(Name)       \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  };

IMRL_DEFINE_ERROR(InvalidArchitecture)
IMRL_DEFINE_ERROR(ShapeError)
IMRL_DEFINE_ERROR(LabelError)
IMRL_DEFINE_ERROR(ConfigError)
IMRL_DEFINE_ERROR(EmptyMask)
IMRL_DEFINE_ERROR(NoFeasiblePoint)
IMRL_DEFINE_ERROR(ActionError)
IMRL_DEFINE_ERROR(MetricsError)
IMRL_DEFINE_ERROR(IoError)

#undef IMRL_DEFINE_ERROR

}  // namespace imrl
