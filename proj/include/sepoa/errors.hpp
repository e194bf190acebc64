#pragma once

#include <stdexcept>
#include <string>

namespace sepoa {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoEligibleTrajectory : Error {
  NoEligibleTrajectory() : Error("no eligible trajectory in buffer") {}
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct UnsupportedPrimitive : Error {
  using Error::Error;
};

struct InvalidAction : Error {
  using Error::Error;
};

struct TooFewParticles : Error {
  using Error::Error;
};

struct CropLongerThanSegment : Error {
  using Error::Error;
};

struct ServiceUnavailable : Error {
  ServiceUnavailable() : Error("label service is not running") {}
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace sepoa
