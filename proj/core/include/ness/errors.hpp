#pragma once

#include <stdexcept>
#include <string>

namespace ness {

// Invalid user input: bad specs, malformed configuration, unreadable files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Base of every failure that originates in the numerics.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateNess : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class TooLarge : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NotADensityMatrix : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ZeroState : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonFiniteAmplitude : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ZeroWeightSum : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularS : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class BacktrackOverflow : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class FitDiverged : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IncompatibleRuns : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace ness
