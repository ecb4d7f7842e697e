#pragma once

#include <stdexcept>
#include <string>

namespace parasite {

// Input-side failures (bad shapes, bad configuration, unreadable files) are
// distinguished from numerical failures so callers can map them to different
// exit paths.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace parasite
