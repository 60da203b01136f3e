#ifndef NESPPO_ERRORS_H_
#define NESPPO_ERRORS_H_

#include <stdexcept>

namespace nesppo {

// Operand dimensions disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A spec, config or argument combination is not valid.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An environment was driven outside its contract (bad action, step after
// terminal).
class EnvError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A checkpoint file could not be decoded.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Source and target networks cannot exchange parameters.
class TransferError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical result that must be finite was not.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nesppo

#endif  // NESPPO_ERRORS_H_
