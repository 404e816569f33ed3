#pragma once

#include <stdexcept>
#include <string>

namespace glocal {

// Every module reports failures through this hierarchy so callers (the CLI in
// particular) can catch `Error` once and still tell the kinds apart in tests.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class DegenerateInputError : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };
class ValidationError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class IntegrityError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class AlignmentError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

}  // namespace glocal
