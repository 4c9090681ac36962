#pragma once

#include <stdexcept>
#include <string>

namespace activemargin {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input data
class MissingFileError : public Error { using Error::Error; };
class CsvFormatError : public Error { using Error::Error; };
class DateParseError : public Error { using Error::Error; };
class PriceError : public Error { using Error::Error; };
class DuplicateDateError : public Error { using Error::Error; };
class AlignmentError : public Error { using Error::Error; };

// Model construction
class StateSpaceError : public Error { using Error::Error; };
class StochasticityError : public Error { using Error::Error; };

// Evaluation
class PathCountError : public Error { using Error::Error; };
class NoFeasibleSystemError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };

/// A parameter outside the range its owning module accepts.
class InvalidArgumentError : public Error { using Error::Error; };

}  // namespace activemargin
