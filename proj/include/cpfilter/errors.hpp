#pragma once

#include <stdexcept>
#include <string>

namespace cpfilter {

/// Problems with inputs or configuration that the caller can fix.
/// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical or runtime failures discovered mid-computation.
/// The CLI maps these to exit code 2.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FileNotFoundError : public ValidationError {
 public:
  explicit FileNotFoundError(const std::string& path)
      : ValidationError("file not found: " + path) {}
};

class SchemaMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Unparseable or missing cell. Rows are 1-based data rows (header excluded).
class ParseError : public ValidationError {
 public:
  ParseError(long row, std::string column, const std::string& what_happened)
      : ValidationError("row " + std::to_string(row) + ", column '" + column +
                        "': " + what_happened),
        row(row),
        column(std::move(column)) {}
  long row;
  std::string column;
};

class NonBinaryValueError : public ValidationError {
 public:
  NonBinaryValueError(long row, std::string column, double value)
      : ValidationError("row " + std::to_string(row) + ", column '" + column +
                        "': value " + std::to_string(value) +
                        " in a declared-binary column"),
        row(row),
        column(std::move(column)) {}
  long row;
  std::string column;
};

class ConstantColumnError : public ValidationError {
 public:
  explicit ConstantColumnError(std::string column)
      : ValidationError("column '" + column + "' has zero sample variance"),
        column(std::move(column)) {}
  std::string column;
};

class DegenerateSplitError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DimensionMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotPositiveDefiniteError : public ComputeError {
 public:
  using ComputeError::ComputeError;
};

class NonConvergenceError : public ComputeError {
 public:
  using ComputeError::ComputeError;
};

class FamilyMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NonFiniteLossError : public ComputeError {
 public:
  NonFiniteLossError(int epoch, const std::string& context)
      : ComputeError("non-finite loss at epoch " + std::to_string(epoch) +
                     " (" + context + ")"),
        epoch(epoch) {}
  int epoch;
};

class NoEventsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SingleCauseDataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class OutcomeMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NonFinitePredictionError : public ComputeError {
 public:
  NonFinitePredictionError(long feature, long row)
      : ComputeError("non-finite prediction at feature " +
                     std::to_string(feature) + ", row " + std::to_string(row)),
        feature(feature),
        row(row) {}
  long feature;
  long row;
};

class OddLengthError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class PathMissingError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InvalidQError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyTruthError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyResultsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MissingTimeGridError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace cpfilter
