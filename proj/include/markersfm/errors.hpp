#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace markersfm {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// geometry
class BranchAmbiguityError : public Error
{
public:
  using Error::Error;
};

class DegenerateAlignmentError : public Error
{
public:
  using Error::Error;
};

// sensor model
class BehindCameraError : public Error
{
public:
  using Error::Error;
};

// scene data / IO
class IoError : public Error
{
public:
  using Error::Error;
};

/// Malformed input. Carries the offending file and 1-based line (0 when the
/// whole document is at fault).
class ParseError : public Error
{
public:
  ParseError(const std::string &file, int line, const std::string &what)
    : Error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line)
  {}

  const std::string &file() const { return file_; }
  int line() const { return line_; }

private:
  std::string file_;
  int line_;
};

class UnknownMarkerError : public ParseError
{
public:
  using ParseError::ParseError;
};

class CameraIndexError : public ParseError
{
public:
  using ParseError::ParseError;
};

class CornerWindingError : public ParseError
{
public:
  using ParseError::ParseError;
};

class DuplicateIdError : public Error
{
public:
  using Error::Error;
};

// planar pnp
class DegenerateQuadError : public Error
{
public:
  using Error::Error;
};

class NoPositiveDepthError : public Error
{
public:
  using Error::Error;
};

class DivergenceError : public Error
{
public:
  using Error::Error;
};

// optimizer
class RankDeficiencyError : public Error
{
public:
  RankDeficiencyError(const std::string &what, std::vector<std::string> variables)
    : Error(what), variables_(std::move(variables))
  {}

  /// Printable ids of the variables that made the normal equations singular.
  const std::vector<std::string> &variables() const { return variables_; }

private:
  std::vector<std::string> variables_;
};

// pipeline
class EmptyDatasetError : public Error
{
public:
  using Error::Error;
};

/// Too few already-mapped markers in a station to localize it.
class InsufficientCoviewError : public Error
{
public:
  using Error::Error;
};

// simulator
class PlacementError : public Error
{
public:
  using Error::Error;
};

class VisibilityError : public Error
{
public:
  using Error::Error;
};

// evaluation
class InsufficientMatchesError : public Error
{
public:
  using Error::Error;
};

}  // namespace markersfm
