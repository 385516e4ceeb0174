#pragma once

#include <stdexcept>
#include <string>

namespace fnav {

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct SizeMismatch : std::runtime_error {
  explicit SizeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct DepthNonPositive : std::runtime_error {
  explicit DepthNonPositive(const std::string& what = "point at or behind the source plane")
      : std::runtime_error(what) {}
};

struct IntrinsicsMismatch : std::runtime_error {
  explicit IntrinsicsMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateConfiguration : std::runtime_error {
  explicit DegenerateConfiguration(const std::string& what) : std::runtime_error(what) {}
};

struct InsufficientPoints : std::runtime_error {
  explicit InsufficientPoints(const std::string& what) : std::runtime_error(what) {}
};

struct NoConvergence : std::runtime_error {
  explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};

struct MatchFailed : std::runtime_error {
  explicit MatchFailed(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidConfig : std::runtime_error {
  explicit InvalidConfig(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : std::runtime_error {
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyOutput : std::runtime_error {
  explicit EmptyOutput(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyInput : std::runtime_error {
  explicit EmptyInput(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateDirection : std::runtime_error {
  explicit DegenerateDirection(const std::string& what) : std::runtime_error(what) {}
};

struct PlacementFailure : std::runtime_error {
  explicit PlacementFailure(const std::string& what) : std::runtime_error(what) {}
};

struct ModeInputMissing : std::runtime_error {
  explicit ModeInputMissing(const std::string& what) : std::runtime_error(what) {}
};

struct RenderFailure : std::runtime_error {
  explicit RenderFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fnav
