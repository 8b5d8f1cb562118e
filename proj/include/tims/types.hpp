#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace tims {

/// 3D position. Micrometers in the follower/world frame, millimeters in the
/// leader frame; the frame is implied by where the value lives.
template <typename Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;

using Vec3 = Vec3T<double>;

template <typename Scalar>
using PathT = std::vector<Vec3T<Scalar>, Eigen::aligned_allocator<Vec3T<Scalar>>>;

using Path = PathT<double>;

/// Base of every error the library throws. `kind()` is a stable short tag
/// that the CLI and the HTTP layer report verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error("numerical", what) {}
};

}  // namespace tims
