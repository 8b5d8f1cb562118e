#pragma once

#include "tims/types.hpp"

namespace tims {

struct DegenerateNormalError : Error {
  explicit DegenerateNormalError(const std::string& what) : Error("degenerate-normal", what) {}
};

template <typename Scalar>
struct SphereT {
  Vec3T<Scalar> center = Vec3T<Scalar>::Zero();
  Scalar radius = Scalar(12000);

  /// Positive outside, negative inside.
  Scalar signed_distance(const Vec3T<Scalar>& p) const { return (p - center).norm() - radius; }

  Vec3T<Scalar> outward_normal(const Vec3T<Scalar>& p) const {
    const Vec3T<Scalar> r = p - center;
    const Scalar n = r.norm();
    if (!(n > Scalar(0))) throw DegenerateNormalError("point coincides with the sphere center");
    return r / n;
  }

  Vec3T<Scalar> project(const Vec3T<Scalar>& p) const { return center + radius * outward_normal(p); }
};

using Sphere = SphereT<double>;

}  // namespace tims
