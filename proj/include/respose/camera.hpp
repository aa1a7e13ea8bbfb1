#pragma once

#include <cmath>

#include <Eigen/Core>

#include "respose/errors.hpp"

namespace respose {

// Pinhole model. Setting cx = cy = 0 gives the bare diag(1/fx, 1/fy, 1)
// back-projection; real sensors carry a principal point, so we keep one.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  bool valid() const { return std::isfinite(fx) && std::isfinite(fy) && fx > 0.0 && fy > 0.0; }
};

// Back-projects pixel (u, v) with depth z (meters) into the camera frame.
inline Eigen::Vector3d lift_point(double u, double v, double z, const CameraIntrinsics& k) {
  if (!k.valid()) throw NumericalError("lift_point: invalid intrinsics");
  if (!std::isfinite(z) || z <= 0.0) throw NumericalError("lift_point: non-positive or non-finite depth");
  return {z * (u - k.cx) / k.fx, z * (v - k.cy) / k.fy, z};
}

// Forward projection of a camera-frame point with z > 0 onto the image plane.
inline Eigen::Vector2d project_point(const Eigen::Vector3d& p, const CameraIntrinsics& k) {
  if (!k.valid()) throw NumericalError("project_point: invalid intrinsics");
  if (!(p.z() > 0.0)) throw NumericalError("project_point: point not in front of camera");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

}  // namespace respose
