#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "respose/camera.hpp"
#include "respose/depth_frame.hpp"
#include "respose/prior.hpp"
#include "respose/skeleton.hpp"

namespace respose {

// 2D detector output surrogate for one landmark.
struct Landmark2D {
  double u = 0.0;
  double v = 0.0;
  double confidence = 0.0;  // ignored when detected == false
  bool detected = false;
};

using Pose2D = std::vector<Landmark2D>;

enum class Provenance { kDetected, kDepthFilled, kPriorRecovered };

struct LiftedLandmark {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // meters, camera frame
  Provenance provenance = Provenance::kDetected;
  double confidence = 0.0;
};

struct LiftedPose {
  std::vector<LiftedLandmark> landmarks;

  int joint_count() const { return static_cast<int>(landmarks.size()); }
  PoseMatrix positions() const;
};

// How undetected landmarks are placed. TrunkCentroid exists for ablations
// (it substitutes the mean of the resolved trunk landmarks instead of the
// conditional-mean limb vector).
enum class RecoveryMode { kPrior, kTrunkCentroid };

struct LiftOptions {
  int fill_radius_px = 5;
  double recovered_confidence = 0.1;
  RecoveryMode recovery_mode = RecoveryMode::kPrior;
};

// Back-projects detected landmarks with the frame's depth (filling holes
// from the neighborhood) and recovers undetected ones along the limb tree.
// Throws UnprocessableSample when the trunk precondition is unmet: both
// spine-limb endpoints plus at least two further trunk landmarks must lift.
LiftedPose lift_pose(const SkeletonModel& model, const Pose2D& pose2d, const DepthFrame& frame,
                     const LimbPrior& prior, const LiftOptions& options = {});

// Same, with per-landmark depth values instead of a depth frame (records may
// inline depths; invalid/absent entries demote the landmark to undetected).
LiftedPose lift_pose(const SkeletonModel& model, const Pose2D& pose2d,
                     std::span<const std::optional<double>> depths,
                     const CameraIntrinsics& intrinsics, const LimbPrior& prior,
                     const LiftOptions& options = {});

}  // namespace respose
