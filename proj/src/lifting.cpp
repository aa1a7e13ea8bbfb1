#include "respose/lifting.hpp"

#include <cmath>

#include "respose/errors.hpp"

namespace respose {

PoseMatrix LiftedPose::positions() const {
  PoseMatrix out(joint_count(), 3);
  for (int j = 0; j < joint_count(); ++j) out.row(j) = landmarks[j].position.transpose();
  return out;
}

namespace {

struct Resolved {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Provenance provenance = Provenance::kDetected;
  double confidence = 0.0;
  bool ok = false;
};

void check_pose_size(const SkeletonModel& model, const Pose2D& pose2d) {
  if (static_cast<int>(pose2d.size()) != model.joint_count())
    throw SchemaError("lift_pose: 2D pose landmark count does not match skeleton");
}

// Shared second phase: trunk precondition, then recovery along the limb tree.
LiftedPose finish_lift(const SkeletonModel& model, std::vector<Resolved> state,
                       const LimbPrior& prior, const LiftOptions& options) {
  const Limb& spine = model.limbs[model.root_limb];
  if (!state[spine.child].ok || !state[spine.parent].ok)
    throw UnprocessableSample("lift_pose: spine limb endpoints not detected with usable depth");
  int extra_trunk = 0;
  for (int t : model.trunk)
    if (t != spine.child && t != spine.parent && state[t].ok) ++extra_trunk;
  const int required = std::min<int>(2, static_cast<int>(model.trunk.size()) - 2);
  if (extra_trunk < required)
    throw UnprocessableSample("lift_pose: fewer than " + std::to_string(required) +
                              " additional trunk landmarks detected");

  if (options.recovery_mode == RecoveryMode::kPrior &&
      prior.skeleton_checksum != model.checksum())
    throw FileIntegrityError("lift_pose: prior does not match skeleton");

  Eigen::Vector3d trunk_centroid = Eigen::Vector3d::Zero();
  if (options.recovery_mode == RecoveryMode::kTrunkCentroid) {
    int n = 0;
    for (int t : model.trunk)
      if (state[t].ok) {
        trunk_centroid += state[t].position;
        ++n;
      }
    trunk_centroid /= n;
  }

  for (int limb : recovery_order(model)) {
    if (limb == model.root_limb) continue;
    const Limb& l = model.limbs[limb];
    if (state[l.child].ok) continue;
    // BFS order guarantees the shared landmark and the full parent limb are
    // resolved by the time we get here.
    Resolved& r = state[l.child];
    if (options.recovery_mode == RecoveryMode::kTrunkCentroid) {
      r.position = trunk_centroid;
    } else {
      const int parent_limb = model.limb_parents[limb];
      const Limb& p = model.limbs[parent_limb];
      const Eigen::Vector3d parent_vec = state[p.child].position - state[p.parent].position;
      r.position = state[l.parent].position + recover_landmark(prior, limb, parent_vec);
    }
    r.provenance = Provenance::kPriorRecovered;
    r.confidence = options.recovered_confidence;
    r.ok = true;
  }

  LiftedPose out;
  out.landmarks.resize(state.size());
  for (std::size_t j = 0; j < state.size(); ++j) {
    if (!state[j].ok || !state[j].position.allFinite())
      throw NumericalError("lift_pose: landmark " + model.landmarks[j] + " left unresolved");
    out.landmarks[j] = {state[j].position, state[j].provenance, state[j].confidence};
  }
  return out;
}

}  // namespace

LiftedPose lift_pose(const SkeletonModel& model, const Pose2D& pose2d, const DepthFrame& frame,
                     const LimbPrior& prior, const LiftOptions& options) {
  check_pose_size(model, pose2d);
  std::vector<Resolved> state(pose2d.size());
  for (std::size_t j = 0; j < pose2d.size(); ++j) {
    const Landmark2D& lm = pose2d[j];
    if (!lm.detected) continue;
    const int x = static_cast<int>(std::lround(lm.u));
    const int y = static_cast<int>(std::lround(lm.v));
    if (!frame.in_bounds(x, y)) continue;  // off-frame detection: treat as undetected
    const bool center_valid = depth_valid(frame.at(x, y));
    const auto depth = fill_depth(frame, lm.u, lm.v, options.fill_radius_px);
    if (!depth) continue;  // no depth anywhere in the window: demote to undetected
    state[j].position = lift_point(lm.u, lm.v, *depth, frame.intrinsics);
    state[j].provenance = center_valid ? Provenance::kDetected : Provenance::kDepthFilled;
    state[j].confidence = lm.confidence;
    state[j].ok = true;
  }
  return finish_lift(model, std::move(state), prior, options);
}

LiftedPose lift_pose(const SkeletonModel& model, const Pose2D& pose2d,
                     std::span<const std::optional<double>> depths,
                     const CameraIntrinsics& intrinsics, const LimbPrior& prior,
                     const LiftOptions& options) {
  check_pose_size(model, pose2d);
  if (depths.size() != pose2d.size())
    throw SchemaError("lift_pose: depth list size does not match landmark count");
  std::vector<Resolved> state(pose2d.size());
  for (std::size_t j = 0; j < pose2d.size(); ++j) {
    const Landmark2D& lm = pose2d[j];
    if (!lm.detected || !depths[j] || !depth_valid(*depths[j])) continue;
    state[j].position = lift_point(lm.u, lm.v, *depths[j], intrinsics);
    state[j].provenance = Provenance::kDetected;
    state[j].confidence = lm.confidence;
    state[j].ok = true;
  }
  return finish_lift(model, std::move(state), prior, options);
}

}  // namespace respose
