#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "respose/skeleton.hpp"

namespace respose {

// J x 3 pose in the camera frame, meters, one row per landmark.
using PoseMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Joint Gaussian over the concatenated (child limb vector, parent limb
// vector) pair. Child occupies components 0..2, parent 3..5.
struct PairGaussian {
  Vector6d mean = Vector6d::Zero();
  Matrix6d cov = Matrix6d::Identity();
};

struct LimbPrior {
  std::vector<std::optional<PairGaussian>> pairs;  // indexed by limb; nullopt for the root
  double epsilon = 1e-6;                           // covariance floor, m^2
  std::uint64_t skeleton_checksum = 0;
};

// Limb vector of `limb` in `pose`: child landmark minus parent-side landmark.
Eigen::Vector3d limb_vector(const SkeletonModel& model, int limb, const PoseMatrix& pose);

// Maximum-likelihood mean/covariance of each non-root limb pair across the
// training poses, with epsilon * I added to every covariance.
LimbPrior fit_limb_prior(const SkeletonModel& model, std::span<const PoseMatrix> poses,
                         double epsilon = 1e-6);

// Mean of the child limb vector conditioned on the parent limb vector:
// mu_c + S_cp * S_pp^-1 * (parent - mu_p).
Eigen::Vector3d recover_landmark(const LimbPrior& prior, int limb,
                                 const Eigen::Vector3d& parent_vector);

// Structured-text manifest: per-limb mean (6 values) and covariance (36,
// row-major), plus the skeleton checksum.
void save_prior(const std::filesystem::path& path, const LimbPrior& prior);
LimbPrior load_prior(const std::filesystem::path& path, const SkeletonModel& model);

}  // namespace respose
