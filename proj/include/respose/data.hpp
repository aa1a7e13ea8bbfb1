#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "respose/camera.hpp"
#include "respose/lifting.hpp"
#include "respose/prior.hpp"
#include "respose/skeleton.hpp"

namespace respose {

// One pose sample in the interchange format (one JSON object per line).
// Depth comes either inline per landmark or from a referenced depth frame
// file; see docs/formats.md.
struct SampleRecord {
  std::string id;
  CameraIntrinsics intrinsics;
  Pose2D detections;                                  // size J
  std::vector<std::optional<double>> landmark_depth;  // size J when inline
  std::filesystem::path depth_frame;                  // empty when depths are inline

  std::optional<PoseMatrix> gt3d;  // J x 3 meters
  std::vector<char> gt_valid;      // empty = all valid

  std::optional<std::vector<Eigen::Vector2d>> gt2d;  // for PCK
  std::optional<double> bbox_height;                 // pixels
};

// Reads records, validating against the skeleton. In strict mode any
// malformed record throws (with its line number); otherwise it is skipped
// with a warning on `warnings`.
std::vector<SampleRecord> read_dataset(const std::filesystem::path& path,
                                       const SkeletonModel& model, bool strict = true,
                                       std::ostream* warnings = nullptr);
void write_dataset(const std::filesystem::path& path, std::span<const SampleRecord> records);

// Lifts one record, using its depth frame when referenced and the inline
// depths otherwise.
LiftedPose lift_record(const SkeletonModel& model, const SampleRecord& record,
                       const LimbPrior& prior, const LiftOptions& options = {});

struct SynthConfig {
  long count = 1000;
  std::uint64_t seed = 1;

  CameraIntrinsics intrinsics{365.0, 365.0, 256.0, 212.0};  // Kinect2-class
  int frame_width = 512;
  int frame_height = 424;

  double z_min = 1.5, z_max = 6.0;  // camera-frame placement range, meters

  // Observed surface points sit off the true joint centers by a smooth
  // deterministic offset field of this magnitude; the field depends only on
  // these two values, so train/test splits generated with the same settings
  // share it (that is what makes the residual learnable).
  double surface_offset_m = 0.03;
  double offset_smoothness = 0.8;  // spatial frequency, 1/m

  double depth_noise_std_m = 0.0;

  // Applied to non-trunk landmarks; spine endpoints are never dropped and
  // at least two further trunk landmarks always survive.
  double dropout_prob = 0.0;
  std::vector<double> dropout_per_landmark;  // optional override, size J

  double pose_amplitude = 0.2;  // per-limb direction perturbation
  double yaw_amplitude = 3.141592653589793;

  double confidence_mean = 0.85;
  double confidence_std = 0.08;

  // Per-limb [min, max] length in meters; defaults derived from the
  // landmark names when empty.
  std::vector<std::pair<double, double>> limb_length_ranges;
};

// Deterministic function of (config, skeleton). Every sample satisfies the
// trunk guarantee, carries inline depths consistent with the synthetic
// surface points, and stores the true joint centers as ground truth.
std::vector<SampleRecord> generate_synthetic(const SynthConfig& config,
                                             const SkeletonModel& model);

// Maps sensor depth in [0, 8] m linearly onto [-0.5, 0.5]. Out-of-range
// input throws in strict mode and is clamped otherwise (flag reported
// through `clamped` when given).
double normalize_depth_range(double raw_m, bool strict = false, bool* clamped = nullptr);

}  // namespace respose
