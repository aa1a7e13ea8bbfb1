#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "respose/prior.hpp"

namespace respose {

struct EvalPair {
  PoseMatrix predicted;     // J x 3 meters
  PoseMatrix ground_truth;  // J x 3 meters
  std::vector<char> gt_valid;  // empty = all valid
};

struct ApReport {
  std::vector<double> per_joint;  // NaN for joints with no valid ground truth
  std::vector<long> valid_counts;
  double mean = 0.0;  // over joints with at least one valid pair
};

// Fraction of valid pairs whose Euclidean error is strictly below the
// threshold (default 10 cm), per joint, plus the mean over joints.
ApReport ap_at_threshold(std::span<const EvalPair> pairs, double threshold_m = 0.10);

struct MpjpeReport {
  std::vector<double> per_joint_cm;
  std::vector<long> valid_counts;
  double mean_cm = 0.0;
};

// Mean per-joint Euclidean error over valid pairs, in centimeters.
MpjpeReport mpjpe(std::span<const EvalPair> pairs);

struct Pck2DPair {
  std::vector<std::optional<Eigen::Vector2d>> detections;  // absent = missed
  std::vector<Eigen::Vector2d> ground_truth;               // pixels
  double bbox_height = 0.0;                                // pixels
};

struct PckPoint {
  double radius_fraction = 0.0;
  long tp = 0, fp = 0, fn = 0;
  double precision = 0.0;  // 0 (flagged) when there are no detections at all
  bool precision_defined = true;
  double recall = 0.0;
  double f_score = 0.0;
};

struct PckReport {
  std::vector<PckPoint> points;  // one per radius fraction, input order
  double max_f_score = 0.0;
};

// Precision/recall of 2D detections with match radius alpha * bbox_height,
// aggregated over landmarks and samples, swept over the given fractions.
PckReport pck_curve(std::span<const Pck2DPair> pairs, std::span<const double> radius_fractions);

}  // namespace respose
