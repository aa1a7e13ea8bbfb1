#include "respose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "respose/errors.hpp"

namespace respose {

namespace {

int checked_joint_count(std::span<const EvalPair> pairs, const char* what) {
  if (pairs.empty()) throw SchemaError(std::string(what) + ": empty pair list");
  const Eigen::Index joints = pairs.front().predicted.rows();
  for (const EvalPair& p : pairs) {
    if (p.predicted.rows() != joints || p.ground_truth.rows() != joints)
      throw SchemaError(std::string(what) + ": inconsistent joint counts");
    if (!p.gt_valid.empty() && static_cast<Eigen::Index>(p.gt_valid.size()) != joints)
      throw SchemaError(std::string(what) + ": gt_valid size mismatch");
  }
  return static_cast<int>(joints);
}

inline bool pair_valid(const EvalPair& p, int joint) {
  return p.gt_valid.empty() || p.gt_valid[joint];
}

}  // namespace

ApReport ap_at_threshold(std::span<const EvalPair> pairs, double threshold_m) {
  if (!(threshold_m > 0.0)) throw SchemaError("ap_at_threshold: threshold must be positive");
  const int joints = checked_joint_count(pairs, "ap_at_threshold");

  ApReport report;
  report.per_joint.assign(joints, std::numeric_limits<double>::quiet_NaN());
  report.valid_counts.assign(joints, 0);
  std::vector<long> hits(joints, 0);
  for (const EvalPair& p : pairs) {
    for (int j = 0; j < joints; ++j) {
      if (!pair_valid(p, j)) continue;
      ++report.valid_counts[j];
      const double err = (p.predicted.row(j) - p.ground_truth.row(j)).norm();
      if (err < threshold_m) ++hits[j];  // strictly below the threshold
    }
  }
  double sum = 0.0;
  int counted = 0;
  for (int j = 0; j < joints; ++j) {
    if (report.valid_counts[j] == 0) continue;
    report.per_joint[j] = static_cast<double>(hits[j]) / report.valid_counts[j];
    sum += report.per_joint[j];
    ++counted;
  }
  if (counted == 0) throw SchemaError("ap_at_threshold: no valid ground truth at all");
  report.mean = sum / counted;
  return report;
}

MpjpeReport mpjpe(std::span<const EvalPair> pairs) {
  const int joints = checked_joint_count(pairs, "mpjpe");
  MpjpeReport report;
  report.per_joint_cm.assign(joints, std::numeric_limits<double>::quiet_NaN());
  report.valid_counts.assign(joints, 0);
  std::vector<double> sums(joints, 0.0);
  for (const EvalPair& p : pairs) {
    for (int j = 0; j < joints; ++j) {
      if (!pair_valid(p, j)) continue;
      ++report.valid_counts[j];
      sums[j] += (p.predicted.row(j) - p.ground_truth.row(j)).norm();
    }
  }
  double sum = 0.0;
  int counted = 0;
  for (int j = 0; j < joints; ++j) {
    if (report.valid_counts[j] == 0) continue;
    report.per_joint_cm[j] = 100.0 * sums[j] / report.valid_counts[j];
    sum += report.per_joint_cm[j];
    ++counted;
  }
  if (counted == 0) throw SchemaError("mpjpe: no valid ground truth at all");
  report.mean_cm = sum / counted;
  return report;
}

PckReport pck_curve(std::span<const Pck2DPair> pairs, std::span<const double> radius_fractions) {
  if (pairs.empty()) throw SchemaError("pck_curve: empty pair list");
  if (radius_fractions.empty()) throw SchemaError("pck_curve: empty radius sweep");
  for (double f : radius_fractions)
    if (!(f > 0.0)) throw SchemaError("pck_curve: radius fractions must be positive");
  for (const Pck2DPair& p : pairs) {
    if (!(p.bbox_height > 0.0)) throw SchemaError("pck_curve: bbox height must be positive");
    if (p.detections.size() != p.ground_truth.size())
      throw SchemaError("pck_curve: detections/ground truth size mismatch");
  }

  PckReport report;
  for (double alpha : radius_fractions) {
    PckPoint pt;
    pt.radius_fraction = alpha;
    for (const Pck2DPair& p : pairs) {
      const double radius = alpha * p.bbox_height;
      for (std::size_t j = 0; j < p.ground_truth.size(); ++j) {
        if (!p.detections[j]) {
          ++pt.fn;
          continue;
        }
        const double dist = (*p.detections[j] - p.ground_truth[j]).norm();
        if (dist <= radius)
          ++pt.tp;
        else
          ++pt.fp;
      }
    }
    if (pt.tp + pt.fp == 0) {
      pt.precision = 0.0;
      pt.precision_defined = false;
    } else {
      pt.precision = static_cast<double>(pt.tp) / (pt.tp + pt.fp);
    }
    pt.recall = pt.tp + pt.fn == 0 ? 0.0 : static_cast<double>(pt.tp) / (pt.tp + pt.fn);
    pt.f_score = pt.precision + pt.recall > 0.0
                     ? 2.0 * pt.precision * pt.recall / (pt.precision + pt.recall)
                     : 0.0;
    report.max_f_score = std::max(report.max_f_score, pt.f_score);
    report.points.push_back(pt);
  }
  return report;
}

}  // namespace respose
