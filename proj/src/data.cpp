#include "respose/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "respose/depth_frame.hpp"
#include "respose/errors.hpp"

namespace respose {

using nlohmann::json;

namespace {

json record_to_json(const SampleRecord& r) {
  json doc;
  doc["id"] = r.id;
  doc["intrinsics"] = {{"fx", r.intrinsics.fx},
                       {"fy", r.intrinsics.fy},
                       {"cx", r.intrinsics.cx},
                       {"cy", r.intrinsics.cy}};
  json landmarks = json::array();
  for (std::size_t j = 0; j < r.detections.size(); ++j) {
    const Landmark2D& lm = r.detections[j];
    json e = {{"u", lm.u}, {"v", lm.v}, {"confidence", lm.confidence}, {"detected", lm.detected}};
    if (j < r.landmark_depth.size() && r.landmark_depth[j]) e["depth"] = *r.landmark_depth[j];
    landmarks.push_back(e);
  }
  doc["landmarks"] = landmarks;
  if (!r.depth_frame.empty()) doc["depth_frame"] = r.depth_frame.string();
  if (r.gt3d) {
    json rows = json::array();
    for (Eigen::Index j = 0; j < r.gt3d->rows(); ++j)
      rows.push_back({(*r.gt3d)(j, 0), (*r.gt3d)(j, 1), (*r.gt3d)(j, 2)});
    doc["gt3d"] = rows;
    if (!r.gt_valid.empty()) {
      std::vector<bool> v(r.gt_valid.begin(), r.gt_valid.end());
      doc["gt_valid"] = v;
    }
  }
  if (r.gt2d) {
    json rows = json::array();
    for (const auto& p : *r.gt2d) rows.push_back({p.x(), p.y()});
    doc["gt2d"] = rows;
  }
  if (r.bbox_height) doc["bbox_height"] = *r.bbox_height;
  return doc;
}

SampleRecord record_from_json(const json& doc, const SkeletonModel& model,
                              const std::filesystem::path& base_dir) {
  SampleRecord r;
  r.id = doc.value("id", "");
  const json& k = doc.at("intrinsics");
  r.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                  k.at("cy").get<double>()};
  if (!r.intrinsics.valid()) throw SchemaError("invalid intrinsics");

  const json& landmarks = doc.at("landmarks");
  if (static_cast<int>(landmarks.size()) != model.joint_count())
    throw SchemaError("record has " + std::to_string(landmarks.size()) + " landmarks, skeleton has " +
                      std::to_string(model.joint_count()));
  for (const json& e : landmarks) {
    Landmark2D lm;
    lm.detected = e.value("detected", true);
    lm.u = e.value("u", 0.0);
    lm.v = e.value("v", 0.0);
    lm.confidence = e.value("confidence", lm.detected ? 1.0 : 0.0);
    if (lm.detected && (!std::isfinite(lm.u) || !std::isfinite(lm.v)))
      throw SchemaError("non-finite detection coordinates");
    r.detections.push_back(lm);
    if (e.contains("depth"))
      r.landmark_depth.emplace_back(e.at("depth").get<double>());
    else
      r.landmark_depth.emplace_back(std::nullopt);
  }

  if (doc.contains("depth_frame")) {
    const std::filesystem::path p = doc.at("depth_frame").get<std::string>();
    r.depth_frame = p.is_absolute() ? p : base_dir / p;
  }

  if (doc.contains("gt3d")) {
    const json& rows = doc.at("gt3d");
    if (static_cast<int>(rows.size()) != model.joint_count())
      throw SchemaError("gt3d joint count mismatch");
    PoseMatrix gt(model.joint_count(), 3);
    for (int j = 0; j < model.joint_count(); ++j) {
      const json& row = rows[j];
      if (!row.is_array() || row.size() != 3) throw SchemaError("gt3d rows must hold 3 numbers");
      for (int c = 0; c < 3; ++c) gt(j, c) = row[c].get<double>();
    }
    r.gt3d = gt;
    if (doc.contains("gt_valid")) {
      const auto v = doc.at("gt_valid").get<std::vector<bool>>();
      if (static_cast<int>(v.size()) != model.joint_count())
        throw SchemaError("gt_valid size mismatch");
      r.gt_valid.assign(v.begin(), v.end());
    }
    for (int j = 0; j < model.joint_count(); ++j) {
      const bool valid = r.gt_valid.empty() || r.gt_valid[j];
      if (valid && !r.gt3d->row(j).allFinite()) throw SchemaError("non-finite gt3d row");
    }
  }

  if (doc.contains("gt2d")) {
    const json& rows = doc.at("gt2d");
    if (static_cast<int>(rows.size()) != model.joint_count())
      throw SchemaError("gt2d joint count mismatch");
    std::vector<Eigen::Vector2d> pts;
    for (const json& row : rows) {
      if (!row.is_array() || row.size() != 2) throw SchemaError("gt2d rows must hold 2 numbers");
      pts.emplace_back(row[0].get<double>(), row[1].get<double>());
    }
    r.gt2d = pts;
  }
  if (doc.contains("bbox_height")) {
    r.bbox_height = doc.at("bbox_height").get<double>();
    if (!(*r.bbox_height > 0.0)) throw SchemaError("bbox_height must be positive");
  }
  return r;
}

}  // namespace

std::vector<SampleRecord> read_dataset(const std::filesystem::path& path,
                                       const SkeletonModel& model, bool strict,
                                       std::ostream* warnings) {
  std::ifstream in(path);
  if (!in) throw SchemaError("dataset: cannot open " + path.string());
  const std::filesystem::path base_dir = path.parent_path();

  std::vector<SampleRecord> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(record_from_json(json::parse(line), model, base_dir));
    } catch (const std::exception& e) {
      const std::string msg =
          "dataset: " + path.string() + ":" + std::to_string(line_no) + ": " + e.what();
      if (strict) throw SchemaError(msg);
      if (warnings) *warnings << "warning: skipping record, " << msg << '\n';
    }
  }
  if (records.empty() && warnings) *warnings << "warning: " << path.string() << " holds no records\n";
  return records;
}

void write_dataset(const std::filesystem::path& path, std::span<const SampleRecord> records) {
  std::ofstream out(path);
  if (!out) throw SchemaError("dataset: cannot open " + path.string() + " for writing");
  for (const SampleRecord& r : records) out << record_to_json(r).dump() << '\n';
  if (!out) throw SchemaError("dataset: short write to " + path.string());
}

LiftedPose lift_record(const SkeletonModel& model, const SampleRecord& record,
                       const LimbPrior& prior, const LiftOptions& options) {
  if (!record.depth_frame.empty()) {
    const DepthFrame frame = read_depth_frame(record.depth_frame, record.intrinsics);
    return lift_pose(model, record.detections, frame, prior, options);
  }
  return lift_pose(model, record.detections, record.landmark_depth, record.intrinsics, prior,
                   options);
}

namespace {

struct RestDirection {
  const char* key;
  Eigen::Vector3d dir;  // camera frame: x right, y down, z away
};

// Canonical standing posture, toward the camera, y pointing down.
Eigen::Vector3d rest_direction(const std::string& child_name, int limb_index) {
  double side = 1.0;
  std::string stem = child_name;
  if (stem.rfind("l_", 0) == 0) stem = stem.substr(2);
  if (child_name.rfind("r_", 0) == 0) {
    stem = child_name.substr(2);
    side = -1.0;
  }
  static const RestDirection kTable[] = {
      {"neck", {0.0, -1.0, 0.0}},      {"head", {0.0, -1.0, 0.0}},
      {"shoulder", {1.0, 0.15, 0.0}},  {"elbow", {0.35, 1.0, 0.0}},
      {"hand", {0.25, 1.0, 0.15}},     {"hip", {0.45, 1.0, 0.0}},
      {"knee", {0.0, 1.0, 0.0}},       {"foot", {0.0, 1.0, 0.1}},
  };
  for (const RestDirection& e : kTable) {
    if (stem == e.key) {
      Eigen::Vector3d d = e.dir;
      d.x() *= side;
      return d.normalized();
    }
  }
  // Unknown naming scheme: fall back to a fixed direction per limb index.
  std::mt19937_64 rng(0xD12EC7ull ^ (static_cast<std::uint64_t>(limb_index) << 16));
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Vector3d d(g(rng), g(rng), g(rng));
  return d.norm() > 1e-9 ? d.normalized() : Eigen::Vector3d(0, 1, 0);
}

std::pair<double, double> default_length_range(const std::string& child_name) {
  std::string stem = child_name;
  if (stem.rfind("l_", 0) == 0 || stem.rfind("r_", 0) == 0) stem = stem.substr(2);
  if (stem == "neck") return {0.45, 0.55};
  if (stem == "head") return {0.20, 0.28};
  if (stem == "shoulder") return {0.16, 0.22};
  if (stem == "elbow") return {0.26, 0.34};
  if (stem == "hand") return {0.24, 0.32};
  if (stem == "hip") return {0.10, 0.16};
  if (stem == "knee") return {0.38, 0.46};
  if (stem == "foot") return {0.40, 0.48};
  return {0.20, 0.40};
}

// Smooth deterministic unit field; biased toward the camera (-z), which is
// where a depth sensor sees the body surface relative to the joint center.
Eigen::Vector3d surface_offset_direction(const Eigen::Vector3d& p, double smoothness) {
  const double s = smoothness;
  Eigen::Vector3d v(std::sin(s * (0.9 * p.y() + 0.4 * p.z()) + 0.9),
                    std::sin(s * (0.8 * p.x() + 0.5 * p.z()) + 2.1),
                    -1.5 + 0.7 * std::sin(s * (0.7 * p.x() + 0.6 * p.y()) + 4.2));
  return v.normalized();
}

}  // namespace

std::vector<SampleRecord> generate_synthetic(const SynthConfig& config,
                                             const SkeletonModel& model) {
  const int joints = model.joint_count();
  if (config.count < 0) throw SchemaError("synth: negative sample count");
  if (!config.intrinsics.valid()) throw SchemaError("synth: invalid intrinsics");
  if (!(config.z_min > 0.0 && config.z_max >= config.z_min) || config.z_max > kMaxDepthMeters)
    throw SchemaError("synth: placement range must satisfy 0 < z_min <= z_max <= 8");
  if (config.surface_offset_m < 0.0 || config.depth_noise_std_m < 0.0 ||
      config.pose_amplitude < 0.0)
    throw SchemaError("synth: magnitudes must be non-negative");

  std::vector<double> dropout(joints, 0.0);
  if (!config.dropout_per_landmark.empty()) {
    if (static_cast<int>(config.dropout_per_landmark.size()) != joints)
      throw SchemaError("synth: dropout_per_landmark size mismatch");
    dropout = config.dropout_per_landmark;
  } else {
    for (int j = 0; j < joints; ++j)
      if (!model.is_trunk(j)) dropout[j] = config.dropout_prob;
  }
  for (double p : dropout)
    if (!(p >= 0.0 && p <= 1.0)) throw SchemaError("synth: dropout probabilities must lie in [0,1]");
  const Limb& spine = model.limbs[model.root_limb];
  if (dropout[spine.child] >= 1.0 || dropout[spine.parent] >= 1.0)
    throw SchemaError("synth: dropout=1 on a spine endpoint violates the trunk guarantee");
  {
    int droppable = 0;
    for (int t : model.trunk)
      if (t != spine.child && t != spine.parent && dropout[t] < 1.0) ++droppable;
    if (droppable < std::min<int>(2, static_cast<int>(model.trunk.size()) - 2))
      throw SchemaError("synth: dropout config leaves fewer than two recoverable trunk landmarks");
  }

  std::vector<std::pair<double, double>> length_ranges = config.limb_length_ranges;
  if (length_ranges.empty()) {
    for (int l = 0; l < model.limb_count(); ++l)
      length_ranges.push_back(default_length_range(model.landmarks[model.limbs[l].child]));
  }
  if (static_cast<int>(length_ranges.size()) != model.limb_count())
    throw SchemaError("synth: limb_length_ranges size mismatch");

  std::vector<Eigen::Vector3d> rest(model.limb_count());
  for (int l = 0; l < model.limb_count(); ++l)
    rest[l] = rest_direction(model.landmarks[model.limbs[l].child], l);

  const std::vector<int> order = recovery_order(model);
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<SampleRecord> records;
  records.reserve(config.count);
  for (long s = 0; s < config.count; ++s) {
    // Articulated pose in a body-local frame.
    std::vector<double> lengths(model.limb_count());
    for (int l = 0; l < model.limb_count(); ++l) {
      const auto [lo, hi] = length_ranges[l];
      lengths[l] = lo + (hi - lo) * unit(rng);
    }
    const double yaw = config.yaw_amplitude * (2.0 * unit(rng) - 1.0);
    const Eigen::Matrix3d spin =
        Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
    std::vector<Eigen::Vector3d> dirs(model.limb_count());
    for (int l = 0; l < model.limb_count(); ++l) {
      Eigen::Vector3d d = spin * rest[l] +
                          config.pose_amplitude * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
      dirs[l] = d.norm() > 1e-9 ? d.normalized() : (spin * rest[l]).eval();
    }
    std::vector<Eigen::Vector3d> local(joints, Eigen::Vector3d::Zero());
    for (int l : order) {
      const Limb& limb = model.limbs[l];
      local[limb.child] = local[limb.parent] + lengths[l] * dirs[l];
    }
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : local) centroid += p;
    centroid /= joints;

    // Camera-frame placement. Solve the exact feasible interval for the
    // lateral offsets so that every joint (with slack for the surface
    // offset) projects inside the frame; redraw the depth when a close
    // placement leaves no slack.
    const double lo_tan_x = (6.0 - config.intrinsics.cx) / config.intrinsics.fx;
    const double hi_tan_x = (config.frame_width - 7.0 - config.intrinsics.cx) / config.intrinsics.fx;
    const double lo_tan_y = (6.0 - config.intrinsics.cy) / config.intrinsics.fy;
    const double hi_tan_y = (config.frame_height - 7.0 - config.intrinsics.cy) / config.intrinsics.fy;
    const double margin = 2.0 * config.surface_offset_m + 0.02;
    std::vector<Eigen::Vector3d> truth(joints);
    std::vector<Eigen::Vector3d> surface(joints);
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      const double z = config.z_min + (config.z_max - config.z_min) * unit(rng);
      double dx_lo = -1e30, dx_hi = 1e30, dy_lo = -1e30, dy_hi = 1e30;
      bool depth_ok = true;
      for (int j = 0; j < joints; ++j) {
        const Eigen::Vector3d p = local[j] - centroid;
        const double zj = p.z() + z;
        if (zj < 0.3) {
          depth_ok = false;
          break;
        }
        dx_lo = std::max(dx_lo, lo_tan_x * zj + margin - p.x());
        dx_hi = std::min(dx_hi, hi_tan_x * zj - margin - p.x());
        dy_lo = std::max(dy_lo, lo_tan_y * zj + margin - p.y());
        dy_hi = std::min(dy_hi, hi_tan_y * zj - margin - p.y());
      }
      if (!depth_ok || dx_lo > dx_hi || dy_lo > dy_hi) continue;
      const Eigen::Vector3d offset(dx_lo + (dx_hi - dx_lo) * unit(rng),
                                   dy_lo + (dy_hi - dy_lo) * unit(rng), z);
      for (int j = 0; j < joints; ++j) {
        truth[j] = local[j] - centroid + offset;
        surface[j] = truth[j] + config.surface_offset_m *
                                    surface_offset_direction(truth[j], config.offset_smoothness);
      }
      placed = true;
    }
    if (!placed)
      throw NumericalError("synth: could not place sample " + std::to_string(s) +
                           " inside the frame; frame or placement range too tight");

    SampleRecord rec;
    rec.id = [&] {
      std::ostringstream os;
      os << 's' << std::setw(6) << std::setfill('0') << s;
      return os.str();
    }();
    rec.intrinsics = config.intrinsics;

    std::vector<char> detected(joints, 1);
    for (int j = 0; j < joints; ++j) {
      if (j == spine.child || j == spine.parent) continue;  // never dropped
      if (unit(rng) < dropout[j]) detected[j] = 0;
    }
    // Enforce the trunk guarantee sample by sample.
    {
      std::vector<int> others;
      for (int t : model.trunk)
        if (t != spine.child && t != spine.parent) others.push_back(t);
      int surviving = 0;
      for (int t : others) surviving += detected[t] ? 1 : 0;
      const int required = std::min<int>(2, static_cast<int>(others.size()));
      for (std::size_t i = 0; i < others.size() && surviving < required; ++i) {
        if (!detected[others[i]]) {
          detected[others[i]] = 1;
          ++surviving;
        }
      }
    }

    PoseMatrix gt(joints, 3);
    std::vector<Eigen::Vector2d> gt2d(joints);
    double v_min = 1e30, v_max = -1e30;
    for (int j = 0; j < joints; ++j) {
      gt.row(j) = truth[j].transpose();
      gt2d[j] = project_point(truth[j], config.intrinsics);
      v_min = std::min(v_min, gt2d[j].y());
      v_max = std::max(v_max, gt2d[j].y());

      Landmark2D lm;
      const Eigen::Vector2d px = project_point(surface[j], config.intrinsics);
      const bool in_frame = px.x() >= 0.0 && px.x() <= config.frame_width - 1.0 &&
                            px.y() >= 0.0 && px.y() <= config.frame_height - 1.0;
      lm.detected = detected[j] && in_frame;
      if (lm.detected) {
        lm.u = px.x();
        lm.v = px.y();
        lm.confidence = std::clamp(config.confidence_mean + config.confidence_std * gauss(rng),
                                   0.05, 1.0);
        double depth = surface[j].z();
        if (config.depth_noise_std_m > 0.0) depth += config.depth_noise_std_m * gauss(rng);
        rec.landmark_depth.emplace_back(std::max(0.05, depth));
      } else {
        rec.landmark_depth.emplace_back(std::nullopt);
      }
      rec.detections.push_back(lm);
    }
    rec.gt3d = gt;
    rec.gt2d = gt2d;
    rec.bbox_height = std::max(1.0, v_max - v_min);
    records.push_back(std::move(rec));
  }
  return records;
}

double normalize_depth_range(double raw_m, bool strict, bool* clamped) {
  if (clamped) *clamped = false;
  if (!std::isfinite(raw_m)) throw std::out_of_range("normalize_depth_range: non-finite depth");
  if (raw_m < 0.0 || raw_m > kMaxDepthMeters) {
    if (strict) throw std::out_of_range("normalize_depth_range: depth outside [0, 8] m");
    if (clamped) *clamped = true;
    raw_m = std::clamp(raw_m, 0.0, kMaxDepthMeters);
  }
  return raw_m / kMaxDepthMeters - 0.5;
}

}  // namespace respose
