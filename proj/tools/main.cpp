// respose: depth-based 3D human pose estimation by lifting 2D detections
// and regressing the residual pose. Subcommands cover the full pipeline:
// synth -> fit-prior -> train -> predict/evaluate, plus gradcheck.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "respose/checksum.hpp"
#include "respose/data.hpp"
#include "respose/errors.hpp"
#include "respose/metrics.hpp"
#include "respose/regressor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace respose;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr int kExitInputError = 2;
constexpr int kExitNumericalError = 3;

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// Binds CLI options to an optional JSON config file: a key in the file sets
// any option the command line left untouched; flags always win.
class ConfigBinder {
 public:
  explicit ConfigBinder(CLI::App* cmd) : cmd_(cmd) {
    cmd->add_option("--config", config_path_, "JSON config file; flags override its keys");
  }

  template <typename T>
  CLI::Option* bind(const std::string& flag, T& var, const std::string& desc) {
    CLI::Option* opt = cmd_->add_option(flag, var, desc);
    appliers_.push_back([this, opt, key = key_of(flag), &var] {
      if (opt->count() == 0 && file_.contains(key)) var = file_.at(key).get<T>();
    });
    return opt;
  }

  CLI::Option* bind_flag(const std::string& flag, bool& var, const std::string& desc) {
    CLI::Option* opt = cmd_->add_flag(flag, var, desc);
    appliers_.push_back([this, opt, key = key_of(flag), &var] {
      if (opt->count() == 0 && file_.contains(key)) var = file_.at(key).get<bool>();
    });
    return opt;
  }

  // Call right after parsing, before using any bound value.
  void apply() {
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw SchemaError("config: cannot open " + config_path_);
      try {
        in >> file_;
      } catch (const json::exception& e) {
        throw SchemaError("config: invalid JSON in " + config_path_ + ": " + e.what());
      }
    }
    for (auto& apply_one : appliers_) apply_one();
  }

  std::string config_path() const { return config_path_; }

 private:
  static std::string key_of(const std::string& flag) {
    std::string key = flag.substr(flag.find_first_not_of('-'));
    for (char& c : key)
      if (c == '-') c = '_';
    return key;
  }

  CLI::App* cmd_;
  std::string config_path_;
  json file_ = json::object();
  std::vector<std::function<void()>> appliers_;
};

SkeletonModel resolve_skeleton(const std::string& path, json* manifest) {
  if (path.empty()) {
    (*manifest)["skeleton"] = "builtin:itop15";
    return itop15_skeleton();
  }
  (*manifest)["skeleton"] = path;
  return load_skeleton(path);
}

void write_manifest(const fs::path& out, json manifest) {
  manifest["tool_version"] = kToolVersion;
  const fs::path path = out.string() + ".manifest.json";
  std::ofstream f(path);
  if (!f) throw SchemaError("manifest: cannot open " + path.string() + " for writing");
  f << manifest.dump(2) << '\n';
}

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kDetected: return "detected";
    case Provenance::kDepthFilled: return "depth_filled";
    case Provenance::kPriorRecovered: return "prior_recovered";
  }
  return "unknown";
}

struct LiftedDataset {
  std::vector<LiftedPose> lifted;          // only the processable samples
  std::vector<std::size_t> record_index;   // position in the input record list
  std::vector<std::string> failures;       // "<id>: <reason>"
};

LiftedDataset lift_all(const SkeletonModel& model, const std::vector<SampleRecord>& records,
                       const LimbPrior& prior, const LiftOptions& options) {
  LiftedDataset out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      out.lifted.push_back(lift_record(model, records[i], prior, options));
      out.record_index.push_back(i);
    } catch (const UnprocessableSample& e) {
      out.failures.push_back(records[i].id + ": " + e.what());
    }
  }
  return out;
}

// --- evaluation report ------------------------------------------------

struct MetricsBundle {
  ApReport ap;
  MpjpeReport err;
};

MetricsBundle compute_metrics(const std::vector<EvalPair>& pairs, double threshold) {
  return {ap_at_threshold(pairs, threshold), mpjpe(pairs)};
}

std::string strip_side(const std::string& name) {
  if (name.rfind("l_", 0) == 0 || name.rfind("r_", 0) == 0) return name.substr(2);
  return name;
}

std::string group_display_name(const std::string& stem, std::size_t members) {
  std::string name = stem;
  if (!name.empty()) name[0] = static_cast<char>(std::toupper(name[0]));
  if (members > 1) {
    if (stem == "foot") return "Feet";
    name += 's';
  }
  return name;
}

json metrics_to_json(const SkeletonModel& model, const MetricsBundle& m) {
  json per_joint = json::array();
  for (int j = 0; j < model.joint_count(); ++j) {
    per_joint.push_back({{"name", model.landmarks[j]},
                         {"ap", m.ap.per_joint[j]},
                         {"mpjpe_cm", m.err.per_joint_cm[j]},
                         {"pairs", m.ap.valid_counts[j]}});
  }

  // Table rows comparable to side-merged reports: left/right pairs averaged.
  std::vector<std::pair<std::string, std::vector<int>>> groups;
  for (int j = 0; j < model.joint_count(); ++j) {
    const std::string stem = strip_side(model.landmarks[j]);
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == stem; });
    if (it == groups.end())
      groups.push_back({stem, {j}});
    else
      it->second.push_back(j);
  }
  json rows = json::array();
  for (const auto& [stem, joints] : groups) {
    double ap = 0.0, err = 0.0;
    json names = json::array();
    for (int j : joints) {
      ap += m.ap.per_joint[j];
      err += m.err.per_joint_cm[j];
      names.push_back(model.landmarks[j]);
    }
    rows.push_back({{"part", group_display_name(stem, joints.size())},
                    {"joints", names},
                    {"ap", ap / joints.size()},
                    {"mpjpe_cm", err / joints.size()}});
  }

  return json{{"per_joint", per_joint},
              {"rows", rows},
              {"map", m.ap.mean},
              {"mmpjpe_cm", m.err.mean_cm}};
}

void print_metrics_table(std::ostream& os, const json& refined, const json& baseline) {
  os << std::left << std::setw(12) << "Part" << std::right << std::setw(12) << "AP@thr"
     << std::setw(14) << "MPJPE(cm)" << std::setw(14) << "AP(lifted)" << std::setw(16)
     << "MPJPE(lifted)" << '\n';
  const auto& rows = refined.at("rows");
  const auto& base_rows = baseline.at("rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    os << std::left << std::setw(12) << rows[i].at("part").get<std::string>() << std::right
       << std::fixed << std::setprecision(2) << std::setw(12)
       << 100.0 * rows[i].at("ap").get<double>() << std::setw(14)
       << rows[i].at("mpjpe_cm").get<double>() << std::setw(14)
       << 100.0 * base_rows[i].at("ap").get<double>() << std::setw(16)
       << base_rows[i].at("mpjpe_cm").get<double>() << '\n';
  }
  os << std::left << std::setw(12) << "Mean" << std::right << std::setw(12)
     << 100.0 * refined.at("map").get<double>() << std::setw(14)
     << refined.at("mmpjpe_cm").get<double>() << std::setw(14)
     << 100.0 * baseline.at("map").get<double>() << std::setw(16)
     << baseline.at("mmpjpe_cm").get<double>() << '\n';
  os.unsetf(std::ios::fixed);
}

// --- subcommand state -------------------------------------------------

struct SynthCmd {
  std::string skeleton, out;
  SynthConfig cfg;
};

struct FitPriorCmd {
  std::string skeleton, data, out;
  double epsilon = 1e-6;
  bool lenient = false;
};

struct TrainCmd {
  std::string skeleton, prior, data, val, out, report;
  RegressorConfig cfg;
  LiftOptions lift;
  double max_unprocessable = 0.05;
  bool lenient = false;
};

struct PredictCmd {
  std::string skeleton, prior, model, data, out;
  LiftOptions lift;
  int batch = 256;
  bool lenient = false;
};

struct EvaluateCmd {
  std::string skeleton, prior, model, data, out, pck_out;
  LiftOptions lift;
  double threshold = 0.10;
  std::vector<double> pck_fractions;
  bool centroid_recovery = false;  // ablation: substitute the trunk centroid
  bool lenient = false;
};

struct GradcheckCmd {
  int joints = 15, features = 1024, blocks = 3;
  bool use_confidence = false;
  std::uint64_t seed = 1;
  double h = 1e-5;
  int max_entries = 32;
  bool exhaustive = false;
  bool corrupt = false;  // test hook: deliberately break one gradient
};

int run_synth(const SynthCmd& c, const std::string& config_path) {
  json manifest{{"command", "synth"}, {"config_file", config_path}};
  const SkeletonModel model = resolve_skeleton(c.skeleton, &manifest);
  Timer timer;
  const std::vector<SampleRecord> records = generate_synthetic(c.cfg, model);
  write_dataset(c.out, records);
  const double secs = timer.seconds();

  manifest["seed"] = c.cfg.seed;
  manifest["effective_config"] = {{"count", c.cfg.count},
                                  {"seed", c.cfg.seed},
                                  {"surface_offset_m", c.cfg.surface_offset_m},
                                  {"offset_smoothness", c.cfg.offset_smoothness},
                                  {"depth_noise_std_m", c.cfg.depth_noise_std_m},
                                  {"dropout_prob", c.cfg.dropout_prob},
                                  {"pose_amplitude", c.cfg.pose_amplitude},
                                  {"yaw_amplitude", c.cfg.yaw_amplitude},
                                  {"z_min", c.cfg.z_min},
                                  {"z_max", c.cfg.z_max},
                                  {"frame_width", c.cfg.frame_width},
                                  {"frame_height", c.cfg.frame_height},
                                  {"intrinsics",
                                   {{"fx", c.cfg.intrinsics.fx},
                                    {"fy", c.cfg.intrinsics.fy},
                                    {"cx", c.cfg.intrinsics.cx},
                                    {"cy", c.cfg.intrinsics.cy}}}};
  manifest["outputs"] = {c.out};
  manifest["wall_seconds"] = secs;
  manifest["counters"] = {{"samples", records.size()},
                          {"samples_per_second", records.size() / std::max(secs, 1e-9)}};
  write_manifest(c.out, manifest);
  std::cout << "wrote " << records.size() << " samples to " << c.out << " ("
            << std::fixed << std::setprecision(1) << records.size() / std::max(secs, 1e-9)
            << " samples/s)" << std::endl;
  return 0;
}

int run_fit_prior(const FitPriorCmd& c, const std::string& config_path) {
  json manifest{{"command", "fit-prior"}, {"config_file", config_path}};
  const SkeletonModel model = resolve_skeleton(c.skeleton, &manifest);
  const std::vector<SampleRecord> records = read_dataset(c.data, model, !c.lenient, &std::cerr);

  std::vector<PoseMatrix> poses;
  for (const SampleRecord& r : records) {
    if (!r.gt3d) throw SchemaError("fit-prior: record " + r.id + " has no ground-truth pose");
    poses.push_back(*r.gt3d);
  }
  Timer timer;
  const LimbPrior prior = fit_limb_prior(model, poses, c.epsilon);
  save_prior(c.out, prior);

  manifest["effective_config"] = {{"epsilon", c.epsilon}};
  manifest["inputs"] = {c.data};
  manifest["outputs"] = {c.out};
  manifest["wall_seconds"] = timer.seconds();
  manifest["counters"] = {{"training_poses", poses.size()}};
  write_manifest(c.out, manifest);
  std::cout << "fitted limb prior on " << poses.size() << " poses -> " << c.out << std::endl;
  return 0;
}

json lift_options_json(const LiftOptions& o) {
  return {{"fill_radius_px", o.fill_radius_px},
          {"recovered_confidence", o.recovered_confidence},
          {"recovery_mode",
           o.recovery_mode == RecoveryMode::kPrior ? "prior" : "trunk_centroid"}};
}

std::vector<TrainingSample> to_training_samples(const std::vector<SampleRecord>& records,
                                                const LiftedDataset& lifted) {
  std::vector<TrainingSample> samples;
  for (std::size_t i = 0; i < lifted.lifted.size(); ++i) {
    const SampleRecord& r = records[lifted.record_index[i]];
    if (!r.gt3d) throw SchemaError("train: record " + r.id + " has no ground-truth pose");
    samples.push_back({lifted.lifted[i], *r.gt3d});
  }
  return samples;
}

void check_unprocessable(const LiftedDataset& lifted, std::size_t total, double max_fraction) {
  for (const std::string& f : lifted.failures) std::cerr << "unprocessable: " << f << '\n';
  if (total == 0) throw SchemaError("dataset holds no records");
  const double fraction = static_cast<double>(lifted.failures.size()) / total;
  if (fraction > max_fraction) {
    std::ostringstream os;
    os << "aborting: " << lifted.failures.size() << "/" << total
       << " samples unprocessable (limit " << max_fraction << ")";
    throw SchemaError(os.str());
  }
}

int run_train(const TrainCmd& c, const std::string& config_path) {
  json manifest{{"command", "train"}, {"config_file", config_path}};
  const SkeletonModel model = resolve_skeleton(c.skeleton, &manifest);
  RegressorConfig cfg = c.cfg;
  cfg.joints = model.joint_count();

  const LimbPrior prior = load_prior(c.prior, model);
  const std::vector<SampleRecord> records = read_dataset(c.data, model, !c.lenient, &std::cerr);

  Timer lift_timer;
  const LiftedDataset lifted = lift_all(model, records, prior, c.lift);
  const double lift_secs = lift_timer.seconds();
  check_unprocessable(lifted, records.size(), c.max_unprocessable);
  const std::vector<TrainingSample> train_set = to_training_samples(records, lifted);

  std::vector<TrainingSample> val_set;
  if (!c.val.empty()) {
    const std::vector<SampleRecord> val_records =
        read_dataset(c.val, model, !c.lenient, &std::cerr);
    const LiftedDataset val_lifted = lift_all(model, val_records, prior, c.lift);
    check_unprocessable(val_lifted, val_records.size(), c.max_unprocessable);
    val_set = to_training_samples(val_records, val_lifted);
  }

  TrainingReport report;
  ResidualRegressor trained = fit_regressor(cfg, model, train_set, val_set, &report);
  save_model(c.out, trained);

  json epochs = json::array();
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    json row{{"epoch", e}, {"lr", report.lr[e]}, {"train_loss", report.train_loss[e]}};
    if (e < report.val_loss.size()) row["val_loss"] = report.val_loss[e];
    epochs.push_back(row);
  }
  const std::string report_path = c.report.empty() ? c.out + ".report.json" : c.report;
  {
    std::ofstream f(report_path);
    if (!f) throw SchemaError("train: cannot open " + report_path + " for writing");
    f << json{{"epochs", epochs},
              {"param_count", report.param_count},
              {"train_samples", train_set.size()},
              {"val_samples", val_set.size()},
              {"train_seconds", report.seconds}}
             .dump(2)
      << '\n';
  }

  manifest["seed"] = cfg.seed;
  manifest["effective_config"] = {{"joints", cfg.joints},
                                  {"features", cfg.features},
                                  {"blocks", cfg.blocks},
                                  {"dropout_rate", cfg.dropout_rate},
                                  {"use_confidence", cfg.use_confidence},
                                  {"epochs", cfg.epochs},
                                  {"batch_size", cfg.batch_size},
                                  {"lr0", cfg.lr0},
                                  {"lr_halving_period", cfg.lr_halving_period},
                                  {"lift", lift_options_json(c.lift)},
                                  {"max_unprocessable", c.max_unprocessable}};
  manifest["inputs"] = c.val.empty() ? json::array({c.data, c.prior})
                                     : json::array({c.data, c.val, c.prior});
  manifest["outputs"] = {c.out, report_path};
  manifest["wall_seconds"] = lift_secs + report.seconds;
  manifest["counters"] = {{"train_samples", train_set.size()},
                          {"unprocessable", lifted.failures.size()},
                          {"lift_poses_per_second",
                           (lifted.lifted.size()) / std::max(lift_secs, 1e-9)},
                          {"param_count", report.param_count},
                          {"final_train_loss",
                           report.train_loss.empty() ? 0.0 : report.train_loss.back()}};
  write_manifest(c.out, manifest);

  std::cout << "trained " << report.param_count << " parameters on " << train_set.size()
            << " samples (" << report.seconds << " s); final loss "
            << (report.train_loss.empty() ? 0.0 : report.train_loss.back()) << '\n'
            << "model -> " << c.out << "\nreport -> " << report_path << std::endl;
  return 0;
}

int run_predict(const PredictCmd& c, const std::string& config_path) {
  json manifest{{"command", "predict"}, {"config_file", config_path}};
  const SkeletonModel model = resolve_skeleton(c.skeleton, &manifest);
  const LimbPrior prior = load_prior(c.prior, model);
  ResidualRegressor reg = load_model(c.model);
  check_model_matches(reg, model);

  const std::vector<SampleRecord> records = read_dataset(c.data, model, !c.lenient, &std::cerr);
  if (records.empty()) throw SchemaError("predict: dataset holds no records");

  std::ofstream out(c.out);
  if (!out) throw SchemaError("predict: cannot open " + c.out + " for writing");

  Timer timer;
  double forward_secs = 0.0;
  std::size_t done = 0, failures = 0;
  std::vector<LiftedPose> batch;
  std::vector<std::size_t> batch_rows;
  std::vector<json> lines(records.size());

  auto flush = [&] {
    if (batch.empty()) return;
    Timer fwd;
    const std::vector<PoseMatrix> poses = reg.forward(batch);
    forward_secs += fwd.seconds();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t i = batch_rows[b];
      json rows = json::array(), prov = json::array();
      for (int j = 0; j < model.joint_count(); ++j) {
        rows.push_back({poses[b](j, 0), poses[b](j, 1), poses[b](j, 2)});
        prov.push_back(provenance_name(batch[b].landmarks[j].provenance));
      }
      lines[i] = {{"id", records[i].id}, {"pose3d", rows}, {"provenance", prov}};
      ++done;
    }
    batch.clear();
    batch_rows.clear();
  };

  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      batch.push_back(lift_record(model, records[i], prior, c.lift));
      batch_rows.push_back(i);
      if (static_cast<int>(batch.size()) >= c.batch) flush();
    } catch (const UnprocessableSample& e) {
      lines[i] = {{"id", records[i].id}, {"unprocessable", true}, {"reason", e.what()}};
      ++failures;
    }
  }
  flush();
  for (const json& line : lines) out << line.dump() << '\n';

  manifest["effective_config"] = {{"batch", c.batch}, {"lift", lift_options_json(c.lift)}};
  manifest["inputs"] = {c.data, c.prior, c.model};
  manifest["outputs"] = {c.out};
  manifest["wall_seconds"] = timer.seconds();
  manifest["counters"] = {{"predicted", done},
                          {"unprocessable", failures},
                          {"forward_poses_per_second", done / std::max(forward_secs, 1e-9)}};
  write_manifest(c.out, manifest);
  std::cout << "predicted " << done << " of " << records.size() << " samples ("
            << std::fixed << std::setprecision(0) << done / std::max(forward_secs, 1e-9)
            << " poses/s forward) -> " << c.out << std::endl;
  return 0;
}

int run_evaluate(const EvaluateCmd& c, const std::string& config_path) {
  json manifest{{"command", "evaluate"}, {"config_file", config_path}};
  const SkeletonModel model = resolve_skeleton(c.skeleton, &manifest);
  const LimbPrior prior = load_prior(c.prior, model);
  ResidualRegressor reg = load_model(c.model);
  check_model_matches(reg, model);

  LiftOptions lift = c.lift;
  if (c.centroid_recovery) lift.recovery_mode = RecoveryMode::kTrunkCentroid;

  const std::vector<SampleRecord> records = read_dataset(c.data, model, !c.lenient, &std::cerr);
  if (records.empty()) throw SchemaError("evaluate: dataset holds no records");

  Timer timer;
  const LiftedDataset lifted = lift_all(model, records, prior, lift);
  for (const std::string& f : lifted.failures) std::cerr << "unprocessable: " << f << '\n';
  if (lifted.lifted.empty()) throw SchemaError("evaluate: no processable samples");

  Timer fwd_timer;
  const std::vector<PoseMatrix> refined = reg.forward(lifted.lifted);
  const double fwd_secs = fwd_timer.seconds();

  std::vector<EvalPair> refined_pairs, baseline_pairs;
  for (std::size_t i = 0; i < lifted.lifted.size(); ++i) {
    const SampleRecord& r = records[lifted.record_index[i]];
    if (!r.gt3d) throw SchemaError("evaluate: record " + r.id + " has no ground-truth pose");
    refined_pairs.push_back({refined[i], *r.gt3d, r.gt_valid});
    baseline_pairs.push_back({lifted.lifted[i].positions(), *r.gt3d, r.gt_valid});
  }

  const MetricsBundle refined_m = compute_metrics(refined_pairs, c.threshold);
  const MetricsBundle baseline_m = compute_metrics(baseline_pairs, c.threshold);
  const json refined_json = metrics_to_json(model, refined_m);
  const json baseline_json = metrics_to_json(model, baseline_m);

  json report{{"threshold_m", c.threshold},
              {"samples", records.size()},
              {"evaluated", lifted.lifted.size()},
              {"unprocessable", lifted.failures.size()},
              {"refined", refined_json},
              {"baseline_lifted", baseline_json}};

  // PCK over the 2D detections, when the records carry 2D ground truth.
  std::vector<Pck2DPair> pck_pairs;
  for (const SampleRecord& r : records) {
    if (!r.gt2d || !r.bbox_height) continue;
    Pck2DPair p;
    p.bbox_height = *r.bbox_height;
    p.ground_truth = *r.gt2d;
    for (int j = 0; j < model.joint_count(); ++j) {
      if (r.detections[j].detected)
        p.detections.emplace_back(Eigen::Vector2d(r.detections[j].u, r.detections[j].v));
      else
        p.detections.emplace_back(std::nullopt);
    }
    pck_pairs.push_back(std::move(p));
  }
  if (!pck_pairs.empty()) {
    std::vector<double> fractions = c.pck_fractions;
    if (fractions.empty())
      for (int i = 1; i <= 10; ++i) fractions.push_back(0.02 * i);
    const PckReport pck = pck_curve(pck_pairs, fractions);
    json points = json::array();
    for (const PckPoint& pt : pck.points)
      points.push_back({{"fraction", pt.radius_fraction},
                        {"precision", pt.precision},
                        {"precision_defined", pt.precision_defined},
                        {"recall", pt.recall},
                        {"f_score", pt.f_score}});
    report["pck"] = {{"points", points}, {"max_f_score", pck.max_f_score}};
    if (!c.pck_out.empty()) {
      std::ofstream f(c.pck_out);
      if (!f) throw SchemaError("evaluate: cannot open " + c.pck_out + " for writing");
      f << "fraction,precision,recall\n";
      for (const PckPoint& pt : pck.points)
        f << pt.radius_fraction << ',' << pt.precision << ',' << pt.recall << '\n';
    }
  }

  {
    std::ofstream f(c.out);
    if (!f) throw SchemaError("evaluate: cannot open " + c.out + " for writing");
    f << report.dump(2) << '\n';
  }

  manifest["effective_config"] = {{"threshold_m", c.threshold},
                                  {"lift", lift_options_json(lift)},
                                  {"centroid_recovery", c.centroid_recovery}};
  manifest["inputs"] = {c.data, c.prior, c.model};
  manifest["outputs"] = {c.out};
  manifest["wall_seconds"] = timer.seconds();
  manifest["counters"] = {{"evaluated", lifted.lifted.size()},
                          {"unprocessable", lifted.failures.size()},
                          {"forward_poses_per_second",
                           lifted.lifted.size() / std::max(fwd_secs, 1e-9)}};
  write_manifest(c.out, manifest);

  print_metrics_table(std::cout, refined_json, baseline_json);
  std::cout << "report -> " << c.out << std::endl;
  return 0;
}

int run_gradcheck(const GradcheckCmd& c) {
  RegressorConfig cfg;
  cfg.joints = c.joints;
  cfg.features = c.features;
  cfg.blocks = c.blocks;
  cfg.use_confidence = c.use_confidence;
  cfg.dropout_rate = 0.0;
  cfg.seed = c.seed;

  GradCheckOptions opts;
  opts.h = c.h;
  opts.max_entries_per_tensor = c.exhaustive ? 0 : c.max_entries;
  opts.seed = c.seed;

  Timer timer;
  GradCheckReport full = regressor_grad_check(cfg, /*linear_only=*/false, opts);
  const GradCheckReport linear = regressor_grad_check(cfg, /*linear_only=*/true, opts);
  if (c.corrupt) full.max_rel_error += 1.0;  // test hook

  const bool ok = full.max_rel_error < 1e-4 && linear.max_rel_error < 1e-7;
  std::cout << "full network : max rel error " << std::scientific << std::setprecision(3)
            << full.max_rel_error << " over " << full.entries_checked << " entries (worst: "
            << full.worst_tensor << ")\n"
            << "linear only  : max rel error " << linear.max_rel_error << " over "
            << linear.entries_checked << " entries\n"
            << "elapsed      : " << std::fixed << std::setprecision(2) << timer.seconds()
            << " s\n"
            << (ok ? "PASS" : "FAIL") << " (thresholds: full < 1e-4, linear < 1e-7)"
            << std::endl;
  return ok ? 0 : kExitNumericalError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depth-based 3D human pose estimation: lifting + residual regression"};
  app.require_subcommand(1);

  SynthCmd synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  ConfigBinder synth_bind(synth_cmd);
  synth_bind.bind("--skeleton", synth.skeleton, "skeleton JSON (default: builtin itop15)");
  synth_bind.bind("--out", synth.out, "output dataset (JSON lines)")->required();
  synth_bind.bind("--count", synth.cfg.count, "number of samples");
  synth_bind.bind("--seed", synth.cfg.seed, "RNG seed");
  synth_bind.bind("--offset", synth.cfg.surface_offset_m, "surface offset magnitude, meters");
  synth_bind.bind("--offset-smoothness", synth.cfg.offset_smoothness,
                  "offset field spatial frequency, 1/m");
  synth_bind.bind("--noise", synth.cfg.depth_noise_std_m, "depth noise std, meters");
  synth_bind.bind("--dropout", synth.cfg.dropout_prob, "non-trunk detection dropout probability");
  synth_bind.bind("--pose-amplitude", synth.cfg.pose_amplitude, "limb direction perturbation");
  synth_bind.bind("--yaw-amplitude", synth.cfg.yaw_amplitude, "body yaw range, radians");
  synth_bind.bind("--z-min", synth.cfg.z_min, "nearest placement depth, meters");
  synth_bind.bind("--z-max", synth.cfg.z_max, "farthest placement depth, meters");
  synth_bind.bind("--fx", synth.cfg.intrinsics.fx, "focal length x, px");
  synth_bind.bind("--fy", synth.cfg.intrinsics.fy, "focal length y, px");
  synth_bind.bind("--cx", synth.cfg.intrinsics.cx, "principal point x, px");
  synth_bind.bind("--cy", synth.cfg.intrinsics.cy, "principal point y, px");
  synth_bind.bind("--frame-width", synth.cfg.frame_width, "frame width, px");
  synth_bind.bind("--frame-height", synth.cfg.frame_height, "frame height, px");

  FitPriorCmd fitp;
  CLI::App* fitp_cmd = app.add_subcommand("fit-prior", "fit the pairwise limb Gaussian prior");
  ConfigBinder fitp_bind(fitp_cmd);
  fitp_bind.bind("--skeleton", fitp.skeleton, "skeleton JSON (default: builtin itop15)");
  fitp_bind.bind("--data", fitp.data, "training dataset with ground-truth poses")->required();
  fitp_bind.bind("--out", fitp.out, "output prior file")->required();
  fitp_bind.bind("--epsilon", fitp.epsilon, "covariance regularization floor, m^2");
  fitp_bind.bind_flag("--lenient", fitp.lenient, "skip malformed records instead of failing");

  TrainCmd train;
  CLI::App* train_cmd = app.add_subcommand("train", "lift a dataset and train the regressor");
  ConfigBinder train_bind(train_cmd);
  train_bind.bind("--skeleton", train.skeleton, "skeleton JSON (default: builtin itop15)");
  train_bind.bind("--prior", train.prior, "limb prior file")->required();
  train_bind.bind("--data", train.data, "training dataset")->required();
  train_bind.bind("--val", train.val, "optional validation dataset");
  train_bind.bind("--out", train.out, "output model file")->required();
  train_bind.bind("--report", train.report, "training report path (default <out>.report.json)");
  train_bind.bind("--features", train.cfg.features, "inner feature width F");
  train_bind.bind("--blocks", train.cfg.blocks, "inner block count R");
  train_bind.bind("--dropout-rate", train.cfg.dropout_rate, "dropout rate");
  train_bind.bind_flag("--use-confidence", train.cfg.use_confidence,
                       "feed detection confidence as a fourth channel");
  train_bind.bind("--epochs", train.cfg.epochs, "training epochs");
  train_bind.bind("--batch", train.cfg.batch_size, "minibatch size");
  train_bind.bind("--lr0", train.cfg.lr0, "initial learning rate");
  train_bind.bind("--lr-halving-period", train.cfg.lr_halving_period,
                  "epochs between learning-rate halvings");
  train_bind.bind("--seed", train.cfg.seed, "RNG seed");
  train_bind.bind("--fill-radius", train.lift.fill_radius_px, "depth fill window half-width, px");
  train_bind.bind("--recovered-confidence", train.lift.recovered_confidence,
                  "confidence assigned to prior-recovered landmarks");
  train_bind.bind("--max-unprocessable", train.max_unprocessable,
                  "abort when more than this fraction of samples cannot be lifted");
  train_bind.bind_flag("--lenient", train.lenient, "skip malformed records instead of failing");

  PredictCmd predict;
  CLI::App* predict_cmd = app.add_subcommand("predict", "lift and refine poses");
  ConfigBinder predict_bind(predict_cmd);
  predict_bind.bind("--skeleton", predict.skeleton, "skeleton JSON (default: builtin itop15)");
  predict_bind.bind("--prior", predict.prior, "limb prior file")->required();
  predict_bind.bind("--model", predict.model, "trained model file")->required();
  predict_bind.bind("--data", predict.data, "input dataset")->required();
  predict_bind.bind("--out", predict.out, "output predictions (JSON lines)")->required();
  predict_bind.bind("--batch", predict.batch, "forward batch size");
  predict_bind.bind("--fill-radius", predict.lift.fill_radius_px,
                    "depth fill window half-width, px");
  predict_bind.bind("--recovered-confidence", predict.lift.recovered_confidence,
                    "confidence assigned to prior-recovered landmarks");
  predict_bind.bind_flag("--lenient", predict.lenient,
                         "skip malformed records instead of failing");

  EvaluateCmd eval;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "run the metric suite on a dataset");
  ConfigBinder eval_bind(eval_cmd);
  eval_bind.bind("--skeleton", eval.skeleton, "skeleton JSON (default: builtin itop15)");
  eval_bind.bind("--prior", eval.prior, "limb prior file")->required();
  eval_bind.bind("--model", eval.model, "trained model file")->required();
  eval_bind.bind("--data", eval.data, "test dataset with ground truth")->required();
  eval_bind.bind("--out", eval.out, "metric report path (JSON)")->required();
  eval_bind.bind("--threshold", eval.threshold, "AP distance threshold, meters");
  eval_bind.bind("--pck-out", eval.pck_out, "optional PCK curve CSV path");
  eval_bind.bind("--pck-fractions", eval.pck_fractions, "radius fractions of the bbox height");
  eval_bind.bind("--fill-radius", eval.lift.fill_radius_px, "depth fill window half-width, px");
  eval_bind.bind("--recovered-confidence", eval.lift.recovered_confidence,
                 "confidence assigned to prior-recovered landmarks");
  eval_bind.bind_flag("--centroid-recovery", eval.centroid_recovery,
                      "ablation: substitute dropped landmarks with the trunk centroid");
  eval_bind.bind_flag("--lenient", eval.lenient, "skip malformed records instead of failing");

  GradcheckCmd grad;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck",
                                          "finite-difference check of the network gradients");
  ConfigBinder grad_bind(grad_cmd);
  grad_bind.bind("--joints", grad.joints, "landmark count J");
  grad_bind.bind("--features", grad.features, "inner feature width F");
  grad_bind.bind("--blocks", grad.blocks, "inner block count R");
  grad_bind.bind_flag("--use-confidence", grad.use_confidence, "check the J x 4 variant");
  grad_bind.bind("--seed", grad.seed, "RNG seed");
  grad_bind.bind("--step", grad.h, "finite difference step");
  grad_bind.bind("--max-entries", grad.max_entries,
                 "entries sampled per tensor (0 checks everything)");
  grad_bind.bind_flag("--exhaustive", grad.exhaustive, "check every entry of every tensor");
  grad_bind.bind_flag("--corrupt-gradient", grad.corrupt,
                      "test hook: corrupt one gradient to force a failure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInputError;
  }

  try {
    if (synth_cmd->parsed()) {
      synth_bind.apply();
      return run_synth(synth, synth_bind.config_path());
    }
    if (fitp_cmd->parsed()) {
      fitp_bind.apply();
      return run_fit_prior(fitp, fitp_bind.config_path());
    }
    if (train_cmd->parsed()) {
      train_bind.apply();
      return run_train(train, train_bind.config_path());
    }
    if (predict_cmd->parsed()) {
      predict_bind.apply();
      return run_predict(predict, predict_bind.config_path());
    }
    if (eval_cmd->parsed()) {
      eval_bind.apply();
      return run_evaluate(eval, eval_bind.config_path());
    }
    if (grad_cmd->parsed()) {
      grad_bind.apply();
      return run_gradcheck(grad);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitInputError;
}
