#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "respose/data.hpp"
#include "respose/errors.hpp"
#include "respose/metrics.hpp"

using namespace respose;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "respose_data_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("normalize_depth_range") {
  CHECK(normalize_depth_range(0.0) == -0.5);
  CHECK(normalize_depth_range(8.0) == 0.5);
  CHECK(normalize_depth_range(4.0) == 0.0);
  SUBCASE("affine and monotone") {
    // Two points pin an affine map; a third confirms it.
    const double a = (normalize_depth_range(8.0) - normalize_depth_range(0.0)) / 8.0;
    const double b = normalize_depth_range(0.0);
    CHECK(normalize_depth_range(2.75) == doctest::Approx(a * 2.75 + b).epsilon(1e-15));
    CHECK(a > 0.0);
  }
  SUBCASE("clamping and strict mode") {
    bool clamped = false;
    CHECK(normalize_depth_range(9.0, false, &clamped) == 0.5);
    CHECK(clamped);
    CHECK(normalize_depth_range(-1.0, false, &clamped) == -0.5);
    CHECK(clamped);
    CHECK_THROWS_AS(normalize_depth_range(9.0, true), std::out_of_range);
  }
}

TEST_CASE("dataset file round trip") {
  const SkeletonModel model = itop15_skeleton();
  SynthConfig cfg;
  cfg.count = 25;
  cfg.seed = 5;
  cfg.dropout_prob = 0.3;
  cfg.depth_noise_std_m = 0.004;
  const std::vector<SampleRecord> records = generate_synthetic(cfg, model);

  const auto path = temp_dir() / "roundtrip.jsonl";
  write_dataset(path, records);
  const std::vector<SampleRecord> loaded = read_dataset(path, model);
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].id == records[i].id);
    for (int j = 0; j < model.joint_count(); ++j) {
      CHECK(loaded[i].detections[j].detected == records[i].detections[j].detected);
      CHECK(loaded[i].detections[j].u == records[i].detections[j].u);
      CHECK(loaded[i].landmark_depth[j].has_value() == records[i].landmark_depth[j].has_value());
      if (loaded[i].landmark_depth[j])
        CHECK(*loaded[i].landmark_depth[j] == *records[i].landmark_depth[j]);
    }
    CHECK(((*loaded[i].gt3d) - (*records[i].gt3d)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(*loaded[i].bbox_height == *records[i].bbox_height);
  }
}

TEST_CASE("read_dataset validation") {
  const SkeletonModel model = itop15_skeleton();
  const auto dir = temp_dir();

  SUBCASE("landmark arity mismatch names the line") {
    const auto path = dir / "short.jsonl";
    std::ofstream out(path);
    out << R"({"id":"x","intrinsics":{"fx":365,"fy":365,"cx":256,"cy":212},"landmarks":[{"u":1,"v":1,"detected":true}]})"
        << '\n';
    out.close();
    try {
      read_dataset(path, model);
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find(":1:") != std::string::npos);
    }
  }
  SUBCASE("lenient mode skips malformed records with a warning") {
    const auto path = dir / "mixed.jsonl";
    SynthConfig cfg;
    cfg.count = 2;
    const auto records = generate_synthetic(cfg, model);
    write_dataset(path, records);
    std::ofstream app(path, std::ios::app);
    app << "{ not json }\n";
    app.close();
    std::ostringstream warnings;
    const auto loaded = read_dataset(path, model, /*strict=*/false, &warnings);
    CHECK(loaded.size() == 2);
    CHECK(warnings.str().find(":3:") != std::string::npos);
  }
  SUBCASE("empty file gives an empty list and a warning") {
    const auto path = dir / "empty.jsonl";
    std::ofstream(path).close();
    std::ostringstream warnings;
    CHECK(read_dataset(path, model, true, &warnings).empty());
    CHECK(!warnings.str().empty());
  }
  SUBCASE("missing file throws") {
    CHECK_THROWS_AS(read_dataset(dir / "nope.jsonl", model), SchemaError);
  }
}

TEST_CASE("synthetic generator basics") {
  const SkeletonModel model = itop15_skeleton();

  SUBCASE("deterministic in the seed") {
    SynthConfig cfg;
    cfg.count = 40;
    cfg.seed = 77;
    cfg.dropout_prob = 0.25;
    cfg.depth_noise_std_m = 0.01;
    const auto a = generate_synthetic(cfg, model);
    const auto b = generate_synthetic(cfg, model);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(((*a[i].gt3d) - (*b[i].gt3d)).cwiseAbs().maxCoeff() == 0.0);
      for (int j = 0; j < model.joint_count(); ++j) {
        CHECK(a[i].detections[j].u == b[i].detections[j].u);
        CHECK(a[i].detections[j].detected == b[i].detections[j].detected);
      }
    }
    SynthConfig other = cfg;
    other.seed = 78;
    const auto c = generate_synthetic(other, model);
    CHECK(((*a[0].gt3d) - (*c[0].gt3d)).cwiseAbs().maxCoeff() > 0.0);
  }

  SUBCASE("trunk guarantee holds in every sample") {
    const Limb& spine = model.limbs[model.root_limb];
    auto check_guarantee = [&](const SynthConfig& cfg) {
      for (const auto& r : generate_synthetic(cfg, model)) {
        CHECK(r.detections[spine.child].detected);
        CHECK(r.detections[spine.parent].detected);
        int extra = 0;
        for (int t : model.trunk)
          if (t != spine.child && t != spine.parent && r.detections[t].detected) ++extra;
        CHECK(extra >= 2);
      }
    };
    SynthConfig cfg;
    cfg.count = 300;
    cfg.seed = 9;
    cfg.dropout_prob = 0.9;
    check_guarantee(cfg);
    // Per-landmark dropout hitting the trunk itself: survivors are forced.
    SynthConfig per = cfg;
    per.dropout_prob = 0.0;
    per.dropout_per_landmark.assign(model.joint_count(), 0.95);
    per.dropout_per_landmark[spine.child] = 0.0;
    per.dropout_per_landmark[spine.parent] = 0.0;
    check_guarantee(per);
  }

  SUBCASE("dropout=1 on a spine endpoint is a config error") {
    SynthConfig cfg;
    cfg.count = 1;
    cfg.dropout_per_landmark.assign(model.joint_count(), 0.0);
    cfg.dropout_per_landmark[model.landmark_index("torso")] = 1.0;
    CHECK_THROWS_AS(generate_synthetic(cfg, model), SchemaError);
  }

  SUBCASE("depths stay within the sensor range") {
    SynthConfig cfg;
    cfg.count = 50;
    cfg.seed = 10;
    cfg.z_max = 6.0;
    const auto records = generate_synthetic(cfg, model);
    for (const auto& r : records)
      for (const auto& d : r.landmark_depth)
        if (d) CHECK(depth_valid(*d));
  }
}

TEST_CASE("clean synthetic samples lift back to the ground truth") {
  const SkeletonModel model = itop15_skeleton();
  SynthConfig cfg;
  cfg.count = 60;
  cfg.seed = 3;
  cfg.surface_offset_m = 0.0;
  cfg.depth_noise_std_m = 0.0;
  cfg.dropout_prob = 0.0;
  const auto records = generate_synthetic(cfg, model);

  std::vector<PoseMatrix> gt;
  for (const auto& r : records) gt.push_back(*r.gt3d);
  const LimbPrior prior = fit_limb_prior(model, gt);

  std::vector<EvalPair> pairs;
  for (const auto& r : records) {
    const LiftedPose lifted = lift_record(model, r, prior);
    for (int j = 0; j < model.joint_count(); ++j) {
      CHECK(lifted.landmarks[j].provenance == Provenance::kDetected);
      CHECK((lifted.landmarks[j].position - r.gt3d->row(j).transpose()).norm() < 1e-9);
    }
    pairs.push_back({lifted.positions(), *r.gt3d, {}});
  }
  CHECK(mpjpe(pairs).mean_cm < 1e-7);
}

TEST_CASE("constant offset magnitude shows up as lifting error") {
  const SkeletonModel model = itop15_skeleton();
  SynthConfig cfg;
  cfg.count = 200;
  cfg.seed = 4;
  cfg.surface_offset_m = 0.03;
  cfg.depth_noise_std_m = 0.0;
  cfg.dropout_prob = 0.0;
  const auto records = generate_synthetic(cfg, model);

  std::vector<PoseMatrix> gt;
  for (const auto& r : records) gt.push_back(*r.gt3d);
  const LimbPrior prior = fit_limb_prior(model, gt);

  std::vector<EvalPair> pairs;
  for (const auto& r : records) pairs.push_back({lift_record(model, r, prior).positions(), *r.gt3d, {}});
  const double err_cm = mpjpe(pairs).mean_cm;
  CHECK(err_cm > 2.7);
  CHECK(err_cm < 3.3);  // |offset| = 3 cm within 10%
}

TEST_CASE("records referencing depth frames lift through fill_depth") {
  const SkeletonModel model = itop15_skeleton();
  SynthConfig cfg;
  cfg.count = 3;
  cfg.seed = 12;
  cfg.surface_offset_m = 0.0;
  std::vector<SampleRecord> records = generate_synthetic(cfg, model);

  const auto dir = temp_dir() / "frames";
  std::filesystem::create_directories(dir);

  // Render each record's inline depths into a frame file and strip the
  // inline values, so lifting has to go through the frame reader.
  std::vector<PoseMatrix> gt;
  for (auto& r : records) gt.push_back(*r.gt3d);
  const LimbPrior prior = fit_limb_prior(model, gt);

  for (std::size_t i = 0; i < records.size(); ++i) {
    SampleRecord& r = records[i];
    DepthFrame frame;
    frame.width = cfg.frame_width;
    frame.height = cfg.frame_height;
    frame.intrinsics = r.intrinsics;
    frame.depth.assign(static_cast<std::size_t>(frame.width) * frame.height, 0.0f);
    for (int j = 0; j < model.joint_count(); ++j) {
      if (!r.landmark_depth[j]) continue;
      const int x = static_cast<int>(std::lround(r.detections[j].u));
      const int y = static_cast<int>(std::lround(r.detections[j].v));
      if (frame.in_bounds(x, y))
        frame.depth[static_cast<std::size_t>(y) * frame.width + x] =
            static_cast<float>(*r.landmark_depth[j]);
    }
    const auto frame_path = dir / ("f" + std::to_string(i) + ".depth");
    write_depth_frame(frame_path, frame);
    r.depth_frame = frame_path;
    r.landmark_depth.assign(model.joint_count(), std::nullopt);
  }

  const auto dataset_path = temp_dir() / "framed.jsonl";
  write_dataset(dataset_path, records);
  const auto loaded = read_dataset(dataset_path, model);
  for (const auto& r : loaded) {
    const LiftedPose lifted = lift_record(model, r, prior);
    for (int j = 0; j < model.joint_count(); ++j)
      CHECK((lifted.landmarks[j].position - r.gt3d->row(j).transpose()).norm() < 2e-2);
  }
}
