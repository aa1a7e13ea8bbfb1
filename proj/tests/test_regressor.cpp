#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "respose/errors.hpp"
#include "respose/regressor.hpp"

using namespace respose;

namespace {

LiftedPose random_lifted(int joints, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> conf(0.0, 1.0);
  LiftedPose pose;
  for (int j = 0; j < joints; ++j) {
    LiftedLandmark lm;
    lm.position = {0.6 * g(rng), 0.8 * g(rng), 2.5 + 0.7 * g(rng)};
    lm.confidence = conf(rng);
    pose.landmarks.push_back(lm);
  }
  return pose;
}

// Random-ish but valid normalization statistics, so the identity property is
// exercised with stats that differ between input and output.
void scramble_stats(ResidualRegressor& model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mean(-0.5, 0.5), stddev(0.3, 2.0);
  for (Eigen::Index i = 0; i < model.norm.in_mean.size(); ++i) {
    model.norm.in_mean(i) = mean(rng);
    model.norm.in_std(i) = stddev(rng);
    model.norm.out_mean(i) = mean(rng);
    model.norm.out_std(i) = stddev(rng);
  }
}

std::vector<TrainingSample> zero_residual_dataset(const SkeletonModel& skel, int count,
                                                  std::mt19937_64& rng) {
  std::vector<TrainingSample> data;
  for (int i = 0; i < count; ++i) {
    TrainingSample s;
    s.lifted = random_lifted(skel.joint_count(), rng);
    s.target = s.lifted.positions();
    data.push_back(std::move(s));
  }
  return data;
}

}  // namespace

TEST_CASE("identity shortcut with a zeroed output layer") {
  const SkeletonModel skel = itop15_skeleton();
  std::mt19937_64 rng(31);

  for (bool use_conf : {false, true}) {
    CAPTURE(use_conf);
    RegressorConfig cfg;
    cfg.joints = skel.joint_count();
    cfg.features = 32;
    cfg.use_confidence = use_conf;
    ResidualRegressor model(cfg, skel.checksum());
    // Random hidden weights, scrambled stats; only the output layer is zero.
    std::mt19937_64 init_rng(9);
    model.input.init_he_uniform(init_rng);
    for (auto& b : model.inner) b.fc.init_he_uniform(init_rng);
    scramble_stats(model, init_rng);
    model.output.weight.setZero();
    model.output.bias.setZero();

    std::vector<LiftedPose> batch;
    for (int i = 0; i < 9; ++i) batch.push_back(random_lifted(cfg.joints, rng));
    const std::vector<PoseMatrix> out = model.forward(batch);
    REQUIRE(out.size() == batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
      CHECK(out[s].rows() == cfg.joints);
      CHECK(out[s].cols() == 3);
      for (int j = 0; j < cfg.joints; ++j)
        CHECK((out[s].row(j).transpose() - batch[s].landmarks[j].position).norm() < 1e-12);
    }
  }
}

TEST_CASE("normalize/denormalize round trip") {
  const SkeletonModel skel = itop15_skeleton();
  RegressorConfig cfg;
  cfg.joints = skel.joint_count();
  cfg.features = 16;
  ResidualRegressor model(cfg, skel.checksum());
  std::mt19937_64 rng(17);
  scramble_stats(model, rng);

  std::vector<LiftedPose> batch{random_lifted(cfg.joints, rng), random_lifted(cfg.joints, rng)};
  const Mat raw = model.assemble_input(batch);
  const Mat back = model.denormalize(model.normalize_input(raw));
  CHECK((back - raw).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("learning rate schedule halves every period") {
  RegressorConfig cfg;
  CHECK(cfg.lr_at_epoch(0) == 1e-3);
  CHECK(cfg.lr_at_epoch(19) == 1e-3);
  CHECK(cfg.lr_at_epoch(20) == 5e-4);
  CHECK(cfg.lr_at_epoch(39) == 5e-4);
  CHECK(cfg.lr_at_epoch(40) == 2.5e-4);
  CHECK(cfg.lr_at_epoch(60) == 1.25e-4);
}

TEST_CASE("fit learns the zero residual quickly") {
  const SkeletonModel skel = itop15_skeleton();
  std::mt19937_64 rng(41);
  const std::vector<TrainingSample> data = zero_residual_dataset(skel, 512, rng);

  RegressorConfig cfg;
  cfg.joints = skel.joint_count();
  cfg.features = 64;
  cfg.blocks = 3;
  cfg.epochs = 50;
  cfg.batch_size = 64;
  cfg.seed = 7;

  TrainingReport report;
  ResidualRegressor model = fit_regressor(cfg, skel, data, {}, &report);
  REQUIRE(report.train_loss.size() == 50);
  CHECK(report.train_loss.back() < 1e-4);

  // Smoothed monotonicity: after epoch 5 each epoch is at most 5% above the
  // previous one.
  for (std::size_t e = 6; e < report.train_loss.size(); ++e)
    CHECK(report.train_loss[e] <= report.train_loss[e - 1] * 1.05 + 1e-12);

  // The recorded schedule is the exact halving sequence.
  CHECK(report.lr[0] == 1e-3);
  CHECK(report.lr[20] == 5e-4);
  CHECK(report.lr[40] == 2.5e-4);

  // Refined output stays close to the target on the training inputs.
  std::vector<LiftedPose> inputs{data[0].lifted, data[1].lifted};
  const std::vector<PoseMatrix> out = model.forward(inputs);
  CHECK((out[0] - data[0].target).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("fit rejects bad input") {
  const SkeletonModel skel = itop15_skeleton();
  RegressorConfig cfg;
  cfg.joints = skel.joint_count();
  CHECK_THROWS_AS(fit_regressor(cfg, skel, {}, {}, nullptr), SchemaError);

  std::mt19937_64 rng(3);
  std::vector<TrainingSample> data = zero_residual_dataset(skel, 4, rng);
  data[2].target(4, 1) = std::nan("");
  cfg.epochs = 1;
  cfg.batch_size = 4;
  CHECK_THROWS_AS(fit_regressor(cfg, skel, data, {}, nullptr), NumericalError);
}

TEST_CASE("same seed, same data: bit-identical parameters") {
  const SkeletonModel skel = itop15_skeleton();
  std::mt19937_64 rng(43);
  const std::vector<TrainingSample> data = zero_residual_dataset(skel, 64, rng);

  RegressorConfig cfg;
  cfg.joints = skel.joint_count();
  cfg.features = 24;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.seed = 99;

  ResidualRegressor a = fit_regressor(cfg, skel, data, {}, nullptr);
  ResidualRegressor b = fit_regressor(cfg, skel, data, {}, nullptr);
  for (auto [ta, tb] : [&] {
         std::vector<std::pair<ParamRef, ParamRef>> zipped;
         auto pa = a.tensors(), pb = b.tensors();
         for (std::size_t i = 0; i < pa.size(); ++i) zipped.emplace_back(pa[i], pb[i]);
         return zipped;
       }()) {
    REQUIRE(ta.value->size() == tb.value->size());
    for (Eigen::Index i = 0; i < ta.value->size(); ++i)
      CHECK(ta.value->data()[i] == tb.value->data()[i]);
  }
}

TEST_CASE("model file round trip") {
  const SkeletonModel skel = itop15_skeleton();
  std::mt19937_64 rng(47);
  const std::vector<TrainingSample> data = zero_residual_dataset(skel, 64, rng);

  RegressorConfig cfg;
  cfg.joints = skel.joint_count();
  cfg.features = 24;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  ResidualRegressor model = fit_regressor(cfg, skel, data, {}, nullptr);

  const auto dir = std::filesystem::temp_directory_path() / "respose_model_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.rpm";
  save_model(path, model);

  ResidualRegressor loaded = load_model(path);
  check_model_matches(loaded, skel);

  std::vector<LiftedPose> batch{data[5].lifted, data[9].lifted, data[11].lifted};
  const auto before = model.forward(batch);
  const auto after = loaded.forward(batch);
  for (std::size_t s = 0; s < batch.size(); ++s)
    for (int j = 0; j < cfg.joints; ++j)
      for (int c = 0; c < 3; ++c) CHECK(before[s](j, c) == after[s](j, c));

  SUBCASE("corrupted parameter byte fails the checksum") {
    const auto bad = dir / "model_corrupt.rpm";
    std::filesystem::copy_file(path, bad, std::filesystem::copy_options::overwrite_existing);
    std::fstream fs(bad, std::ios::in | std::ios::out | std::ios::binary);
    fs.seekp(-9, std::ios::end);
    char byte = 0;
    fs.read(&byte, 1);
    fs.seekp(-9, std::ios::end);
    byte = static_cast<char>(byte ^ 0x40);
    fs.write(&byte, 1);
    fs.close();
    CHECK_THROWS_AS(load_model(bad), FileIntegrityError);
  }
  SUBCASE("truncated file") {
    const auto trunc = dir / "model_trunc.rpm";
    std::filesystem::copy_file(path, trunc, std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(trunc, std::filesystem::file_size(trunc) - 64);
    CHECK_THROWS_AS(load_model(trunc), FileIntegrityError);
  }
  SUBCASE("skeleton with a different joint count is refused") {
    SkeletonModel small;  // 2-landmark degenerate skeleton
    small.landmarks = {"a", "b"};
    small.limbs = {{0, 1}};
    small.limb_parents = {-1};
    small.root_limb = 0;
    small.trunk = {0, 1};
    CHECK_THROWS_AS(check_model_matches(loaded, small), SchemaError);
  }
  SUBCASE("same skeleton layout under a different name is refused") {
    SkeletonModel renamed = skel;
    renamed.landmarks[3] = "other";
    CHECK_THROWS_AS(check_model_matches(loaded, renamed), FileIntegrityError);
  }
}

TEST_CASE("confidence variant consumes J x 4 and emits J x 3") {
  const SkeletonModel skel = itop15_skeleton();
  RegressorConfig cfg;
  cfg.joints = skel.joint_count();
  cfg.features = 16;
  cfg.use_confidence = true;
  ResidualRegressor model(cfg, skel.checksum());
  CHECK(cfg.input_width() == 60);
  CHECK(cfg.output_width() == 45);

  std::mt19937_64 rng(53);
  std::vector<LiftedPose> batch{random_lifted(cfg.joints, rng)};
  const Mat raw = model.assemble_input(batch);
  CHECK(raw.cols() == 60);
  const auto out = model.forward(batch);
  CHECK(out[0].rows() == 15);
  CHECK(out[0].cols() == 3);
}
