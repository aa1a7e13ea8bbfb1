#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "respose/lifting.hpp"
#include "respose/nn.hpp"
#include "respose/prior.hpp"
#include "respose/skeleton.hpp"

namespace respose {

struct RegressorConfig {
  int joints = 15;
  int features = 1024;  // inner width F
  int blocks = 3;       // inner block count R
  double dropout_rate = 0.5;
  bool use_confidence = false;  // J x 4 input variant
  int epochs = 200;
  int batch_size = 128;
  double lr0 = 1e-3;
  int lr_halving_period = 20;  // epochs
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  double smooth_l1_beta = 1.0;
  std::uint64_t seed = 1;

  int channels() const { return use_confidence ? 4 : 3; }
  int input_width() const { return joints * channels(); }
  int output_width() const { return joints * 3; }
  // lr0 halved every lr_halving_period epochs; exact in floating point.
  double lr_at_epoch(int epoch) const { return std::ldexp(lr0, -(epoch / lr_halving_period)); }

  void validate() const;
};

// Per-coordinate standardization statistics (3J values each). The
// confidence channel, when present, is never standardized.
struct NormalizationStats {
  Eigen::RowVectorXd in_mean, in_std;    // lifted poses
  Eigen::RowVectorXd out_mean, out_std;  // ground-truth poses
};

// Residual pose network: an input projection to F features, R inner blocks
// (linear + batchnorm + ReLU + dropout, identity skip around each), an
// output projection back to J*3, and a global identity shortcut of the
// (normalized) input xyz channels so the network only models the residual.
class ResidualRegressor {
 public:
  ResidualRegressor() = default;
  ResidualRegressor(const RegressorConfig& config, std::uint64_t skeleton_checksum);

  struct Block {
    LinearLayer fc;
    BatchNormLayer bn;
    ReluLayer relu;
    DropoutLayer drop;
  };

  // Flattened network input in meters: per joint x, y, z and, for the J x 4
  // variant, the detection confidence.
  Mat assemble_input(std::span<const LiftedPose> batch) const;
  Mat normalize_input(const Mat& raw) const;
  // Adds the identity shortcut; the result lives in input-normalized units.
  Mat forward_normalized(const Mat& net_input, bool training, std::mt19937_64* rng,
                         bool update_running = true);
  Mat backward_normalized(const Mat& d_output);
  Mat denormalize(const Mat& normalized_xyz) const;  // exact inverse of the input standardization

  // Inference path: lifted poses in, refined J x 3 poses (meters) out.
  std::vector<PoseMatrix> forward(std::span<const LiftedPose> batch);

  std::vector<ParamRef> trainable_params();
  std::vector<ParamRef> tensors();  // trainable + batchnorm running statistics
  long param_count() const;

  RegressorConfig config;
  std::uint64_t skeleton_checksum = 0;
  NormalizationStats norm;

  LinearLayer input;
  BatchNormLayer input_bn;
  ReluLayer input_relu;
  DropoutLayer input_drop;
  std::vector<Block> inner;
  LinearLayer output;
};

struct TrainingSample {
  LiftedPose lifted;
  PoseMatrix target;  // J x 3 meters
};

struct TrainingReport {
  std::vector<double> lr;          // per epoch
  std::vector<double> train_loss;  // per epoch, mean over samples
  std::vector<double> val_loss;    // empty when no validation split given
  long param_count = 0;
  double seconds = 0.0;
};

// Trains with the smooth-L1 loss in normalized space, Adam, and the halving
// learning-rate schedule. Deterministic given config.seed.
ResidualRegressor fit_regressor(const RegressorConfig& config, const SkeletonModel& model,
                                std::span<const TrainingSample> train,
                                std::span<const TrainingSample> val = {},
                                TrainingReport* report = nullptr);

// Loss of the current network on a batch, in normalized space (no parameter
// updates). Used for validation tracking and tests.
double evaluate_loss(ResidualRegressor& model, std::span<const TrainingSample> batch);

// Container format: magic, JSON header (version, config, skeleton checksum,
// normalization stats, tensor index, content checksum), then raw
// little-endian float64 blocks in index order.
void save_model(const std::filesystem::path& path, const ResidualRegressor& model);
ResidualRegressor load_model(const std::filesystem::path& path);
void check_model_matches(const ResidualRegressor& model, const SkeletonModel& skeleton);

// Finite-difference verification of the full regressor backward pass on a
// seeded synthetic batch. Requires dropout_rate == 0. `linear_only` checks a
// bare input->output stack without batchnorm/ReLU/dropout/blocks.
GradCheckReport regressor_grad_check(const RegressorConfig& config, bool linear_only,
                                     const GradCheckOptions& options = {});

}  // namespace respose
