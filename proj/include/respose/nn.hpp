#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace respose {

// All network math runs on row-major 64-bit tensors: rows are batch samples,
// columns are features. Parameters are 2-D as well (biases are 1 x N).
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Named view of one parameter tensor and its gradient, used by the
// optimizer, the gradient checker and model serialization.
struct ParamRef {
  std::string name;
  Mat* value = nullptr;
  Mat* grad = nullptr;
};

class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(int in_features, int out_features);

  void init_he_uniform(std::mt19937_64& rng);
  Mat forward(const Mat& x);       // x * W^T + b, caches x
  Mat backward(const Mat& dy);     // fills grad_weight/grad_bias, returns dx

  int in_features() const { return static_cast<int>(weight.cols()); }
  int out_features() const { return static_cast<int>(weight.rows()); }

  Mat weight;  // out x in
  Mat bias;    // 1 x out
  Mat grad_weight;
  Mat grad_bias;

 private:
  Mat x_cache_;
};

class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  explicit BatchNormLayer(int features, double momentum = 0.1, double eps = 1e-5);

  // Training mode normalizes with biased batch statistics and (unless
  // update_running is off, e.g. during gradient checking) folds them into
  // the running statistics. Inference mode uses the running statistics only.
  Mat forward(const Mat& x, bool training, bool update_running = true);
  Mat backward(const Mat& dy);

  int features() const { return static_cast<int>(gamma.cols()); }

  Mat gamma;  // 1 x F
  Mat beta;   // 1 x F
  Mat grad_gamma;
  Mat grad_beta;
  Mat running_mean;  // 1 x F
  Mat running_var;   // 1 x F, biased
  double momentum = 0.1;
  double eps = 1e-5;

 private:
  Mat xhat_;
  Eigen::RowVectorXd inv_std_;
  bool training_cache_ = false;
};

class ReluLayer {
 public:
  Mat forward(const Mat& x);
  Mat backward(const Mat& dy) const;  // gradient at exactly 0 is 0

 private:
  Mat mask_;
};

// Inverted dropout: survivors are scaled by 1/(1-rate) so inference is the
// identity.
class DropoutLayer {
 public:
  DropoutLayer() = default;
  explicit DropoutLayer(double rate);

  Mat forward(const Mat& x, bool training, std::mt19937_64& rng);
  Mat backward(const Mat& dy) const;

  double rate = 0.0;

 private:
  Mat mask_;
  bool identity_ = true;
};

// Mean over every element of the Huber-style penalty with knee beta:
// 0.5 e^2 / beta for |e| < beta, |e| - 0.5 beta otherwise.
double smooth_l1(const Mat& pred, const Mat& target, double beta = 1.0);
Mat smooth_l1_grad(const Mat& pred, const Mat& target, double beta = 1.0);

// Plain 0.5 * mean(e^2); smooth everywhere, which is what the finite
// difference harness wants.
double half_mse(const Mat& pred, const Mat& target);
Mat half_mse_grad(const Mat& pred, const Mat& target);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

  // Applies one bias-corrected update. The parameter list must be the same
  // (same order, same shapes) on every call. Throws on non-finite gradients.
  void step(const std::vector<ParamRef>& params, double lr);

  long step_count() const { return step_; }

 private:
  struct Moments {
    Mat m;
    Mat v;
  };
  AdamConfig config_;
  std::vector<Moments> moments_;
  long step_ = 0;
};

struct GradCheckOptions {
  double h = 1e-5;
  // Entries checked per tensor; 0 checks every entry. Large networks are
  // spot-checked with a deterministic sample so the harness stays fast.
  int max_entries_per_tensor = 0;
  std::uint64_t seed = 0x5eed;
  // Relative error denominator floor; keeps near-zero gradient pairs from
  // reading as spurious mismatches.
  double denom_floor = 1e-3;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  long entries_checked = 0;
};

// Central-difference check of reverse-mode gradients. `loss` recomputes the
// scalar loss from the current parameter values; `backprop` runs
// forward+backward once and fills every ParamRef::grad.
GradCheckReport grad_check(const std::vector<ParamRef>& params,
                           const std::function<double()>& loss,
                           const std::function<void()>& backprop,
                           const GradCheckOptions& options = {});

}  // namespace respose
