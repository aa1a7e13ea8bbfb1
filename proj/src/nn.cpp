#include "respose/nn.hpp"

#include <cmath>

#include "respose/errors.hpp"

namespace respose {

LinearLayer::LinearLayer(int in_features, int out_features)
    : weight(Mat::Zero(out_features, in_features)),
      bias(Mat::Zero(1, out_features)),
      grad_weight(Mat::Zero(out_features, in_features)),
      grad_bias(Mat::Zero(1, out_features)) {}

void LinearLayer::init_he_uniform(std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / in_features());
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = dist(rng);
  bias.setZero();
}

Mat LinearLayer::forward(const Mat& x) {
  if (x.cols() != weight.cols()) throw SchemaError("linear: input width does not match in_features");
  x_cache_ = x;
  Mat y = x * weight.transpose();
  y.rowwise() += bias.row(0);
  return y;
}

Mat LinearLayer::backward(const Mat& dy) {
  grad_weight = dy.transpose() * x_cache_;
  grad_bias = dy.colwise().sum();
  return dy * weight;
}

BatchNormLayer::BatchNormLayer(int features, double momentum, double eps)
    : gamma(Mat::Ones(1, features)),
      beta(Mat::Zero(1, features)),
      grad_gamma(Mat::Zero(1, features)),
      grad_beta(Mat::Zero(1, features)),
      running_mean(Mat::Zero(1, features)),
      running_var(Mat::Ones(1, features)),
      momentum(momentum),
      eps(eps) {}

Mat BatchNormLayer::forward(const Mat& x, bool training, bool update_running) {
  if (x.cols() != gamma.cols()) throw SchemaError("batchnorm: feature width mismatch");
  training_cache_ = training;
  if (training) {
    if (x.rows() < 2) throw SchemaError("batchnorm: training mode needs a batch of at least 2");
    const double n = static_cast<double>(x.rows());
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::RowVectorXd var =
        (x.rowwise() - mean).array().square().colwise().sum() / n;  // biased
    inv_std_ = (var.array() + eps).sqrt().inverse();
    xhat_ = (x.rowwise() - mean).array().rowwise() * inv_std_.array();
    if (update_running) {
      running_mean = (1.0 - momentum) * running_mean + momentum * mean.matrix();
      running_var = (1.0 - momentum) * running_var + momentum * var.matrix();
    }
  } else {
    const Eigen::RowVectorXd inv_std =
        (running_var.row(0).transpose().array() + eps).sqrt().inverse().transpose();
    inv_std_ = inv_std;
    xhat_ = (x.rowwise() - running_mean.row(0)).array().rowwise() * inv_std_.array();
  }
  Mat y = xhat_.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  return y;
}

Mat BatchNormLayer::backward(const Mat& dy) {
  grad_gamma = (dy.array() * xhat_.array()).colwise().sum();
  grad_beta = dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * gamma.row(0).array();
  if (!training_cache_) {
    // Running statistics are constants in inference mode.
    return dxhat.array().rowwise() * inv_std_.array();
  }
  const double n = static_cast<double>(dy.rows());
  const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
  const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * xhat_.array()).colwise().sum();
  Mat dx = n * dxhat;
  dx.array().rowwise() -= sum_dxhat.array();
  dx.array() -= xhat_.array().rowwise() * sum_dxhat_xhat.array();
  dx.array().rowwise() *= (inv_std_.array() / n);
  return dx;
}

Mat ReluLayer::forward(const Mat& x) {
  mask_ = (x.array() > 0.0).cast<double>();
  return x.cwiseProduct(mask_);
}

Mat ReluLayer::backward(const Mat& dy) const { return dy.cwiseProduct(mask_); }

DropoutLayer::DropoutLayer(double rate) : rate(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw SchemaError("dropout: rate must lie in [0, 1)");
}

Mat DropoutLayer::forward(const Mat& x, bool training, std::mt19937_64& rng) {
  if (!training || rate == 0.0) {
    identity_ = true;
    return x;
  }
  identity_ = false;
  const double keep = 1.0 - rate;
  std::bernoulli_distribution survive(keep);
  mask_.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask_.size(); ++i)
    mask_.data()[i] = survive(rng) ? 1.0 / keep : 0.0;
  return x.cwiseProduct(mask_);
}

Mat DropoutLayer::backward(const Mat& dy) const {
  if (identity_) return dy;
  return dy.cwiseProduct(mask_);
}

namespace {
void check_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw SchemaError(std::string(what) + ": shape mismatch");
}
}  // namespace

double smooth_l1(const Mat& pred, const Mat& target, double beta) {
  check_same_shape(pred, target, "smooth_l1");
  const Eigen::ArrayXXd e = (pred - target).array().abs();
  const Eigen::ArrayXXd per =
      (e < beta).select(0.5 * e.square() / beta, e - 0.5 * beta);
  return per.mean();
}

Mat smooth_l1_grad(const Mat& pred, const Mat& target, double beta) {
  check_same_shape(pred, target, "smooth_l1");
  const Eigen::ArrayXXd e = (pred - target).array();
  const double scale = 1.0 / static_cast<double>(pred.size());
  const Eigen::ArrayXXd g = (e.abs() < beta).select(e / beta, e.sign());
  return (g * scale).matrix();
}

double half_mse(const Mat& pred, const Mat& target) {
  check_same_shape(pred, target, "half_mse");
  return 0.5 * (pred - target).array().square().mean();
}

Mat half_mse_grad(const Mat& pred, const Mat& target) {
  check_same_shape(pred, target, "half_mse");
  return (pred - target) / static_cast<double>(pred.size());
}

void AdamOptimizer::step(const std::vector<ParamRef>& params, double lr) {
  if (!(lr > 0.0)) throw NumericalError("adam: learning rate must be positive");
  if (moments_.empty()) {
    moments_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      moments_[i].m = Mat::Zero(params[i].value->rows(), params[i].value->cols());
      moments_[i].v = Mat::Zero(params[i].value->rows(), params[i].value->cols());
    }
  }
  if (moments_.size() != params.size())
    throw SchemaError("adam: parameter list changed between steps");

  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Mat& g = *params[i].grad;
    if (!g.allFinite())
      throw NumericalError("adam: non-finite gradient in " + params[i].name);
    Moments& mom = moments_[i];
    mom.m = config_.beta1 * mom.m + (1.0 - config_.beta1) * g;
    mom.v = config_.beta2 * mom.v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    const Eigen::ArrayXXd m_hat = mom.m.array() / bc1;
    const Eigen::ArrayXXd v_hat = mom.v.array() / bc2;
    params[i].value->array() -= lr * m_hat / (v_hat.sqrt() + config_.eps);
  }
}

GradCheckReport grad_check(const std::vector<ParamRef>& params,
                           const std::function<double()>& loss,
                           const std::function<void()>& backprop,
                           const GradCheckOptions& options) {
  backprop();
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (const ParamRef& p : params) analytic.push_back(*p.grad);

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Mat& value = *params[t].value;
    const Eigen::Index size = value.size();
    std::vector<Eigen::Index> entries;
    if (options.max_entries_per_tensor <= 0 || size <= options.max_entries_per_tensor) {
      entries.resize(size);
      for (Eigen::Index i = 0; i < size; ++i) entries[i] = i;
    } else {
      std::uniform_int_distribution<Eigen::Index> pick(0, size - 1);
      std::vector<char> taken(size, 0);
      while (static_cast<int>(entries.size()) < options.max_entries_per_tensor) {
        const Eigen::Index i = pick(rng);
        if (!taken[i]) {
          taken[i] = 1;
          entries.push_back(i);
        }
      }
    }
    for (Eigen::Index i : entries) {
      const double saved = value.data()[i];
      value.data()[i] = saved + options.h;
      const double plus = loss();
      value.data()[i] = saved - options.h;
      const double minus = loss();
      value.data()[i] = saved;
      const double fd = (plus - minus) / (2.0 * options.h);
      const double an = analytic[t].data()[i];
      const double rel =
          std::abs(fd - an) / std::max(std::abs(fd) + std::abs(an), options.denom_floor);
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = params[t].name;
      }
    }
  }
  return report;
}

}  // namespace respose
