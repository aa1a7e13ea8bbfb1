#include "respose/regressor.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "respose/checksum.hpp"
#include "respose/errors.hpp"

namespace respose {

using nlohmann::json;

void RegressorConfig::validate() const {
  if (joints < 2) throw SchemaError("regressor: joints must be >= 2");
  if (features <= 0) throw SchemaError("regressor: features must be positive");
  if (blocks < 1) throw SchemaError("regressor: need at least one inner block");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw SchemaError("regressor: dropout rate must lie in [0, 1)");
  if (batch_size < 2) throw SchemaError("regressor: batch size must be >= 2 (batchnorm)");
  if (!(lr0 > 0.0)) throw SchemaError("regressor: initial learning rate must be positive");
  if (lr_halving_period < 1) throw SchemaError("regressor: lr halving period must be >= 1");
}

ResidualRegressor::ResidualRegressor(const RegressorConfig& cfg, std::uint64_t skel_checksum)
    : config(cfg), skeleton_checksum(skel_checksum) {
  config.validate();
  input = LinearLayer(config.input_width(), config.features);
  input_bn = BatchNormLayer(config.features, config.bn_momentum, config.bn_eps);
  input_drop = DropoutLayer(config.dropout_rate);
  inner.resize(config.blocks);
  for (Block& b : inner) {
    b.fc = LinearLayer(config.features, config.features);
    b.bn = BatchNormLayer(config.features, config.bn_momentum, config.bn_eps);
    b.drop = DropoutLayer(config.dropout_rate);
  }
  output = LinearLayer(config.features, config.output_width());

  norm.in_mean = Eigen::RowVectorXd::Zero(config.output_width());
  norm.in_std = Eigen::RowVectorXd::Ones(config.output_width());
  norm.out_mean = Eigen::RowVectorXd::Zero(config.output_width());
  norm.out_std = Eigen::RowVectorXd::Ones(config.output_width());
}

Mat ResidualRegressor::assemble_input(std::span<const LiftedPose> batch) const {
  const int c = config.channels();
  Mat raw(static_cast<Eigen::Index>(batch.size()), config.input_width());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const LiftedPose& pose = batch[s];
    if (pose.joint_count() != config.joints)
      throw SchemaError("regressor: lifted pose joint count does not match model");
    for (int j = 0; j < config.joints; ++j) {
      const LiftedLandmark& lm = pose.landmarks[j];
      if (!lm.position.allFinite())
        throw NumericalError("regressor: non-finite lifted landmark in input");
      raw(s, c * j + 0) = lm.position.x();
      raw(s, c * j + 1) = lm.position.y();
      raw(s, c * j + 2) = lm.position.z();
      if (c == 4) raw(s, c * j + 3) = lm.confidence;
    }
  }
  return raw;
}

namespace {
// Input column holding flattened-xyz coordinate m (0 <= m < 3J).
inline Eigen::Index xyz_column(int channels, Eigen::Index m) {
  return channels == 3 ? m : 4 * (m / 3) + m % 3;
}
}  // namespace

Mat ResidualRegressor::normalize_input(const Mat& raw) const {
  if (raw.cols() != config.input_width())
    throw SchemaError("regressor: input width does not match model");
  Mat out = raw;
  const int c = config.channels();
  for (Eigen::Index m = 0; m < norm.in_mean.size(); ++m) {
    const Eigen::Index col = xyz_column(c, m);
    out.col(col) = (raw.col(col).array() - norm.in_mean(m)) / norm.in_std(m);
  }
  return out;
}

Mat ResidualRegressor::denormalize(const Mat& normalized_xyz) const {
  Mat out = normalized_xyz;
  for (Eigen::Index m = 0; m < norm.in_mean.size(); ++m)
    out.col(m) = normalized_xyz.col(m).array() * norm.in_std(m) + norm.in_mean(m);
  return out;
}

Mat ResidualRegressor::forward_normalized(const Mat& net_input, bool training,
                                          std::mt19937_64* rng, bool update_running) {
  if (training && config.dropout_rate > 0.0 && rng == nullptr)
    throw SchemaError("regressor: training forward with dropout needs an RNG");
  std::mt19937_64 unused(0);
  std::mt19937_64& gen = rng ? *rng : unused;

  Mat h = input.forward(net_input);
  h = input_bn.forward(h, training, update_running);
  h = input_relu.forward(h);
  h = input_drop.forward(h, training, gen);
  for (Block& b : inner) {
    Mat z = b.fc.forward(h);
    z = b.bn.forward(z, training, update_running);
    z = b.relu.forward(z);
    z = b.drop.forward(z, training, gen);
    h += z;  // identity skip around the block
  }
  Mat y = output.forward(h);

  // Global shortcut: add the (normalized) xyz channels of the input. For
  // the J x 4 variant this is what drops the confidence channel.
  const int c = config.channels();
  if (c == 3) {
    y += net_input;
  } else {
    for (Eigen::Index m = 0; m < y.cols(); ++m) y.col(m) += net_input.col(xyz_column(c, m));
  }
  return y;
}

Mat ResidualRegressor::backward_normalized(const Mat& d_output) {
  Mat dh = output.backward(d_output);
  for (auto it = inner.rbegin(); it != inner.rend(); ++it) {
    Block& b = *it;
    Mat dz = b.drop.backward(dh);
    dz = b.relu.backward(dz);
    dz = b.bn.backward(dz);
    dh += b.fc.backward(dz);  // skip path
  }
  Mat dx = input_drop.backward(dh);
  dx = input_relu.backward(dx);
  dx = input_bn.backward(dx);
  dx = input.backward(dx);

  const int c = config.channels();
  if (c == 3) {
    dx += d_output;
  } else {
    for (Eigen::Index m = 0; m < d_output.cols(); ++m)
      dx.col(xyz_column(c, m)) += d_output.col(m);
  }
  return dx;
}

std::vector<PoseMatrix> ResidualRegressor::forward(std::span<const LiftedPose> batch) {
  const Mat raw = assemble_input(batch);
  const Mat yn = forward_normalized(normalize_input(raw), /*training=*/false, nullptr);
  const Mat y = denormalize(yn);
  std::vector<PoseMatrix> poses(batch.size(), PoseMatrix(config.joints, 3));
  for (std::size_t s = 0; s < batch.size(); ++s)
    for (int j = 0; j < config.joints; ++j)
      for (int k = 0; k < 3; ++k) poses[s](j, k) = y(static_cast<Eigen::Index>(s), 3 * j + k);
  return poses;
}

std::vector<ParamRef> ResidualRegressor::trainable_params() {
  std::vector<ParamRef> p;
  p.push_back({"input.weight", &input.weight, &input.grad_weight});
  p.push_back({"input.bias", &input.bias, &input.grad_bias});
  p.push_back({"input_bn.gamma", &input_bn.gamma, &input_bn.grad_gamma});
  p.push_back({"input_bn.beta", &input_bn.beta, &input_bn.grad_beta});
  for (std::size_t i = 0; i < inner.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    p.push_back({prefix + ".fc.weight", &inner[i].fc.weight, &inner[i].fc.grad_weight});
    p.push_back({prefix + ".fc.bias", &inner[i].fc.bias, &inner[i].fc.grad_bias});
    p.push_back({prefix + ".bn.gamma", &inner[i].bn.gamma, &inner[i].bn.grad_gamma});
    p.push_back({prefix + ".bn.beta", &inner[i].bn.beta, &inner[i].bn.grad_beta});
  }
  p.push_back({"output.weight", &output.weight, &output.grad_weight});
  p.push_back({"output.bias", &output.bias, &output.grad_bias});
  return p;
}

std::vector<ParamRef> ResidualRegressor::tensors() {
  std::vector<ParamRef> p = trainable_params();
  p.push_back({"input_bn.running_mean", &input_bn.running_mean, nullptr});
  p.push_back({"input_bn.running_var", &input_bn.running_var, nullptr});
  for (std::size_t i = 0; i < inner.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    p.push_back({prefix + ".bn.running_mean", &inner[i].bn.running_mean, nullptr});
    p.push_back({prefix + ".bn.running_var", &inner[i].bn.running_var, nullptr});
  }
  return p;
}

long ResidualRegressor::param_count() const {
  long n = 0;
  n += input.weight.size() + input.bias.size();
  n += input_bn.gamma.size() + input_bn.beta.size();
  for (const Block& b : inner)
    n += b.fc.weight.size() + b.fc.bias.size() + b.bn.gamma.size() + b.bn.beta.size();
  n += output.weight.size() + output.bias.size();
  return n;
}

namespace {

void init_params(ResidualRegressor& model, std::mt19937_64& rng) {
  model.input.init_he_uniform(rng);
  for (auto& b : model.inner) b.fc.init_he_uniform(rng);
  // Small output init keeps the network near the identity mapping at the
  // start, which is where the residual formulation wants it.
  model.output.init_he_uniform(rng);
  model.output.weight *= 0.1;
}

struct LossSpace {
  // Maps network output (input-normalized units) into target-normalized
  // units, where the smooth-L1 knee lives: p = a .* yn + b.
  Eigen::RowVectorXd a;
  Eigen::RowVectorXd b;
};

LossSpace loss_space(const NormalizationStats& norm) {
  LossSpace s;
  s.a = (norm.in_std.array() / norm.out_std.array()).matrix();
  s.b = ((norm.in_mean - norm.out_mean).array() / norm.out_std.array()).matrix();
  return s;
}

Mat flatten_targets(const RegressorConfig& config, std::span<const TrainingSample> samples) {
  Mat t(static_cast<Eigen::Index>(samples.size()), config.output_width());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (samples[s].target.rows() != config.joints)
      throw SchemaError("regressor: target joint count does not match model");
    if (!samples[s].target.allFinite())
      throw NumericalError("regressor: non-finite ground-truth pose");
    for (int j = 0; j < config.joints; ++j)
      for (int k = 0; k < 3; ++k) t(static_cast<Eigen::Index>(s), 3 * j + k) = samples[s].target(j, k);
  }
  return t;
}

void column_stats(const Mat& values, Eigen::RowVectorXd& mean, Eigen::RowVectorXd& std) {
  const double n = static_cast<double>(values.rows());
  mean = values.colwise().mean();
  Eigen::RowVectorXd var = (values.rowwise() - mean).array().square().colwise().sum().matrix() / n;
  std = var.array().sqrt().max(1e-8).matrix();
}

}  // namespace

ResidualRegressor fit_regressor(const RegressorConfig& config, const SkeletonModel& model,
                                std::span<const TrainingSample> train,
                                std::span<const TrainingSample> val, TrainingReport* report) {
  config.validate();
  if (train.empty()) throw SchemaError("fit_regressor: empty training set");
  if (config.joints != model.joint_count())
    throw SchemaError("fit_regressor: config joint count does not match skeleton");
  const auto t0 = std::chrono::steady_clock::now();

  ResidualRegressor reg(config, model.checksum());
  std::mt19937_64 rng(config.seed);
  init_params(reg, rng);

  std::vector<LiftedPose> lifted(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) lifted[i] = train[i].lifted;
  const Mat raw = reg.assemble_input(lifted);
  const Mat targets = flatten_targets(config, train);

  // Standardization statistics come from the training split only. Only the
  // xyz channels of the input are standardized.
  Mat raw_xyz(raw.rows(), config.output_width());
  for (Eigen::Index m = 0; m < raw_xyz.cols(); ++m)
    raw_xyz.col(m) = raw.col(xyz_column(config.channels(), m));
  column_stats(raw_xyz, reg.norm.in_mean, reg.norm.in_std);
  column_stats(targets, reg.norm.out_mean, reg.norm.out_std);

  const Mat xn = reg.normalize_input(raw);
  const LossSpace space = loss_space(reg.norm);
  Mat tn = targets;
  tn.array().rowwise() -= reg.norm.out_mean.array();
  tn.array().rowwise() /= reg.norm.out_std.array();

  AdamOptimizer adam;
  const std::vector<ParamRef> params = reg.trainable_params();
  std::vector<Eigen::Index> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainingReport local;
  TrainingReport& rep = report ? *report : local;
  rep.param_count = reg.param_count();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr_at_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    double seen = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto bsz = static_cast<Eigen::Index>(
          std::min<std::size_t>(config.batch_size, order.size() - start));
      if (bsz < 2) continue;  // batchnorm cannot normalize a single sample
      Mat bx(bsz, xn.cols()), bt(bsz, tn.cols());
      for (Eigen::Index r = 0; r < bsz; ++r) {
        bx.row(r) = xn.row(order[start + r]);
        bt.row(r) = tn.row(order[start + r]);
      }
      Mat yn = reg.forward_normalized(bx, /*training=*/true, &rng);
      Mat p = yn;
      p.array().rowwise() *= space.a.array();
      p.array().rowwise() += space.b.array();
      const double loss = smooth_l1(p, bt, config.smooth_l1_beta);
      if (!std::isfinite(loss))
        throw NumericalError("fit_regressor: loss became non-finite at epoch " +
                             std::to_string(epoch));
      Mat dyn = smooth_l1_grad(p, bt, config.smooth_l1_beta);
      dyn.array().rowwise() *= space.a.array();
      reg.backward_normalized(dyn);
      adam.step(params, lr);
      loss_sum += loss * static_cast<double>(bsz);
      seen += static_cast<double>(bsz);
    }
    rep.lr.push_back(lr);
    rep.train_loss.push_back(seen > 0.0 ? loss_sum / seen : 0.0);
    if (!val.empty()) rep.val_loss.push_back(evaluate_loss(reg, val));
  }

  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return reg;
}

double evaluate_loss(ResidualRegressor& model, std::span<const TrainingSample> batch) {
  if (batch.empty()) throw SchemaError("evaluate_loss: empty batch");
  std::vector<LiftedPose> lifted(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) lifted[i] = batch[i].lifted;
  const Mat xn = model.normalize_input(model.assemble_input(lifted));
  Mat yn = model.forward_normalized(xn, /*training=*/false, nullptr);
  const LossSpace space = loss_space(model.norm);
  yn.array().rowwise() *= space.a.array();
  yn.array().rowwise() += space.b.array();
  Mat tn = flatten_targets(model.config, batch);
  tn.array().rowwise() -= model.norm.out_mean.array();
  tn.array().rowwise() /= model.norm.out_std.array();
  return smooth_l1(yn, tn, model.config.smooth_l1_beta);
}

namespace {

constexpr char kModelMagic[8] = {'R', 'P', 'M', 'O', 'D', 'E', 'L', '1'};

json config_to_json(const RegressorConfig& c) {
  return json{{"joints", c.joints},
              {"features", c.features},
              {"blocks", c.blocks},
              {"dropout_rate", c.dropout_rate},
              {"use_confidence", c.use_confidence},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr0", c.lr0},
              {"lr_halving_period", c.lr_halving_period},
              {"bn_momentum", c.bn_momentum},
              {"bn_eps", c.bn_eps},
              {"smooth_l1_beta", c.smooth_l1_beta},
              {"seed", c.seed}};
}

RegressorConfig config_from_json(const json& j) {
  RegressorConfig c;
  c.joints = j.at("joints").get<int>();
  c.features = j.at("features").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.use_confidence = j.at("use_confidence").get<bool>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr0 = j.at("lr0").get<double>();
  c.lr_halving_period = j.at("lr_halving_period").get<int>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.bn_eps = j.at("bn_eps").get<double>();
  c.smooth_l1_beta = j.at("smooth_l1_beta").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::vector<double> to_vec(const Eigen::RowVectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::RowVectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_model(const std::filesystem::path& path, const ResidualRegressor& model) {
  auto& m = const_cast<ResidualRegressor&>(model);  // tensors() is logically const
  const std::vector<ParamRef> tensors = m.tensors();

  std::string blob;
  json index = json::array();
  for (const ParamRef& t : tensors) {
    index.push_back({{"name", t.name},
                     {"rows", t.value->rows()},
                     {"cols", t.value->cols()}});
    blob.append(reinterpret_cast<const char*>(t.value->data()),
                static_cast<std::size_t>(t.value->size()) * sizeof(double));
  }

  json header;
  header["format_version"] = 1;
  header["config"] = config_to_json(model.config);
  header["skeleton_checksum"] = checksum_hex(model.skeleton_checksum);
  header["normalization"] = {{"in_mean", to_vec(model.norm.in_mean)},
                             {"in_std", to_vec(model.norm.in_std)},
                             {"out_mean", to_vec(model.norm.out_mean)},
                             {"out_std", to_vec(model.norm.out_std)}};
  header["tensors"] = index;
  header["param_checksum"] = checksum_hex(fnv1a64(blob));

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("model: cannot open " + path.string() + " for writing");
  const std::uint32_t header_len = static_cast<std::uint32_t>(header_str.size());
  out.write(kModelMagic, sizeof(kModelMagic));
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), header_str.size());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw SchemaError("model: short write to " + path.string());
}

ResidualRegressor load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("model: cannot open " + path.string());
  char magic[8];
  std::uint32_t header_len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
    throw FileIntegrityError("model: bad magic in " + path.string());
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) throw FileIntegrityError("model: truncated header in " + path.string());

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw FileIntegrityError("model: unparseable header in " + path.string() + ": " + e.what());
  }
  if (header.at("format_version").get<int>() != 1)
    throw FileIntegrityError("model: unsupported format version in " + path.string());

  ResidualRegressor model(config_from_json(header.at("config")),
                          parse_checksum_hex(header.at("skeleton_checksum").get<std::string>()));
  const auto& n = header.at("normalization");
  model.norm.in_mean = from_vec(n.at("in_mean").get<std::vector<double>>());
  model.norm.in_std = from_vec(n.at("in_std").get<std::vector<double>>());
  model.norm.out_mean = from_vec(n.at("out_mean").get<std::vector<double>>());
  model.norm.out_std = from_vec(n.at("out_std").get<std::vector<double>>());
  if (model.norm.in_mean.size() != model.config.output_width())
    throw FileIntegrityError("model: normalization stats have wrong arity");

  const std::vector<ParamRef> tensors = model.tensors();
  const json& index = header.at("tensors");
  if (index.size() != tensors.size())
    throw FileIntegrityError("model: tensor index size mismatch in " + path.string());

  std::string blob;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const json& e = index[i];
    if (e.at("name").get<std::string>() != tensors[i].name ||
        e.at("rows").get<Eigen::Index>() != tensors[i].value->rows() ||
        e.at("cols").get<Eigen::Index>() != tensors[i].value->cols())
      throw FileIntegrityError("model: tensor " + tensors[i].name + " has unexpected name/shape");
    const std::size_t bytes = static_cast<std::size_t>(tensors[i].value->size()) * sizeof(double);
    const std::size_t off = blob.size();
    blob.resize(off + bytes);
    in.read(blob.data() + off, static_cast<std::streamsize>(bytes));
    if (!in) throw FileIntegrityError("model: truncated parameter block in " + path.string());
  }
  if (checksum_hex(fnv1a64(blob)) != header.at("param_checksum").get<std::string>())
    throw FileIntegrityError("model: parameter checksum mismatch in " + path.string());

  std::size_t off = 0;
  for (const ParamRef& t : tensors) {
    const std::size_t bytes = static_cast<std::size_t>(t.value->size()) * sizeof(double);
    std::memcpy(t.value->data(), blob.data() + off, bytes);
    off += bytes;
  }
  return model;
}

void check_model_matches(const ResidualRegressor& model, const SkeletonModel& skeleton) {
  if (model.config.joints != skeleton.joint_count())
    throw SchemaError("model: joint count " + std::to_string(model.config.joints) +
                      " does not match skeleton with " + std::to_string(skeleton.joint_count()) +
                      " landmarks");
  if (model.skeleton_checksum != skeleton.checksum())
    throw FileIntegrityError("model: skeleton checksum mismatch");
}

GradCheckReport regressor_grad_check(const RegressorConfig& config, bool linear_only,
                                     const GradCheckOptions& options) {
  if (config.dropout_rate != 0.0)
    throw SchemaError("grad check: dropout must be disabled");
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Index batch = 4;

  Mat x(batch, config.input_width()), t(batch, config.output_width());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = gauss(rng);

  if (linear_only) {
    LinearLayer a(config.input_width(), config.features);
    LinearLayer b(config.features, config.output_width());
    a.init_he_uniform(rng);
    b.init_he_uniform(rng);
    std::vector<ParamRef> params{{"a.weight", &a.weight, &a.grad_weight},
                                 {"a.bias", &a.bias, &a.grad_bias},
                                 {"b.weight", &b.weight, &b.grad_weight},
                                 {"b.bias", &b.bias, &b.grad_bias}};
    auto loss = [&] { return half_mse(b.forward(a.forward(x)), t); };
    auto backprop = [&] {
      const Mat pred = b.forward(a.forward(x));
      a.backward(b.backward(half_mse_grad(pred, t)));
    };
    return grad_check(params, loss, backprop, options);
  }

  ResidualRegressor model(config, 0);
  init_params(model, rng);
  // Fixed batch, batch statistics, frozen running stats: deterministic.
  auto loss = [&] {
    return half_mse(model.forward_normalized(x, true, nullptr, /*update_running=*/false), t);
  };
  auto backprop = [&] {
    const Mat yn = model.forward_normalized(x, true, nullptr, /*update_running=*/false);
    model.backward_normalized(half_mse_grad(yn, t));
  };
  auto& m = model;
  return grad_check(m.trainable_params(), loss, backprop, options);
}

}  // namespace respose
