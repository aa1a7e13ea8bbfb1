#include "respose/prior.hpp"

#include <fstream>

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include "respose/checksum.hpp"
#include "respose/errors.hpp"

namespace respose {

using nlohmann::json;

Eigen::Vector3d limb_vector(const SkeletonModel& model, int limb, const PoseMatrix& pose) {
  const Limb& l = model.limbs[limb];
  return pose.row(l.child).transpose() - pose.row(l.parent).transpose();
}

LimbPrior fit_limb_prior(const SkeletonModel& model, std::span<const PoseMatrix> poses,
                         double epsilon) {
  const auto n = static_cast<Eigen::Index>(poses.size());
  if (n < 2) throw SchemaError("fit_limb_prior: need at least 2 training poses");
  for (const PoseMatrix& p : poses) {
    if (p.rows() != model.joint_count())
      throw SchemaError("fit_limb_prior: pose joint count does not match skeleton");
    if (!p.allFinite()) throw NumericalError("fit_limb_prior: non-finite training pose");
  }

  LimbPrior prior;
  prior.epsilon = epsilon;
  prior.skeleton_checksum = model.checksum();
  prior.pairs.resize(model.limb_count());

  for (int limb = 0; limb < model.limb_count(); ++limb) {
    if (limb == model.root_limb) continue;
    const int parent = model.limb_parents[limb];

    Eigen::Matrix<double, Eigen::Dynamic, 6> samples(n, 6);
    for (Eigen::Index s = 0; s < n; ++s) {
      samples.row(s).head<3>() = limb_vector(model, limb, poses[s]).transpose();
      samples.row(s).tail<3>() = limb_vector(model, parent, poses[s]).transpose();
    }

    PairGaussian g;
    g.mean = samples.colwise().mean().transpose();
    const Eigen::Matrix<double, Eigen::Dynamic, 6> centered = samples.rowwise() - g.mean.transpose();
    g.cov = (centered.transpose() * centered) / static_cast<double>(n);
    g.cov = ((g.cov + g.cov.transpose()) / 2.0).eval();  // enforce exact symmetry
    g.cov += epsilon * Matrix6d::Identity();
    prior.pairs[limb] = g;
  }
  return prior;
}

Eigen::Vector3d recover_landmark(const LimbPrior& prior, int limb,
                                 const Eigen::Vector3d& parent_vector) {
  if (limb < 0 || limb >= static_cast<int>(prior.pairs.size()) || !prior.pairs[limb])
    throw SchemaError("recover_landmark: no prior for limb " + std::to_string(limb));
  const PairGaussian& g = *prior.pairs[limb];

  const Eigen::Vector3d mu_c = g.mean.head<3>();
  const Eigen::Vector3d mu_p = g.mean.tail<3>();
  const Eigen::Matrix3d cross = g.cov.topRightCorner<3, 3>();
  const Eigen::Matrix3d parent_block = g.cov.bottomRightCorner<3, 3>();

  Eigen::LDLT<Eigen::Matrix3d> ldlt(parent_block);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      !(ldlt.vectorD().minCoeff() > 0.0))
    throw NumericalError("recover_landmark: singular parent covariance block (corrupt prior)");
  return mu_c + cross * ldlt.solve(parent_vector - mu_p);
}

void save_prior(const std::filesystem::path& path, const LimbPrior& prior) {
  json doc;
  doc["format_version"] = 1;
  doc["skeleton_checksum"] = checksum_hex(prior.skeleton_checksum);
  doc["epsilon"] = prior.epsilon;
  json limbs = json::array();
  for (std::size_t i = 0; i < prior.pairs.size(); ++i) {
    if (!prior.pairs[i]) continue;
    const PairGaussian& g = *prior.pairs[i];
    json entry;
    entry["limb"] = i;
    entry["mean"] = std::vector<double>(g.mean.data(), g.mean.data() + 6);
    std::vector<double> cov(36);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) cov[r * 6 + c] = g.cov(r, c);
    entry["cov"] = cov;
    limbs.push_back(entry);
  }
  doc["limbs"] = limbs;
  std::ofstream out(path);
  if (!out) throw SchemaError("prior: cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

LimbPrior load_prior(const std::filesystem::path& path, const SkeletonModel& model) {
  std::ifstream in(path);
  if (!in) throw SchemaError("prior: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw SchemaError("prior: invalid JSON in " + path.string() + ": " + e.what());
  }

  LimbPrior prior;
  try {
    if (doc.at("format_version").get<int>() != 1)
      throw FileIntegrityError("prior: unsupported format version in " + path.string());
    prior.skeleton_checksum = parse_checksum_hex(doc.at("skeleton_checksum").get<std::string>());
    if (prior.skeleton_checksum != model.checksum())
      throw FileIntegrityError("prior: skeleton checksum mismatch (prior was fitted for a different skeleton)");
    prior.epsilon = doc.at("epsilon").get<double>();
    prior.pairs.resize(model.limb_count());
    for (const auto& entry : doc.at("limbs")) {
      const int limb = entry.at("limb").get<int>();
      if (limb < 0 || limb >= model.limb_count() || limb == model.root_limb)
        throw SchemaError("prior: limb index out of range in " + path.string());
      PairGaussian g;
      const auto mean = entry.at("mean").get<std::vector<double>>();
      const auto cov = entry.at("cov").get<std::vector<double>>();
      if (mean.size() != 6 || cov.size() != 36)
        throw SchemaError("prior: wrong mean/cov arity in " + path.string());
      for (int k = 0; k < 6; ++k) g.mean(k) = mean[k];
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) g.cov(r, c) = cov[r * 6 + c];
      if ((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff() > 1e-9)
        throw SchemaError("prior: covariance for limb " + std::to_string(limb) + " is not symmetric");
      prior.pairs[limb] = g;
    }
  } catch (const json::exception& e) {
    throw SchemaError("prior: malformed document " + path.string() + ": " + e.what());
  }
  for (int limb = 0; limb < model.limb_count(); ++limb)
    if (limb != model.root_limb && !prior.pairs[limb])
      throw SchemaError("prior: missing entry for limb " + std::to_string(limb));
  return prior;
}

}  // namespace respose
