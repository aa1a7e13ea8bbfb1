#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "respose/errors.hpp"
#include "respose/metrics.hpp"

using namespace respose;

namespace {

EvalPair offset_pair(int joints, const Eigen::Vector3d& offset) {
  EvalPair p;
  p.ground_truth = PoseMatrix(joints, 3);
  for (int j = 0; j < joints; ++j) p.ground_truth.row(j) << 0.1 * j, -0.2 * j, 2.0;
  p.predicted = p.ground_truth;
  p.predicted.rowwise() += offset.transpose();
  return p;
}

}  // namespace

TEST_CASE("ap_at_threshold") {
  SUBCASE("half hit, half miss") {
    std::vector<EvalPair> pairs{offset_pair(1, {0.05, 0.0, 0.0}), offset_pair(1, {0.15, 0.0, 0.0})};
    const ApReport r = ap_at_threshold(pairs, 0.10);
    CHECK(r.per_joint[0] == 0.5);
    CHECK(r.mean == 0.5);
  }
  SUBCASE("perfect predictions") {
    std::vector<EvalPair> pairs{offset_pair(4, {0, 0, 0}), offset_pair(4, {0, 0, 0})};
    const ApReport r = ap_at_threshold(pairs, 0.10);
    for (double ap : r.per_joint) CHECK(ap == 1.0);
    CHECK(r.mean == 1.0);
  }
  SUBCASE("exactly the threshold counts as a miss") {
    std::vector<EvalPair> pairs{offset_pair(2, {0.10, 0.0, 0.0})};
    const ApReport r = ap_at_threshold(pairs, 0.10);
    CHECK(r.per_joint[0] == 0.0);
    CHECK(r.per_joint[1] == 0.0);
  }
  SUBCASE("invalid ground truth is excluded from denominators") {
    EvalPair hit = offset_pair(2, {0.0, 0.0, 0.0});
    EvalPair miss = offset_pair(2, {0.5, 0.0, 0.0});
    miss.gt_valid = {1, 0};
    const std::vector<EvalPair> pairs{hit, miss};
    const ApReport r = ap_at_threshold(pairs, 0.10);
    CHECK(r.valid_counts[0] == 2);
    CHECK(r.valid_counts[1] == 1);
    CHECK(r.per_joint[0] == 0.5);
    CHECK(r.per_joint[1] == 1.0);
  }
  SUBCASE("huge threshold yields 1 everywhere") {
    std::vector<EvalPair> pairs{offset_pair(3, {3.0, 1.0, -2.0})};
    const ApReport r = ap_at_threshold(pairs, 1e9);
    CHECK(r.mean == 1.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(ap_at_threshold({}, 0.1), SchemaError);
    std::vector<EvalPair> pairs{offset_pair(1, {0, 0, 0})};
    CHECK_THROWS_AS(ap_at_threshold(pairs, 0.0), SchemaError);
  }
}

TEST_CASE("mpjpe") {
  SUBCASE("constant offset reports its length in centimeters") {
    std::vector<EvalPair> pairs{offset_pair(5, {0.05, 0.0, 0.0})};
    const MpjpeReport r = mpjpe(pairs);
    for (double e : r.per_joint_cm) CHECK(e == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(r.mean_cm == doctest::Approx(5.0).epsilon(1e-12));
  }
  SUBCASE("exact predictions give zero") {
    std::vector<EvalPair> pairs{offset_pair(3, {0, 0, 0})};
    CHECK(mpjpe(pairs).mean_cm == 0.0);
  }
  SUBCASE("two pairs average") {
    std::vector<EvalPair> pairs{offset_pair(2, {0.02, 0, 0}), offset_pair(2, {0.04, 0, 0})};
    const MpjpeReport r = mpjpe(pairs);
    CHECK(r.per_joint_cm[0] == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("empty input") { CHECK_THROWS_AS(mpjpe({}), SchemaError); }
}

TEST_CASE("pck_curve") {
  SUBCASE("perfect detections") {
    Pck2DPair p;
    p.bbox_height = 200.0;
    for (int j = 0; j < 5; ++j) {
      p.ground_truth.emplace_back(10.0 * j, 20.0 * j);
      p.detections.emplace_back(p.ground_truth.back());
    }
    const std::vector<Pck2DPair> pairs{p};
    const std::vector<double> fractions{0.01, 0.1};
    const PckReport r = pck_curve(pairs, fractions);
    for (const PckPoint& pt : r.points) {
      CHECK(pt.precision == 1.0);
      CHECK(pt.recall == 1.0);
    }
    CHECK(r.max_f_score == 1.0);
  }
  SUBCASE("no detections at all") {
    Pck2DPair p;
    p.bbox_height = 100.0;
    p.ground_truth = {{5.0, 5.0}, {9.0, 9.0}};
    p.detections = {std::nullopt, std::nullopt};
    const std::vector<Pck2DPair> pairs{p};
    const std::vector<double> fractions{0.1};
    const PckReport r = pck_curve(pairs, fractions);
    CHECK_FALSE(r.points[0].precision_defined);
    CHECK(r.points[0].precision == 0.0);
    CHECK(r.points[0].recall == 0.0);
  }
  SUBCASE("threshold straddle") {
    Pck2DPair p;
    p.bbox_height = 100.0;
    p.ground_truth = {{50.0, 50.0}};
    p.detections = {Eigen::Vector2d{60.0, 50.0}};  // 10 px away
    const std::vector<Pck2DPair> pairs{p};
    const std::vector<double> fractions{0.05, 0.15};
    const PckReport r = pck_curve(pairs, fractions);
    CHECK(r.points[0].tp == 0);
    CHECK(r.points[0].fp == 1);
    CHECK(r.points[0].recall == 0.0);
    CHECK(r.points[1].tp == 1);
    CHECK(r.points[1].recall == 1.0);
  }
  SUBCASE("errors") {
    const std::vector<double> fractions{0.1};
    CHECK_THROWS_AS(pck_curve({}, fractions), SchemaError);
    Pck2DPair p;
    p.bbox_height = 0.0;
    p.ground_truth = {{0.0, 0.0}};
    p.detections = {std::nullopt};
    const std::vector<Pck2DPair> pairs{p};
    CHECK_THROWS_AS(pck_curve(pairs, fractions), SchemaError);
    const std::vector<Pck2DPair> ok{[] {
      Pck2DPair q;
      q.bbox_height = 10.0;
      q.ground_truth = {{0.0, 0.0}};
      q.detections = {std::nullopt};
      return q;
    }()};
    CHECK_THROWS_AS(pck_curve(ok, {}), SchemaError);
  }
}

TEST_CASE("monotonicity and permutation invariance") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 0.08);
  std::vector<EvalPair> pairs;
  std::vector<Pck2DPair> pck_pairs;
  for (int s = 0; s < 40; ++s) {
    EvalPair p = offset_pair(6, {0, 0, 0});
    for (int j = 0; j < 6; ++j)
      p.predicted.row(j) += Eigen::RowVector3d(g(rng), g(rng), g(rng));
    pairs.push_back(p);

    Pck2DPair q;
    q.bbox_height = 150.0;
    for (int j = 0; j < 6; ++j) {
      q.ground_truth.emplace_back(100.0 + 5.0 * j, 80.0 + 7.0 * j);
      if (j == 3 && s % 5 == 0)
        q.detections.emplace_back(std::nullopt);
      else
        q.detections.emplace_back(q.ground_truth.back() +
                                  Eigen::Vector2d(40.0 * g(rng), 40.0 * g(rng)));
    }
    pck_pairs.push_back(q);
  }

  SUBCASE("AP is non-decreasing in the threshold") {
    double prev = -1.0;
    for (int i = 1; i <= 20; ++i) {
      const double ap = ap_at_threshold(pairs, 0.02 * i).mean;
      CHECK(ap >= prev);
      prev = ap;
    }
  }
  SUBCASE("recall is non-decreasing in the radius fraction") {
    std::vector<double> fractions;
    for (int i = 1; i <= 20; ++i) fractions.push_back(0.01 * i);
    const PckReport r = pck_curve(pck_pairs, fractions);
    for (std::size_t i = 1; i < r.points.size(); ++i)
      CHECK(r.points[i].recall >= r.points[i - 1].recall);
  }
  SUBCASE("pair order does not matter") {
    std::vector<EvalPair> shuffled = pairs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const ApReport a = ap_at_threshold(pairs, 0.1);
    const ApReport b = ap_at_threshold(shuffled, 0.1);
    for (std::size_t j = 0; j < a.per_joint.size(); ++j)
      CHECK(a.per_joint[j] == b.per_joint[j]);
    CHECK(mpjpe(pairs).mean_cm == doctest::Approx(mpjpe(shuffled).mean_cm).epsilon(1e-12));
  }
}
