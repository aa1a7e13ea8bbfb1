#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "respose/errors.hpp"
#include "respose/skeleton.hpp"

using namespace respose;
using nlohmann::json;

namespace {

// Note: limb pairs must be built with explicit json::array; brace-init would
// turn {{"b","a"},{"c","b"}} into an object.
json limb_list(const std::vector<std::pair<std::string, std::string>>& pairs) {
  json out = json::array();
  for (const auto& [child, parent] : pairs) out.push_back(json::array({child, parent}));
  return out;
}

json minimal_doc() {
  return json{{"landmarks", {"a", "b", "c"}},
              {"limbs", limb_list({{"b", "a"}, {"c", "b"}})},
              {"limb_parents", {{1, 0}}},
              {"root_limb", 0},
              {"trunk", {"a", "b", "c"}}};
}

}  // namespace

TEST_CASE("shipped itop15 skeleton") {
  const SkeletonModel m = load_skeleton(std::filesystem::path(RESPOSE_SOURCE_DIR) /
                                        "skeletons/itop15.json");
  CHECK(m.joint_count() == 15);
  CHECK(m.limb_count() == 14);
  CHECK(m.root_limb == 0);
  CHECK(m.checksum() == itop15_skeleton().checksum());
  CHECK(m.is_trunk(m.landmark_index("torso")));
  CHECK(m.is_trunk(m.landmark_index("neck")));
  CHECK_FALSE(m.is_trunk(m.landmark_index("head")));
}

TEST_CASE("degenerate two-landmark skeleton is valid") {
  const json doc = {{"landmarks", {"top", "bottom"}},
                    {"limbs", limb_list({{"top", "bottom"}})},
                    {"limb_parents", json::array()},
                    {"root_limb", 0},
                    {"trunk", {"top", "bottom"}}};
  const SkeletonModel m = parse_skeleton(doc);
  CHECK(m.joint_count() == 2);
  CHECK(m.limb_count() == 1);
  CHECK(recovery_order(m) == std::vector<int>{0});
}

TEST_CASE("schema violations are rejected") {
  SUBCASE("limb cycle") {
    json doc = minimal_doc();
    doc["limb_parents"] = {{0, 1}, {1, 0}};
    doc["root_limb"] = 0;
    CHECK_THROWS_AS(parse_skeleton(doc), SchemaError);
  }
  SUBCASE("wrong limb count") {
    json doc = minimal_doc();
    doc["limbs"] = limb_list({{"b", "a"}});
    CHECK_THROWS_AS(parse_skeleton(doc), SchemaError);
  }
  SUBCASE("unknown landmark name") {
    json doc = minimal_doc();
    doc["limbs"] = limb_list({{"b", "a"}, {"c", "nope"}});
    CHECK_THROWS_AS(parse_skeleton(doc), SchemaError);
  }
  SUBCASE("root limb endpoints outside trunk") {
    json doc = minimal_doc();
    doc["trunk"] = {"c"};
    CHECK_THROWS_AS(parse_skeleton(doc), SchemaError);
  }
  SUBCASE("parent limb not sharing a landmark") {
    const json doc = {{"landmarks", {"a", "b", "c", "d"}},
                      {"limbs", limb_list({{"b", "a"}, {"c", "b"}, {"d", "c"}})},
                      {"limb_parents", {{1, 0}, {2, 0}}},  // limb 2 (d<-c) does not touch limb 0
                      {"root_limb", 0},
                      {"trunk", {"a", "b"}}};
    CHECK_THROWS_AS(parse_skeleton(doc), SchemaError);
  }
  SUBCASE("duplicate landmark names") {
    json doc = minimal_doc();
    doc["landmarks"] = {"a", "b", "b"};
    CHECK_THROWS_AS(parse_skeleton(doc), SchemaError);
  }
}

TEST_CASE("recovery order is a BFS with parents first") {
  const SkeletonModel m = itop15_skeleton();
  const std::vector<int> order = recovery_order(m);
  REQUIRE(order.size() == static_cast<std::size_t>(m.limb_count()));
  CHECK(order.front() == m.root_limb);

  std::vector<int> position(m.limb_count(), -1);
  for (std::size_t i = 0; i < order.size(); ++i) {
    CHECK(position[order[i]] == -1);  // permutation: each limb exactly once
    position[order[i]] = static_cast<int>(i);
  }
  for (int limb = 0; limb < m.limb_count(); ++limb) {
    if (limb == m.root_limb) continue;
    CHECK(position[m.limb_parents[limb]] < position[limb]);
  }

  // Depth layering: spine first, trunk-adjacent limbs next, extremities last.
  CHECK(position[0] == 0);
  CHECK(position[6] > position[4]);   // l_hand after l_elbow
  CHECK(position[13] > position[11]); // r_foot after r_knee
}

TEST_CASE("limb endpoints cover all landmarks") {
  const SkeletonModel m = itop15_skeleton();
  std::vector<char> seen(m.joint_count(), 0);
  for (const Limb& l : m.limbs) {
    seen[l.child] = 1;
    seen[l.parent] = 1;
  }
  for (char s : seen) CHECK(s == 1);
}
