#include "respose/skeleton.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "respose/checksum.hpp"
#include "respose/errors.hpp"

namespace respose {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw SchemaError("skeleton: " + msg); }

void validate(const SkeletonModel& m) {
  const int joints = m.joint_count();
  const int limbs = m.limb_count();
  if (joints < 2) fail("need at least two landmarks");
  {
    std::set<std::string> names(m.landmarks.begin(), m.landmarks.end());
    if (static_cast<int>(names.size()) != joints) fail("duplicate landmark names");
  }
  if (limbs != joints - 1) {
    std::ostringstream os;
    os << "expected " << joints - 1 << " limbs for " << joints << " landmarks, got " << limbs;
    fail(os.str());
  }
  for (const Limb& l : m.limbs) {
    if (l.child < 0 || l.child >= joints || l.parent < 0 || l.parent >= joints)
      fail("limb endpoint out of range");
    if (l.child == l.parent) fail("limb with identical endpoints");
  }
  if (m.root_limb < 0 || m.root_limb >= limbs) fail("root_limb out of range");
  if (static_cast<int>(m.limb_parents.size()) != limbs) fail("limb_parents size mismatch");
  if (m.limb_parents[m.root_limb] != -1) fail("root limb must not have a parent limb");
  for (int i = 0; i < limbs; ++i) {
    if (i == m.root_limb) continue;
    const int p = m.limb_parents[i];
    if (p < 0 || p >= limbs) fail("missing or invalid parent for limb " + std::to_string(i));
    if (p == i) fail("limb cannot parent itself");
  }

  // Connectivity and acyclicity of the limb tree.
  std::vector<std::vector<int>> children(limbs);
  for (int i = 0; i < limbs; ++i)
    if (i != m.root_limb) children[m.limb_parents[i]].push_back(i);
  std::vector<char> seen(limbs, 0);
  std::deque<int> queue{m.root_limb};
  seen[m.root_limb] = 1;
  int reached = 0;
  while (!queue.empty()) {
    const int limb = queue.front();
    queue.pop_front();
    ++reached;
    for (int c : children[limb]) {
      if (seen[c]) fail("cyclic limb graph");
      seen[c] = 1;
      queue.push_back(c);
    }
  }
  if (reached != limbs) fail("disconnected or cyclic limb graph");

  // Each non-root limb hangs off its parent limb through exactly one shared
  // landmark, and that landmark is the limb's own parent-side endpoint.
  for (int i = 0; i < limbs; ++i) {
    if (i == m.root_limb) continue;
    const Limb& a = m.limbs[i];
    const Limb& b = m.limbs[m.limb_parents[i]];
    int shared = 0;
    if (a.child == b.child || a.child == b.parent) ++shared;
    if (a.parent == b.child || a.parent == b.parent) ++shared;
    if (shared != 1) fail("limb " + std::to_string(i) + " must share exactly one landmark with its parent limb");
    if (a.parent != b.child && a.parent != b.parent)
      fail("limb " + std::to_string(i) + ": parent-side landmark is not on the parent limb");
  }

  // Landmark coverage: the distinct limb children plus the root limb's
  // parent-side landmark must enumerate every landmark. This is what makes
  // recovery well defined (each landmark is positioned by exactly one limb).
  std::set<int> covered{m.limbs[m.root_limb].parent};
  for (int i = 0; i < limbs; ++i) {
    if (!covered.insert(m.limbs[i].child).second)
      fail("landmark " + m.landmarks[m.limbs[i].child] + " is the child of more than one limb");
  }
  if (static_cast<int>(covered.size()) != joints) fail("limbs do not cover all landmarks");

  if (m.trunk.empty()) fail("trunk landmark set is empty");
  for (int t : m.trunk)
    if (t < 0 || t >= joints) fail("trunk landmark out of range");
  const Limb& root = m.limbs[m.root_limb];
  if (!m.is_trunk(root.child) || !m.is_trunk(root.parent))
    fail("root limb endpoints must be trunk landmarks");
}

}  // namespace

bool SkeletonModel::is_trunk(int landmark) const {
  return std::binary_search(trunk.begin(), trunk.end(), landmark);
}

int SkeletonModel::landmark_index(const std::string& name) const {
  for (int i = 0; i < joint_count(); ++i)
    if (landmarks[i] == name) return i;
  return -1;
}

std::uint64_t SkeletonModel::checksum() const {
  std::ostringstream os;
  for (const auto& n : landmarks) os << n << ';';
  os << '|';
  for (const auto& l : limbs) os << l.child << ',' << l.parent << ';';
  os << '|';
  for (int p : limb_parents) os << p << ';';
  os << '|' << root_limb << '|';
  for (int t : trunk) os << t << ';';
  return fnv1a64(os.str());
}

SkeletonModel parse_skeleton(const json& doc) {
  SkeletonModel m;
  try {
    m.landmarks = doc.at("landmarks").get<std::vector<std::string>>();
    for (const auto& pair : doc.at("limbs")) {
      if (!pair.is_array() || pair.size() != 2) fail("each limb must be a [child, parent] name pair");
      Limb l;
      l.child = m.landmark_index(pair[0].get<std::string>());
      l.parent = m.landmark_index(pair[1].get<std::string>());
      if (l.child < 0 || l.parent < 0) fail("limb references unknown landmark");
      m.limbs.push_back(l);
    }
    m.limb_parents.assign(m.limbs.size(), -1);
    m.root_limb = doc.at("root_limb").get<int>();
    for (const auto& pair : doc.at("limb_parents")) {
      if (!pair.is_array() || pair.size() != 2) fail("limb_parents entries must be [limb, parent_limb]");
      const int limb = pair[0].get<int>();
      const int parent = pair[1].get<int>();
      if (limb < 0 || limb >= static_cast<int>(m.limbs.size())) fail("limb_parents limb index out of range");
      if (m.limb_parents[limb] != -1) fail("limb " + std::to_string(limb) + " has two parent entries");
      if (limb == m.root_limb) fail("root limb listed in limb_parents");
      m.limb_parents[limb] = parent;
    }
    for (const auto& name : doc.at("trunk")) {
      const int idx = m.landmark_index(name.get<std::string>());
      if (idx < 0) fail("trunk references unknown landmark " + name.get<std::string>());
      m.trunk.push_back(idx);
    }
  } catch (const json::exception& e) {
    fail(std::string("malformed document: ") + e.what());
  }
  std::sort(m.trunk.begin(), m.trunk.end());
  m.trunk.erase(std::unique(m.trunk.begin(), m.trunk.end()), m.trunk.end());
  validate(m);
  return m;
}

SkeletonModel load_skeleton(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("skeleton: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw SchemaError("skeleton: invalid JSON in " + path.string() + ": " + e.what());
  }
  return parse_skeleton(doc);
}

SkeletonModel itop15_skeleton() {
  static const char* const kDoc = R"({
    "landmarks": ["head", "neck", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
                  "l_hand", "r_hand", "torso", "l_hip", "r_hip", "l_knee", "r_knee",
                  "l_foot", "r_foot"],
    "limbs": [["neck", "torso"],
              ["head", "neck"],
              ["l_shoulder", "neck"], ["r_shoulder", "neck"],
              ["l_elbow", "l_shoulder"], ["r_elbow", "r_shoulder"],
              ["l_hand", "l_elbow"], ["r_hand", "r_elbow"],
              ["l_hip", "torso"], ["r_hip", "torso"],
              ["l_knee", "l_hip"], ["r_knee", "r_hip"],
              ["l_foot", "l_knee"], ["r_foot", "r_knee"]],
    "limb_parents": [[1, 0], [2, 0], [3, 0], [4, 2], [5, 3], [6, 4], [7, 5],
                     [8, 0], [9, 0], [10, 8], [11, 9], [12, 10], [13, 11]],
    "root_limb": 0,
    "trunk": ["neck", "torso", "l_shoulder", "r_shoulder", "l_hip", "r_hip"]
  })";
  return parse_skeleton(json::parse(kDoc));
}

std::vector<int> recovery_order(const SkeletonModel& model) {
  std::vector<std::vector<int>> children(model.limb_count());
  for (int i = 0; i < model.limb_count(); ++i)
    if (i != model.root_limb) children[model.limb_parents[i]].push_back(i);
  for (auto& c : children) std::sort(c.begin(), c.end());

  std::vector<int> order;
  order.reserve(model.limb_count());
  std::deque<int> queue{model.root_limb};
  while (!queue.empty()) {
    const int limb = queue.front();
    queue.pop_front();
    order.push_back(limb);
    for (int c : children[limb]) queue.push_back(c);
  }
  return order;
}

}  // namespace respose
