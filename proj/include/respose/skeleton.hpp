#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace respose {

// Directed segment between two adjacent landmarks. The limb vector runs
// from the parent-side landmark (shared with the parent limb) to the child.
struct Limb {
  int child = -1;
  int parent = -1;
};

// Landmark set plus the limb tree rooted at the spine limb. Immutable after
// construction; every other module takes it by const reference.
struct SkeletonModel {
  std::vector<std::string> landmarks;
  std::vector<Limb> limbs;
  std::vector<int> limb_parents;  // parent limb index, -1 for the root limb
  int root_limb = -1;
  std::vector<int> trunk;  // landmark indices, sorted ascending

  int joint_count() const { return static_cast<int>(landmarks.size()); }
  int limb_count() const { return static_cast<int>(limbs.size()); }
  bool is_trunk(int landmark) const;
  int landmark_index(const std::string& name) const;  // -1 if unknown

  // Identity of the definition; serialized artifacts carry it to prevent
  // mixing priors/models across skeletons.
  std::uint64_t checksum() const;
};

SkeletonModel parse_skeleton(const nlohmann::json& doc);
SkeletonModel load_skeleton(const std::filesystem::path& path);

// The default 15-landmark layout (head, neck, shoulder/elbow/hand pairs,
// torso, hip/knee/foot pairs). Same content as skeletons/itop15.json.
SkeletonModel itop15_skeleton();

// Breadth-first traversal of the limb tree from the root limb. Every limb
// appears after its parent; this is the order missing landmarks are
// recovered in.
std::vector<int> recovery_order(const SkeletonModel& model);

}  // namespace respose
