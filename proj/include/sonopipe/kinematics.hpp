#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string_view>
#include <utility>
#include <vector>

#include "sonopipe/gesture.hpp"

namespace sonopipe {

inline constexpr std::size_t kNumJoints = 14;

/// Fixed joint ordering shared by the config file, the wire protocol and
/// the console.
inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "thumb_abduction", "thumb_mcp",   "thumb_ip",        "index_mcp",
    "index_pip",       "middle_mcp",  "middle_pip",      "ring_mcp",
    "ring_pip",        "little_mcp",  "little_pip",      "wrist_pronation",
    "wrist_flexion",   "base_roll"};

/// Joint angles in radians.
using JointState = std::array<double, kNumJoints>;

struct JointLimits {
  std::array<double, kNumJoints> min{};
  std::array<double, kNumJoints> max{};
};

/// One target pose per gesture, plus the limits they were checked against.
class PosePresets {
 public:
  PosePresets(std::array<JointState, kNumGestures> poses, JointLimits limits);

  const JointState& pose(GestureLabel g) const { return poses_[ordinal(g)]; }
  const JointLimits& limits() const { return limits_; }

 private:
  std::array<JointState, kNumGestures> poses_;
  JointLimits limits_;
};

/// The preset table compiled into the library (identical to
/// config/poses.json).
const PosePresets& default_presets();

/// Config file: gesture name -> {joint name: degrees}, plus
/// "limits": {joint name: [min, max]} in degrees.
PosePresets load_presets(const std::filesystem::path& path);
PosePresets presets_from_json(std::string_view text);

JointState pose_for(GestureLabel label, const PosePresets& presets);

/// Componentwise linear blend; t = 0 and t = 1 return the endpoints exactly.
JointState interpolate(const JointState& from, const JointState& to, double t);

struct TrajectorySample {
  double offset_s;
  JointState state;
};

/// ceil(duration_s * rate_hz) + 1 uniformly spaced samples from `from` to `to`.
std::vector<TrajectorySample> trajectory(const JointState& from, const JointState& to,
                                         double duration_s, double rate_hz);

/// Indices of joints outside their limits; empty when the state is valid.
std::vector<std::size_t> validate_limits(const JointState& state, const JointLimits& limits);

inline constexpr double kDefaultTransitionSeconds = 0.6;

}  // namespace sonopipe
