#include "sonopipe/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "json.hpp"
#include "sonopipe/error.hpp"

namespace sonopipe {

using nlohmann::json;

namespace {

// Generated from config/poses.json at configure time.
constexpr std::string_view kDefaultPosesJson =
#include "default_poses.inc"
    ;

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

PosePresets::PosePresets(std::array<JointState, kNumGestures> poses, JointLimits limits)
    : poses_(poses), limits_(limits) {
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    if (!(limits_.min[j] < limits_.max[j])) {
      throw ArgumentError(fmt::format("joint {}: limit min {} is not below max {}",
                                      kJointNames[j], limits_.min[j], limits_.max[j]));
    }
  }
  for (GestureLabel g : kAllGestures) {
    const auto bad = validate_limits(poses_[ordinal(g)], limits_);
    if (!bad.empty()) {
      throw ArgumentError(fmt::format("preset {} violates the limit of joint {}",
                                      gesture_name(g), kJointNames[bad.front()]));
    }
  }
}

PosePresets presets_from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    JointLimits limits;
    const json& lim = doc.at("limits");
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const auto pair = lim.at(std::string(kJointNames[j])).get<std::vector<double>>();
      if (pair.size() != 2) {
        throw FormatError(fmt::format("limit for {} must be [min, max]", kJointNames[j]));
      }
      limits.min[j] = deg2rad(pair[0]);
      limits.max[j] = deg2rad(pair[1]);
    }
    std::array<JointState, kNumGestures> poses{};
    for (GestureLabel g : kAllGestures) {
      const json& p = doc.at(std::string(gesture_name(g)));
      if (p.size() != kNumJoints) {
        throw FormatError(fmt::format("preset {} has {} joints, expected {}",
                                      gesture_name(g), p.size(), kNumJoints));
      }
      for (std::size_t j = 0; j < kNumJoints; ++j) {
        poses[ordinal(g)][j] = deg2rad(p.at(std::string(kJointNames[j])).get<double>());
      }
    }
    return PosePresets(poses, limits);
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("pose config: {}", e.what()));
  }
}

PosePresets load_presets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return presets_from_json(buf.str());
}

const PosePresets& default_presets() {
  static const PosePresets presets = presets_from_json(kDefaultPosesJson);
  return presets;
}

JointState pose_for(GestureLabel label, const PosePresets& presets) {
  return presets.pose(label);
}

JointState interpolate(const JointState& from, const JointState& to, double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw ArgumentError(fmt::format("interpolate: t={} outside [0, 1]", t));
  }
  if (t == 0.0) return from;
  if (t == 1.0) return to;
  JointState out;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const double v = from[j] + t * (to[j] - from[j]);
    // Keep the blend inside the segment despite rounding.
    out[j] = std::clamp(v, std::min(from[j], to[j]), std::max(from[j], to[j]));
  }
  return out;
}

std::vector<TrajectorySample> trajectory(const JointState& from, const JointState& to,
                                         double duration_s, double rate_hz) {
  if (!(duration_s > 0.0) || !(rate_hz > 0.0)) {
    throw ArgumentError(fmt::format("trajectory: duration {} s and rate {} Hz must be positive",
                                    duration_s, rate_hz));
  }
  // 0.6 * 50 is 30 in exact arithmetic; do not let rounding add a step.
  const double exact_steps = duration_s * rate_hz;
  const auto steps = static_cast<std::size_t>(
      std::max(1.0, std::ceil(exact_steps * (1.0 - 1e-12))));
  std::vector<TrajectorySample> out;
  out.reserve(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    const double t = i == steps ? 1.0 : static_cast<double>(i) / static_cast<double>(steps);
    out.push_back({duration_s * t, interpolate(from, to, t)});
  }
  return out;
}

std::vector<std::size_t> validate_limits(const JointState& state, const JointLimits& limits) {
  std::vector<std::size_t> bad;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    if (!(state[j] >= limits.min[j] && state[j] <= limits.max[j])) bad.push_back(j);
  }
  return bad;
}

}  // namespace sonopipe
