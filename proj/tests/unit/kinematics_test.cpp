#include <doctest.h>

#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "json.hpp"
#include "sonopipe/error.hpp"
#include "sonopipe/kinematics.hpp"
#include "temp_dir.hpp"

using namespace sonopipe;

namespace {

nlohmann::json shipped_config() {
  std::ifstream in(std::string(SONOPIPE_SOURCE_DIR) + "/config/poses.json");
  REQUIRE(in);
  return nlohmann::json::parse(in);
}

JointLimits symmetric_limits(double lim) {
  JointLimits l;
  l.min.fill(-lim);
  l.max.fill(lim);
  return l;
}

}  // namespace

TEST_SUITE("kinematics") {

TEST_CASE("joint names are unique and fourteen") {
  CHECK(kJointNames.size() == 14);
  std::set<std::string_view> names(kJointNames.begin(), kJointNames.end());
  CHECK(names.size() == 14);
}

TEST_CASE("compiled-in presets equal the shipped config") {
  const auto cfg = shipped_config();
  const PosePresets& p = default_presets();
  constexpr double rad = std::numbers::pi / 180.0;
  for (GestureLabel g : kAllGestures) {
    const auto& pose = cfg.at(std::string(gesture_name(g)));
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const double deg = pose.at(std::string(kJointNames[j])).get<double>();
      CHECK(pose_for(g, p)[j] == doctest::Approx(deg * rad).epsilon(1e-15));
    }
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const auto lim = cfg.at("limits").at(std::string(kJointNames[j]));
    CHECK(p.limits().min[j] == doctest::Approx(lim[0].get<double>() * rad));
    CHECK(p.limits().max[j] == doctest::Approx(lim[1].get<double>() * rad));
  }
}

TEST_CASE("rest and power grip differ in at least eight joints") {
  const auto cfg = shipped_config();
  int differ = 0;
  for (auto name : kJointNames) {
    const std::string key(name);
    if (cfg["rest"][key] != cfg["power_grip"][key]) ++differ;
  }
  CHECK(differ >= 8);
}

TEST_CASE("pose_for is a pure lookup and every preset is within limits") {
  const PosePresets& p = default_presets();
  for (GestureLabel g : kAllGestures) {
    CHECK(pose_for(g, p) == pose_for(g, p));
    CHECK(validate_limits(pose_for(g, p), p.limits()).empty());
  }
  CHECK(pose_for(GestureLabel::Rest, p) == p.pose(GestureLabel::Rest));
}

TEST_CASE("interpolate") {
  JointState a{}, b{};
  b.fill(1.0);
  CHECK(interpolate(a, b, 0.0) == a);
  CHECK(interpolate(a, b, 1.0) == b);
  for (double v : interpolate(a, b, 0.5)) CHECK(v == 0.5);
  CHECK_THROWS_AS(interpolate(a, b, 1.5), ArgumentError);
  CHECK_THROWS_AS(interpolate(a, b, -0.1), ArgumentError);
}

TEST_CASE("interpolating valid poses stays valid") {
  const PosePresets& p = default_presets();
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const auto from = pose_for(static_cast<GestureLabel>(gen() % 4), p);
    const auto to = pose_for(static_cast<GestureLabel>(gen() % 4), p);
    CHECK(validate_limits(interpolate(from, to, u(gen)), p.limits()).empty());
  }
}

TEST_CASE("trajectory") {
  const PosePresets& p = default_presets();
  const auto from = pose_for(GestureLabel::Rest, p);
  const auto to = pose_for(GestureLabel::PowerGrip, p);
  const auto tr = trajectory(from, to, 0.6, 50.0);
  REQUIRE(tr.size() == 31);
  CHECK(tr.front().state == from);
  CHECK(tr.back().state == to);
  CHECK(tr.front().offset_s == 0.0);
  CHECK(tr.back().offset_s == 0.6);
  for (std::size_t i = 1; i < tr.size(); ++i) {
    CHECK(tr[i].offset_s > tr[i - 1].offset_s);
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      // Every power-grip joint is at or beyond its rest angle.
      CHECK(tr[i].state[j] >= tr[i - 1].state[j]);
    }
  }
  for (const auto& s : trajectory(from, from, 0.6, 50.0)) CHECK(s.state == from);
  CHECK(trajectory(from, to, 0.61, 50.0).size() == 32);
  CHECK_THROWS_AS(trajectory(from, to, 0.0, 50.0), ArgumentError);
  CHECK_THROWS_AS(trajectory(from, to, 0.6, -1.0), ArgumentError);
}

TEST_CASE("validate_limits") {
  const JointLimits l = symmetric_limits(std::numbers::pi);
  JointState s{};
  CHECK(validate_limits(s, l).empty());
  s[6] = std::numbers::pi + 0.01;
  CHECK(validate_limits(s, l) == std::vector<std::size_t>{6});
  s[6] = std::numbers::pi;
  CHECK(validate_limits(s, l).empty());
}

TEST_CASE("preset validation") {
  std::array<JointState, kNumGestures> poses{};
  CHECK_NOTHROW(PosePresets(poses, symmetric_limits(1.0)));
  poses[2][3] = 2.0;
  CHECK_THROWS_AS(PosePresets(poses, symmetric_limits(1.0)), ArgumentError);
  poses[2][3] = 0.0;
  JointLimits inverted = symmetric_limits(1.0);
  inverted.min[0] = 1.0;
  CHECK_THROWS_AS(PosePresets(poses, inverted), ArgumentError);
}

TEST_CASE("preset files") {
  test::TempDir dir;
  auto cfg = shipped_config();
  std::ofstream(dir / "ok.json") << cfg.dump();
  const PosePresets p = load_presets(dir / "ok.json");
  CHECK(p.pose(GestureLabel::Point) == default_presets().pose(GestureLabel::Point));

  auto missing = cfg;
  missing["point"].erase("base_roll");
  CHECK_THROWS_AS(presets_from_json(missing.dump()), FormatError);
  auto out_of_range = cfg;
  out_of_range["rest"]["index_pip"] = 200;
  CHECK_THROWS(presets_from_json(out_of_range.dump()));
  CHECK_THROWS_AS(presets_from_json("nope"), FormatError);
  CHECK_THROWS(load_presets(dir / "absent.json"));
}

}  // TEST_SUITE
