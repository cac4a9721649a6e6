#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace sonopipe {

/// The four hand gestures. Ordinals are part of the wire and file formats.
enum class GestureLabel : std::uint8_t {
  Rest = 0,
  PowerGrip = 1,
  WristPronation = 2,
  Point = 3,
};

inline constexpr std::size_t kNumGestures = 4;

inline constexpr std::array<GestureLabel, kNumGestures> kAllGestures = {
    GestureLabel::Rest, GestureLabel::PowerGrip, GestureLabel::WristPronation,
    GestureLabel::Point};

constexpr std::size_t ordinal(GestureLabel label) {
  return static_cast<std::size_t>(label);
}

/// Snake-case wire name ("rest", "power_grip", "wrist_pronation", "point").
constexpr std::string_view gesture_name(GestureLabel label) {
  constexpr std::array<std::string_view, kNumGestures> names = {
      "rest", "power_grip", "wrist_pronation", "point"};
  return names[ordinal(label)];
}

constexpr std::optional<GestureLabel> parse_gesture(std::string_view name) {
  for (GestureLabel g : kAllGestures) {
    if (gesture_name(g) == name) return g;
  }
  return std::nullopt;
}

constexpr std::optional<GestureLabel> gesture_from_ordinal(std::size_t i) {
  if (i >= kNumGestures) return std::nullopt;
  return static_cast<GestureLabel>(i);
}

}  // namespace sonopipe
