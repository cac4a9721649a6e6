#pragma once

#include <chrono>
#include <cstdint>

namespace sonopipe {

/// Shared time base of one pipeline run. Frame timestamps are microseconds
/// since `epoch`; wire timestamps add the wall-clock time of the epoch.
struct PipelineClock {
  std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now();
  std::uint64_t epoch_unix_us = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::microseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());

  std::uint64_t now_us() const {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::steady_clock::now() - epoch)
            .count());
  }

  std::chrono::steady_clock::time_point at(std::uint64_t us) const {
    return epoch + std::chrono::microseconds(us);
  }
};

}  // namespace sonopipe
