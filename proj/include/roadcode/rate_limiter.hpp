/* Copyright 2026 The roadcode Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <algorithm>
#include <chrono>
#include <mutex>
#include <thread>

namespace roadcode {

/// Token bucket admitting `rate_per_minute` requests on average with bursts
/// of at most `burst`. acquire() blocks the caller until a token is free;
/// waiters are served in arrival order of their reservation.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;

  explicit RateLimiter(double rate_per_minute, double burst = 1.0)
      : interval_(std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(60.0 / rate_per_minute))),
        burst_(std::max(1.0, burst)),
        next_free_(Clock::now() - std::chrono::duration_cast<Clock::duration>(interval_ * (burst_ - 1.0))) {}

  /// Reserves a slot and sleeps until it opens. Returns the time waited.
  Clock::duration acquire() {
    Clock::time_point slot;
    {
      std::lock_guard lock(mutex_);
      const auto now = Clock::now();
      // Tokens do not accumulate beyond the burst size.
      const auto earliest = now - std::chrono::duration_cast<Clock::duration>(interval_ * (burst_ - 1.0));
      if (next_free_ < earliest) next_free_ = earliest;
      slot = next_free_;
      next_free_ += interval_;
    }
    const auto now = Clock::now();
    if (slot <= now) return Clock::duration::zero();
    std::this_thread::sleep_until(slot);
    return slot - now;
  }

 private:
  Clock::duration interval_;
  double burst_;
  Clock::time_point next_free_;
  std::mutex mutex_;
};

}  // namespace roadcode
