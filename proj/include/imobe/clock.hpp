#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace imobe {

// Milliseconds since the Unix epoch.
using TimestampMs = std::int64_t;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampMs now_ms() const = 0;
};

class SystemClock final : public Clock {
 public:
  TimestampMs now_ms() const override {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }
};

// Deterministic clock for tests and the scenario simulator.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimestampMs start = 1'700'000'000'000) : now_(start) {}

  TimestampMs now_ms() const override { return now_.load(); }
  void set(TimestampMs t) { now_.store(t); }
  void advance(TimestampMs delta) { now_.fetch_add(delta); }

 private:
  std::atomic<TimestampMs> now_;
};

}  // namespace imobe
