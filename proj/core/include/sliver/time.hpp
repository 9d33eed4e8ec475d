#pragma once

#include <chrono>
#include <cstdint>
#include <limits>

namespace sliver {

/// Event-time clock of a stream. Epoch is the start of the log; resolution is
/// one millisecond. There is no now(): stream time only advances with events.
struct StreamClock {
  using rep = std::int64_t;
  using period = std::milli;
  using duration = std::chrono::duration<rep, period>;
  using time_point = std::chrono::time_point<StreamClock, duration>;
  static constexpr bool is_steady = true;
};

using Duration = StreamClock::duration;
using Timestamp = StreamClock::time_point;

constexpr Timestamp from_ms(std::int64_t ms) { return Timestamp{Duration{ms}}; }
constexpr std::int64_t to_ms(Timestamp ts) { return ts.time_since_epoch().count(); }
constexpr std::int64_t to_ms(Duration d) { return d.count(); }

inline constexpr Timestamp kStreamEpoch = from_ms(0);
inline constexpr Timestamp kEndOfTime = from_ms(std::numeric_limits<std::int64_t>::max());

}  // namespace sliver
