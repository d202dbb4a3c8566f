#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace nqs {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

Timestamp now_utc();

// ISO-8601 UTC with millisecond precision, e.g. 2024-05-01T12:00:00.000Z.
std::string format_timestamp(Timestamp ts);

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS[.fff]Z" (Z optional).
std::optional<Timestamp> parse_timestamp(std::string_view s);

}  // namespace nqs
