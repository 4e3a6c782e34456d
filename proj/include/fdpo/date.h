/*
 * Copyright 2026 The fdpo Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FDPO_DATE_H_
#define FDPO_DATE_H_

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace fdpo {

// A UTC calendar date. Stored as days since the Unix epoch.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::sys_days days) : days_(days) {}
  Date(int year, unsigned month, unsigned day);

  // Accepts "YYYY-MM-DD", optionally followed by a time part starting with
  // 'T' or ' ' (the time is dropped; timestamps are assumed to be UTC).
  static std::optional<Date> Parse(std::string_view text);
  // Throws fdpo::Error("malformed_date") on failure.
  static Date ParseOrThrow(std::string_view text);

  std::string ToString() const;
  std::chrono::sys_days days() const { return days_; }

  Date operator+(std::chrono::days d) const { return Date(days_ + d); }
  Date operator-(std::chrono::days d) const { return Date(days_ - d); }
  std::chrono::days operator-(const Date& other) const {
    return days_ - other.days_;
  }

  auto operator<=>(const Date&) const = default;

 private:
  std::chrono::sys_days days_{};
};

using Timestamp = std::chrono::sys_seconds;

// ISO-8601 "YYYY-MM-DDTHH:MM:SS" with optional trailing 'Z'; a bare date is
// midnight UTC.
std::optional<Timestamp> ParseTimestamp(std::string_view text);
std::string FormatTimestamp(Timestamp ts);

inline Timestamp StartOfDay(const Date& d) {
  return std::chrono::time_point_cast<std::chrono::seconds>(d.days());
}

}  // namespace fdpo

#endif  // FDPO_DATE_H_
