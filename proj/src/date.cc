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

#include "fdpo/date.h"

#include <charconv>
#include <cstdio>

#include "fdpo/error.h"

namespace fdpo {
namespace {

bool ParseInt(std::string_view text, int& out) {
  if (text.empty()) return false;
  for (char c : text) {
    if (c < '0' || c > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

Date::Date(int year, unsigned month, unsigned day)
    : days_(std::chrono::year{year} / std::chrono::month{month} /
            std::chrono::day{day}) {}

std::optional<Date> Date::Parse(std::string_view text) {
  if (text.size() > 10) {
    const char sep = text[10];
    if (sep != 'T' && sep != ' ') return std::nullopt;
  }
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!ParseInt(text.substr(0, 4), y) || !ParseInt(text.substr(5, 2), m) ||
      !ParseInt(text.substr(8, 2), d)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{
      std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
      std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date(std::chrono::sys_days{ymd});
}

Date Date::ParseOrThrow(std::string_view text) {
  auto d = Parse(text);
  if (!d) throw Error("malformed_date", std::string(text));
  return *d;
}

std::string Date::ToString() const {
  const std::chrono::year_month_day ymd{days_};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

std::optional<Timestamp> ParseTimestamp(std::string_view text) {
  auto date = Date::Parse(text.substr(0, std::min<std::size_t>(10, text.size())));
  if (!date) return std::nullopt;
  Timestamp ts = StartOfDay(*date);
  if (text.size() == 10) return ts;
  std::string_view rest = text.substr(10);
  if (rest.front() != 'T' && rest.front() != ' ') return std::nullopt;
  rest.remove_prefix(1);
  if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
  // Fractional seconds are accepted and truncated.
  if (auto dot = rest.find('.'); dot != std::string_view::npos) {
    rest = rest.substr(0, dot);
  }
  int h = 0, mi = 0, s = 0;
  if (rest.size() == 8 && rest[2] == ':' && rest[5] == ':') {
    if (!ParseInt(rest.substr(0, 2), h) || !ParseInt(rest.substr(3, 2), mi) ||
        !ParseInt(rest.substr(6, 2), s)) {
      return std::nullopt;
    }
  } else if (rest.size() == 5 && rest[2] == ':') {
    if (!ParseInt(rest.substr(0, 2), h) || !ParseInt(rest.substr(3, 2), mi)) {
      return std::nullopt;
    }
  } else {
    return std::nullopt;
  }
  if (h > 23 || mi > 59 || s > 60) return std::nullopt;
  return ts + std::chrono::hours{h} + std::chrono::minutes{mi} +
         std::chrono::seconds{s};
}

std::string FormatTimestamp(Timestamp ts) {
  const auto day = std::chrono::floor<std::chrono::days>(ts);
  const std::chrono::hh_mm_ss hms{ts - day};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%sT%02d:%02d:%02dZ",
                Date(day).ToString().c_str(), int(hms.hours().count()),
                int(hms.minutes().count()), int(hms.seconds().count()));
  return buf;
}

}  // namespace fdpo
