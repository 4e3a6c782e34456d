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

#include "fdpo/forecast_parser.h"

#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <vector>

#include "fdpo/error.h"

namespace fdpo {
namespace {

bool IsDigit(char c) { return c >= '0' && c <= '9'; }

// Matches the whole of `s` against  digits ['.' digits] | '.' digits.
bool IsDecimal(std::string_view s) {
  std::size_t i = 0;
  const std::size_t int_begin = i;
  while (i < s.size() && IsDigit(s[i])) ++i;
  const bool has_int = i > int_begin;
  if (i == s.size()) return has_int;
  if (s[i] != '.') return false;
  ++i;
  const std::size_t frac_begin = i;
  while (i < s.size() && IsDigit(s[i])) ++i;
  return i == s.size() && i > frac_begin;
}

double ToDouble(std::string_view s) {
  double v = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

std::string_view Trim(std::string_view s, std::size_t& offset) {
  std::size_t b = 0;
  while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  std::size_t e = s.size();
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  offset = b;
  return s.substr(b, e - b);
}

struct Run {
  std::size_t begin;
  std::size_t end;
};

std::optional<ParsedForecast> BareFallback(std::string_view text) {
  static constexpr std::string_view kCues[] = {"answer", "prediction",
                                               "probability"};
  std::string lower(text);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::optional<ParsedForecast> best;
  for (std::size_t i = 0; i < text.size();) {
    if (!(IsDigit(text[i]) || text[i] == '.') ||
        (i > 0 && (IsDigit(text[i - 1]) || text[i - 1] == '.'))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && (IsDigit(text[j]) || text[j] == '.')) ++j;
    std::string_view token = text.substr(i, j - i);
    if (!token.empty() && token.back() == '.') token.remove_suffix(1);
    const bool percent = j < text.size() && text[j] == '%';
    if (!percent && IsDecimal(token)) {
      const double v = ToDouble(token);
      const std::string_view before =
          std::string_view(lower).substr(i >= 40 ? i - 40 : 0, i >= 40 ? 40 : i);
      bool cued = false;
      for (auto cue : kCues) cued |= before.find(cue) != std::string_view::npos;
      if (cued && v >= 0.0 && v <= 1.0) {
        best = ParsedForecast{v, i, i + token.size()};
      }
    }
    i = j;
  }
  return best;
}

}  // namespace

const char* ToString(ParseError e) {
  switch (e) {
    case ParseError::kNoForecastFound:
      return "no_forecast_found";
    case ParseError::kOutOfRange:
      return "out_of_range";
  }
  return "unknown";
}

ParseResult ParseForecast(std::string_view text, ParseStrictness strictness) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] != '*') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && text[j] == '*') ++j;
    runs.push_back({i, j});
    i = j;
  }

  bool saw_out_of_range = false;
  for (std::size_t k = runs.size(); k >= 2; --k) {
    const Run& open = runs[k - 2];
    const Run& close = runs[k - 1];
    std::size_t begin = open.end;
    std::string_view inner = text.substr(begin, close.begin - begin);
    if (strictness == ParseStrictness::kLenient) {
      std::size_t offset = 0;
      inner = Trim(inner, offset);
      begin += offset;
    }
    if (!IsDecimal(inner)) continue;
    const double v = ToDouble(inner);
    if (v < 0.0 || v > 1.0) {
      saw_out_of_range = true;
      continue;
    }
    return ParsedForecast{v, begin, begin + inner.size()};
  }
  if (strictness == ParseStrictness::kLenient && !saw_out_of_range) {
    if (auto bare = BareFallback(text)) return *bare;
  }
  return saw_out_of_range ? ParseError::kOutOfRange
                          : ParseError::kNoForecastFound;
}

ParsedForecast ParseForecastOrThrow(std::string_view text,
                                    ParseStrictness strictness) {
  auto result = ParseForecast(text, strictness);
  if (auto* err = std::get_if<ParseError>(&result)) {
    throw Error(ToString(*err), std::string(text.substr(0, 80)));
  }
  return std::get<ParsedForecast>(result);
}

std::int64_t CanonicalMicros(double probability) {
  return std::llround(probability * 1e6);
}

std::string FormatProbability(double probability) {
  const std::int64_t micros = CanonicalMicros(probability);
  std::string out = std::to_string(micros / 1000000);
  std::int64_t frac = micros % 1000000;
  if (frac != 0) {
    std::string digits = std::to_string(frac);
    digits.insert(0, 6 - digits.size(), '0');
    while (digits.back() == '0') digits.pop_back();
    out += "." + digits;
  }
  return out;
}

}  // namespace fdpo
