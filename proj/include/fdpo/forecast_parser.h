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

#ifndef FDPO_FORECAST_PARSER_H_
#define FDPO_FORECAST_PARSER_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

namespace fdpo {

struct ParsedForecast {
  double probability = 0.0;
  // Byte offsets [begin, end) of the number inside the source text.
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
};

enum class ParseError {
  kNoForecastFound,  // "no_forecast_found"
  kOutOfRange,       // "out_of_range": only out-of-range starred numbers
};

const char* ToString(ParseError e);

enum class ParseStrictness {
  // Only `*<decimal>*` exactly, with runs of asterisks treated as one
  // delimiter.
  kStrict,
  // Additionally trims whitespace inside the delimiters and, when no starred
  // number exists, falls back to the last bare decimal in [0, 1] preceded by
  // "answer", "prediction" or "probability".
  kLenient,
};

using ParseResult = std::variant<ParsedForecast, ParseError>;

// Finds the last `*<number>*` in `text` whose value lies in [0, 1]. Accepted
// number forms: "0", "1", "0.xxx", "1.0", ".xxx" (any digits). Percentages
// never match.
ParseResult ParseForecast(std::string_view text,
                          ParseStrictness strictness = ParseStrictness::kStrict);

// Throws Error("no_forecast_found" | "out_of_range").
ParsedForecast ParseForecastOrThrow(
    std::string_view text, ParseStrictness strictness = ParseStrictness::kStrict);

// Probabilities are compared after rounding to 6 decimal places; this is the
// single definition of "identical forecast" used by selfplay and reranker.
std::int64_t CanonicalMicros(double probability);
inline bool SameForecast(double a, double b) {
  return CanonicalMicros(a) == CanonicalMicros(b);
}

// Shortest plain decimal for p rounded to 6 places ("0.42", "1", "0.000001").
std::string FormatProbability(double probability);

}  // namespace fdpo

#endif  // FDPO_FORECAST_PARSER_H_
