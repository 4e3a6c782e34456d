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

#ifndef FDPO_ERROR_H_
#define FDPO_ERROR_H_

#include <stdexcept>
#include <string>

namespace fdpo {

// Every failure the pipeline reports carries a stable machine-readable code
// (e.g. "non_binary_outcome", "empty_dataset") next to a human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}
  explicit Error(std::string code)
      : std::runtime_error(code), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Invalid configuration or missing prerequisites. The CLI maps this to exit
// status 2; every other Error maps to 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fdpo

#endif  // FDPO_ERROR_H_
