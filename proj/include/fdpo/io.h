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

#ifndef FDPO_IO_H_
#define FDPO_IO_H_

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace fdpo {

using Json = nlohmann::json;

// Lowercase hex SHA-256 of `data`.
std::string Sha256Hex(std::string_view data);

std::string ReadFile(const std::filesystem::path& path);

// Writes `contents` to a sibling temporary file and renames it over `path`, so
// readers never observe a partial file. The temporary is removed on failure.
void WriteFileAtomic(const std::filesystem::path& path,
                     std::string_view contents);

// Line-delimited JSON. Blank lines are skipped; a malformed line throws
// Error("malformed_jsonl") naming the line number.
std::vector<Json> ReadJsonLines(const std::filesystem::path& path);
std::string ToJsonLines(const std::vector<Json>& records);

// Serialized JSON with sorted keys and no insignificant whitespace, so equal
// values always hash identically.
std::string CanonicalDump(const Json& value);

// Small helpers for reading typed fields out of records.
std::string RequireString(const Json& record, const char* field);
double RequireNumber(const Json& record, const char* field);

}  // namespace fdpo

#endif  // FDPO_IO_H_
