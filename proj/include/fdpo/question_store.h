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

#ifndef FDPO_QUESTION_STORE_H_
#define FDPO_QUESTION_STORE_H_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fdpo/date.h"
#include "fdpo/io.h"

namespace fdpo {

// One resolved binary question. `outcome` is 1 if the event happened.
struct Question {
  std::string id;
  std::string title;
  std::string background;
  std::string resolution_criteria;
  Date close_date;
  Date resolution_date;
  int outcome = 0;

  Json ToJson() const;
  static Question FromJson(const Json& record);
};

// Record-level rejection reasons produced by Ingest.
inline constexpr char kMissingField[] = "missing_field";
inline constexpr char kMalformedDate[] = "malformed_date";
inline constexpr char kNonBinaryOutcome[] = "non_binary_outcome";
inline constexpr char kDuplicateId[] = "duplicate_id";

struct Rejection {
  std::size_t index = 0;  // position in the input sequence
  std::string id;         // empty if the record had no usable id
  std::string reason;
  std::string detail;
};

// Immutable after construction; safe for concurrent reads. Questions are kept
// sorted by id.
class QuestionStore {
 public:
  QuestionStore() = default;

  // Throws Error(kDuplicateId) if two questions share an id.
  explicit QuestionStore(std::vector<Question> questions);

  std::size_t size() const { return questions_.size(); }
  bool empty() const { return questions_.empty(); }
  const Question* Find(const std::string& id) const;
  bool Contains(const std::string& id) const { return Find(id) != nullptr; }

  const std::vector<Question>& questions() const { return questions_; }
  auto begin() const { return questions_.begin(); }
  auto end() const { return questions_.end(); }

  // Canonical form: one JSON object per line, sorted by id.
  std::string Serialize() const;
  void Save(const std::filesystem::path& path) const;
  static QuestionStore Load(const std::filesystem::path& path);

 private:
  std::vector<Question> questions_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct IngestResult {
  QuestionStore store;
  std::vector<Rejection> rejected;
  std::size_t accepted() const { return store.size(); }
};

// Validates raw records. Record fields: id, title, background,
// resolution_criteria, close_date, resolution_date, outcome. The outcome must
// be exactly 0/1 (integer) or "0"/"1" (string); anything else is rejected.
// Questions already in `existing` are carried over, and a record whose id is
// already present is rejected as a duplicate.
IngestResult Ingest(std::span<const Json> records,
                    const QuestionStore& existing = {});

// Column names of the CSV header that supply each question field.
struct CsvColumnMapping {
  std::string id = "id";
  std::string title = "title";
  std::string background = "background";
  std::string resolution_criteria = "resolution_criteria";
  std::string close_date = "close_date";
  std::string resolution_date = "resolution_date";
  std::string outcome = "outcome";
};

// Parses RFC-4180 CSV with a header row into raw records suitable for Ingest.
// Unmapped columns are ignored; absent optional text columns become "".
std::vector<Json> ReadCsvRecords(std::istream& in,
                                 const CsvColumnMapping& mapping = {});

struct Partition {
  Date train_start;
  Date train_end;
  Date test_start;
  Date test_end;

  // Training window 2024-07-01..2024-12-15, test window
  // 2024-12-25..2025-01-23.
  static Partition Default();

  // Throws ConfigError("invalid_partition") unless start <= end for both
  // windows and train_end < test_start.
  void Validate() const;

  Json ToJson() const;
  static Partition FromJson(const Json& j);
};

struct Split {
  std::vector<Question> train;
  std::vector<Question> test;
};

// Bounds are inclusive. A question whose resolution date falls between the
// windows is in neither split.
Split PartitionStore(const QuestionStore& store, const Partition& partition);

}  // namespace fdpo

#endif  // FDPO_QUESTION_STORE_H_
