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

#include "fdpo/question_store.h"

#include <algorithm>
#include <istream>

#include "fdpo/error.h"

namespace fdpo {
namespace {

// Returns the outcome if the field holds exactly one of the binary tokens.
std::optional<int> ParseOutcome(const Json& field) {
  if (field.is_number_integer() || field.is_number_unsigned()) {
    const auto v = field.get<long long>();
    if (v == 0 || v == 1) return static_cast<int>(v);
    return std::nullopt;
  }
  if (field.is_string()) {
    const auto& s = field.get_ref<const std::string&>();
    if (s == "0") return 0;
    if (s == "1") return 1;
  }
  return std::nullopt;
}

std::string OptionalString(const Json& record, const char* field) {
  auto it = record.find(field);
  if (it == record.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

}  // namespace

Json Question::ToJson() const {
  return Json{{"id", id},
              {"title", title},
              {"background", background},
              {"resolution_criteria", resolution_criteria},
              {"close_date", close_date.ToString()},
              {"resolution_date", resolution_date.ToString()},
              {"outcome", outcome}};
}

Question Question::FromJson(const Json& record) {
  Question q;
  q.id = RequireString(record, "id");
  q.title = RequireString(record, "title");
  q.background = OptionalString(record, "background");
  q.resolution_criteria = OptionalString(record, "resolution_criteria");
  q.close_date = Date::ParseOrThrow(RequireString(record, "close_date"));
  q.resolution_date =
      Date::ParseOrThrow(RequireString(record, "resolution_date"));
  auto it = record.find("outcome");
  if (it == record.end()) throw Error(kMissingField, "outcome");
  auto outcome = ParseOutcome(*it);
  if (!outcome) throw Error(kNonBinaryOutcome, it->dump());
  q.outcome = *outcome;
  return q;
}

QuestionStore::QuestionStore(std::vector<Question> questions)
    : questions_(std::move(questions)) {
  std::sort(questions_.begin(), questions_.end(),
            [](const Question& a, const Question& b) { return a.id < b.id; });
  index_.reserve(questions_.size());
  for (std::size_t i = 0; i < questions_.size(); ++i) {
    if (!index_.emplace(questions_[i].id, i).second) {
      throw Error(kDuplicateId, questions_[i].id);
    }
  }
}

const Question* QuestionStore::Find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &questions_[it->second];
}

std::string QuestionStore::Serialize() const {
  std::string out;
  for (const auto& q : questions_) {
    out += CanonicalDump(q.ToJson());
    out += '\n';
  }
  return out;
}

void QuestionStore::Save(const std::filesystem::path& path) const {
  WriteFileAtomic(path, Serialize());
}

QuestionStore QuestionStore::Load(const std::filesystem::path& path) {
  std::vector<Question> questions;
  for (const auto& record : ReadJsonLines(path)) {
    questions.push_back(Question::FromJson(record));
  }
  return QuestionStore(std::move(questions));
}

IngestResult Ingest(std::span<const Json> records,
                    const QuestionStore& existing) {
  IngestResult result;
  std::vector<Question> accepted = existing.questions();
  std::unordered_map<std::string, bool> seen;
  for (const auto& q : accepted) seen.emplace(q.id, true);

  for (std::size_t i = 0; i < records.size(); ++i) {
    const Json& record = records[i];
    Rejection rejection{.index = i};
    if (record.is_object()) {
      if (auto it = record.find("id"); it != record.end() && it->is_string()) {
        rejection.id = it->get<std::string>();
      }
    }
    try {
      if (!record.is_object()) throw Error(kMissingField, "record is not an object");
      Question q = Question::FromJson(record);
      if (q.id.empty()) throw Error(kMissingField, "id");
      if (!seen.emplace(q.id, true).second) throw Error(kDuplicateId, q.id);
      accepted.push_back(std::move(q));
    } catch (const Error& e) {
      rejection.reason = e.code();
      rejection.detail = e.what();
      result.rejected.push_back(std::move(rejection));
    }
  }
  result.store = QuestionStore(std::move(accepted));
  return result;
}

namespace {

// Splits one logical CSV row; quoted fields may contain newlines, so this
// pulls further physical lines from `in` as needed.
bool ReadCsvRow(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0;; ++i) {
    if (i == line.size()) {
      if (quoted) {
        field += '\n';
        if (!std::getline(in, line)) {
          throw Error("malformed_csv", "unterminated quoted field");
        }
        i = static_cast<std::size_t>(-1);
        continue;
      }
      break;
    }
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r' && i + 1 == line.size()) {
      // CRLF line ending.
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return true;
}

}  // namespace

std::vector<Json> ReadCsvRecords(std::istream& in,
                                 const CsvColumnMapping& mapping) {
  std::vector<std::string> header;
  if (!ReadCsvRow(in, header)) return {};
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::pair<const char*, const std::string*> fields[] = {
      {"id", &mapping.id},
      {"title", &mapping.title},
      {"background", &mapping.background},
      {"resolution_criteria", &mapping.resolution_criteria},
      {"close_date", &mapping.close_date},
      {"resolution_date", &mapping.resolution_date},
      {"outcome", &mapping.outcome},
  };
  std::vector<std::pair<const char*, std::optional<std::size_t>>> columns;
  for (const auto& [field, name] : fields) {
    columns.emplace_back(field, column(*name));
  }

  std::vector<Json> records;
  std::vector<std::string> row;
  while (ReadCsvRow(in, row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    Json record = Json::object();
    for (const auto& [field, index] : columns) {
      if (index && *index < row.size()) record[field] = row[*index];
    }
    records.push_back(std::move(record));
  }
  return records;
}

Partition Partition::Default() {
  return Partition{Date(2024, 7, 1), Date(2024, 12, 15), Date(2024, 12, 25),
                   Date(2025, 1, 23)};
}

void Partition::Validate() const {
  if (train_start > train_end || test_start > test_end) {
    throw ConfigError("invalid_partition", "window start after end");
  }
  if (!(train_end < test_start)) {
    throw ConfigError("invalid_partition",
                      "train_end " + train_end.ToString() +
                          " must precede test_start " + test_start.ToString());
  }
}

Json Partition::ToJson() const {
  return Json{{"train_start", train_start.ToString()},
              {"train_end", train_end.ToString()},
              {"test_start", test_start.ToString()},
              {"test_end", test_end.ToString()}};
}

Partition Partition::FromJson(const Json& j) {
  auto date = [&](const char* field) {
    auto d = Date::Parse(RequireString(j, field));
    if (!d) throw ConfigError("invalid_partition", std::string("bad ") + field);
    return *d;
  };
  return Partition{date("train_start"), date("train_end"), date("test_start"),
                   date("test_end")};
}

Split PartitionStore(const QuestionStore& store, const Partition& partition) {
  partition.Validate();
  Split split;
  for (const auto& q : store) {
    const Date r = q.resolution_date;
    if (partition.train_start <= r && r <= partition.train_end) {
      split.train.push_back(q);
    } else if (partition.test_start <= r && r <= partition.test_end) {
      split.test.push_back(q);
    }
  }
  return split;
}

}  // namespace fdpo
