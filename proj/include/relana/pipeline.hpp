// Copyright 2026 The relana Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "relana/catalog.hpp"
#include "relana/confidence.hpp"
#include "relana/cooccur.hpp"
#include "relana/embed.hpp"
#include "relana/evalharness.hpp"

namespace relana::pipeline {

inline constexpr const char* kToolVersion = "0.3.0";

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  std::filesystem::path path;        // csv only
  catalog::CsvSchema schema;
  catalog::SyntheticSpec synthetic;
  std::filesystem::path labels;  // optional item_id,label CSV
};

struct MechanismConfig {
  std::string kind = "sequence";  // sequence | graph
  catalog::SequenceOptions sequence;
  catalog::WalkOptions walk;
};

struct FilterConfig {
  bool enabled = false;
  double level = 0.6;
  confidence::Inversion inversion = confidence::Inversion::Lower;
  std::vector<double> sweep;  // extra levels reported as drop fractions only
};

struct TrainConfig {
  std::string method = "sgns";  // sgns | ldr
  embed::SgnsConfig sgns;
  embed::LdrConfig ldr;
  embed::ExportSide side = embed::ExportSide::Input;
};

struct EvalConfig {
  std::vector<std::string> tasks;  // rec, cls, cart, align
  std::size_t k = 10;
  std::uint32_t reps = 1;
  std::size_t sampled_negatives = 0;
  evalharness::SoftmaxOptions softmax;
  std::vector<std::size_t> align_dims;  // empty: the trained dimension only
  bool has(std::string_view task) const;
};

struct PipelineConfig {
  DataConfig data;
  MechanismConfig mechanism;
  cooccur::RoleConvention convention = cooccur::RoleConvention::BothRoles;
  FilterConfig filter;
  TrainConfig train;
  EvalConfig eval;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::filesystem::path output_dir;

  /// Throws ValidationError; checks paths and ranges before any stage runs.
  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown keys and a missing seed are validation errors.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  /// Checksum of the canonical JSON serialisation.
  std::string hash() const;
};

/// min(requested, RELANA_THREADS) when the variable is set, at least 1.
unsigned thread_cap(unsigned requested);

struct StageRecord {
  std::string name;
  double wall_seconds = 0.0;
  bool resumed = false;
  std::map<std::string, std::string> artifacts;  // file name -> checksum
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config_hash;
  std::vector<StageRecord> stages;

  const StageRecord* stage(std::string_view name) const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  static RunManifest load(const std::filesystem::path& path);
  /// Every artifact checksum, keyed "stage/file"; wall times excluded.
  std::map<std::string, std::string> checksums() const;
};

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& cause)
      : std::runtime_error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Runs ingest, pairs, count, clean, train and eval in order inside
/// output_dir, writing manifest.json. A stage whose recorded artifacts still
/// match (same config hash) is skipped.
RunManifest run_pipeline(const PipelineConfig& config);

/// Removes the last two records of every user with at least three, so the
/// held-out items never reach training.
catalog::InteractionLog training_log(const catalog::InteractionLog& log);

/// Drops stream pairs whose count in `table` is zero.
catalog::PairStream restrict_stream(const catalog::PairStream& stream, const cooccur::CooccurrenceTable& table);

/// Labels from an item_id,label CSV; label strings are mapped to dense class ids
/// in sorted order. Items without a label get -1.
std::vector<std::int64_t> read_labels(const std::filesystem::path& path, const catalog::Vocabulary& vocab,
                                      std::vector<std::string>* class_names = nullptr);
void write_labels(const std::filesystem::path& path, const catalog::Vocabulary& vocab,
                  const std::vector<std::uint32_t>& labels);

}  // namespace relana::pipeline
