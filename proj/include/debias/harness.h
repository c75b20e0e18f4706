// Copyright 2026 The debias-dg Authors.
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

// Experiment configuration, the strategy x held-out domain x seed grid, run
// records on disk, and aggregation into summary tables.
//
// Layout under the output root:
//
//   <root>/<config-hash>/config.json
//   <root>/<config-hash>/<strategy>/<held-out>/<seed>/record.json
//                                                    /history.csv
//                                                    /model.ckpt
//                                                    /projection.csv
//   <root>/<config-hash>/report/...
//
// The hash covers the data source and every training setting except the grid
// axes, so cells of one experiment share a directory. record.json is written
// last and atomically; a cell without it is incomplete and is rerun.

#ifndef DEBIAS_HARNESS_H_
#define DEBIAS_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "debias/datagen.h"
#include "debias/metrics.h"
#include "debias/trainer.h"
#include "json.hpp"

namespace debias::harness {

namespace fs = std::filesystem;

struct DataSource {
  enum class Kind { kConfounded, kRotated, kCollection };
  Kind kind = Kind::kConfounded;
  std::uint64_t seed = 1;
  data::ConfoundSpec confounded;
  data::RotatedSpec rotated;
  // Directory written by gen-data, for kCollection.
  std::string path;

  nlohmann::json ToJson() const;
  static DataSource FromJson(const nlohmann::json& j);
  std::vector<data::DomainDataset> Load() const;
};

struct ExperimentConfig {
  DataSource data;
  std::vector<train::Strategy> strategies = {train::Strategy::kErm,
                                             train::Strategy::kE2eCe,
                                             train::Strategy::kMct};
  // strategy and seed are overwritten per cell.
  train::TrainConfig train;
  // Domain names to hold out; empty means every domain in turn.
  std::vector<std::string> holdouts;
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir;
  metrics::C2stConfig c2st;
  // Rows per domain fed to the embedding C2ST; 0 disables it.
  std::size_t c2st_rows = 1000;
  // Rows per domain in the saved 2-D projection; 0 disables it.
  std::size_t scatter_rows = 300;

  void Validate() const;
  nlohmann::json ToJson() const;
  // Unknown keys are rejected; missing keys keep their defaults.
  static ExperimentConfig FromJson(const nlohmann::json& j);
  static ExperimentConfig Load(const fs::path& path);
};

nlohmann::json TrainConfigToJson(const train::TrainConfig& c);
train::TrainConfig TrainConfigFromJson(const nlohmann::json& j);

// 64-bit FNV-1a.
std::uint64_t Fnv1a(std::string_view bytes);
// Hex hash of the canonical (key-sorted) dump of the hashed part of the
// config. Key order in the source file does not matter.
std::string ConfigHash(const ExperimentConfig& c);
std::string DataSourceHash(const DataSource& d);

struct RunRecord {
  std::string config_hash;
  std::string data_hash;
  std::string strategy;
  std::string held_out;
  std::uint64_t seed = 0;
  metrics::BiasReport report;
  // Test-split score of each training domain under the shared head and under
  // that domain's own bias head.
  std::map<std::string, double> shared_own;
  std::map<std::string, double> bias_own;
  double final_validation = 0.0;
  std::size_t steps = 0;
  std::string history_path;     // relative to the record directory
  std::string checkpoint_path;  // relative to the record directory
  std::string projection_path;  // empty when not written
  double wall_seconds = 0.0;
  bool complete = false;

  nlohmann::json ToJson() const;
  static RunRecord FromJson(const nlohmann::json& j);
};

fs::path ExperimentDir(const fs::path& root, const ExperimentConfig& c);
fs::path CellDir(const fs::path& experiment_dir, const std::string& strategy,
                 const std::string& held_out, std::uint64_t seed);

// nullopt when the directory holds no complete record.
std::optional<RunRecord> ReadRecord(const fs::path& cell_dir);

struct Cell {
  train::Strategy strategy;
  std::string held_out;
  std::uint64_t seed;
};

// Expands the grid in strategy, held-out, seed order.
std::vector<Cell> ExpandGrid(const ExperimentConfig& c,
                             const std::vector<data::DomainDataset>& domains);

struct CellOutput {
  RunRecord record;
  train::TrainResult result;
};

// Trains and scores one cell without touching the disk.
CellOutput RunCell(const ExperimentConfig& c,
                   const std::vector<data::DomainDataset>& domains,
                   const Cell& cell);

// Validation rows of the training domains, concatenated.
train::DomainData ValidationSet(const std::vector<data::DomainDataset>& domains,
                                const data::LodoSplit& split);

struct GridOptions {
  std::size_t jobs = 1;
  // Stops after training, before record.json; used to test crash safety.
  bool abort_before_record = false;
};

struct GridSummary {
  std::vector<RunRecord> records;
  std::size_t ran = 0;
  std::size_t skipped = 0;
};

// Runs every cell that lacks a complete record. Completed records are never
// rewritten.
GridSummary RunGrid(const ExperimentConfig& c, const fs::path& root,
                    const GridOptions& options = {});

// Every complete record below `dir`, sorted by strategy, held-out, seed.
std::vector<RunRecord> CollectRecords(const fs::path& dir);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample convention (n - 1); 0 for a single value
  std::size_t n = 0;
};
MeanStd Summarize(const std::vector<double>& values);

struct SummaryRow {
  std::string strategy;
  std::string held_out;  // "mean" for the mean over held-out domains
  std::size_t seeds = 0;
  MeanStd self, others, pd, c2st;
};

struct BiasHeadRow {
  std::string strategy;
  std::string held_out;
  std::string domain;
  MeanStd shared, own;
};

struct Summary {
  std::vector<SummaryRow> rows;
  std::vector<BiasHeadRow> heads;
};

// Rejects records from different data sources.
Summary Aggregate(const std::vector<RunRecord>& records);

std::string SummaryCsv(const Summary& s);
std::string BiasHeadCsv(const Summary& s);

// Writes summary.csv, bias_heads.csv and one scatter CSV per
// (strategy, held-out) into <experiment_dir>/report. Returns that directory.
fs::path WriteReport(const fs::path& experiment_dir);

// Resolves the experiment directory for `report` and `eval`: `dir` itself when
// it holds config.json, else its only experiment subdirectory.
fs::path ResolveExperimentDir(const fs::path& dir);

struct EvalResult {
  double validation = 0.0;
  double recorded = 0.0;
  metrics::BiasReport report;
};

// Reloads the checkpoint of a cell and recomputes its metrics.
EvalResult EvalCell(const fs::path& cell_dir);

}  // namespace debias::harness

#endif  // DEBIAS_HARNESS_H_
