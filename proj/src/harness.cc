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

#include "debias/harness.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "debias/checkpoint.h"
#include "debias/dataset_io.h"

namespace debias::harness {
namespace {

using nlohmann::json;

// Keys of `j` must be a subset of the keys of `reference`.
void CheckKeys(const json& j, const json& reference, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!reference.contains(key)) {
      throw std::invalid_argument(where + ": unknown key \"" + key + "\"");
    }
  }
}

std::string KindName(DataSource::Kind k) {
  switch (k) {
    case DataSource::Kind::kConfounded: return "confounded";
    case DataSource::Kind::kRotated: return "rotated";
    case DataSource::Kind::kCollection: return "collection";
  }
  return "confounded";
}

DataSource::Kind ParseKind(const std::string& s) {
  if (s == "confounded") return DataSource::Kind::kConfounded;
  if (s == "rotated") return DataSource::Kind::kRotated;
  if (s == "collection") return DataSource::Kind::kCollection;
  throw std::invalid_argument("data: unknown kind \"" + s +
                              "\" (expected confounded, rotated or collection)");
}

std::string Hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

Tensor ConcatRows(const std::vector<const Tensor*>& parts) {
  std::size_t rows = 0;
  const std::size_t cols = parts.front()->cols();
  for (const Tensor* t : parts) rows += t->rows();
  Tensor out(Shape{rows, cols});
  std::size_t at = 0;
  for (const Tensor* t : parts) {
    std::copy(t->storage().begin(), t->storage().end(),
              out.storage().begin() + static_cast<std::ptrdiff_t>(at));
    at += t->size();
  }
  return out;
}

Tensor HeadRows(const Tensor& t, std::size_t n) {
  if (n >= t.rows()) return t;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return SelectRows(t, idx);
}

std::size_t MinInternal(train::Strategy s) {
  return train::UsesBiasHeads(s) ? 2 : 1;
}

json ReadJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

json DataSource::ToJson() const {
  json j = {{"kind", KindName(kind)}, {"seed", seed}};
  switch (kind) {
    case Kind::kConfounded: j["spec"] = confounded.ToJson(); break;
    case Kind::kRotated: j["spec"] = rotated.ToJson(); break;
    case Kind::kCollection: j["path"] = path; break;
  }
  return j;
}

DataSource DataSource::FromJson(const json& j) {
  CheckKeys(j, json{{"kind", 0}, {"seed", 0}, {"spec", 0}, {"path", 0}}, "data");
  DataSource d;
  d.kind = ParseKind(j.value("kind", std::string("confounded")));
  d.seed = j.value("seed", d.seed);
  const json spec = j.value("spec", json::object());
  switch (d.kind) {
    case Kind::kConfounded:
      CheckKeys(spec, d.confounded.ToJson(), "data.spec");
      d.confounded = data::ConfoundSpec::FromJson(spec);
      break;
    case Kind::kRotated:
      CheckKeys(spec, d.rotated.ToJson(), "data.spec");
      d.rotated = data::RotatedSpec::FromJson(spec);
      break;
    case Kind::kCollection:
      d.path = j.value("path", std::string());
      if (d.path.empty()) throw std::invalid_argument("data: collection needs \"path\"");
      break;
  }
  return d;
}

std::vector<data::DomainDataset> DataSource::Load() const {
  switch (kind) {
    case Kind::kConfounded: return data::GenBiasedDomains(confounded, seed);
    case Kind::kRotated: return data::GenRotated(rotated, seed);
    case Kind::kCollection: return data::ReadCollection(path);
  }
  return {};
}

json TrainConfigToJson(const train::TrainConfig& c) {
  return {
      {"epsilon", c.epsilon},
      {"eta", c.eta},
      {"steps", c.steps},
      {"batch_size", c.batch_size},
      {"weights",
       {{"c1", c.weights.c1},
        {"c2", c.weights.c2},
        {"c3", c.weights.c3},
        {"lambda", c.weights.lambda},
        {"gamma", c.weights.gamma}}},
      {"task_mode", loss::ToString(c.task_mode)},
      {"weighting", loss::ToString(c.weighting)},
      {"taps", c.taps},
      {"mixup_alpha", c.mixup_alpha},
      {"dann_weight", c.dann_weight},
      {"domain_weight", c.domain_weight},
      {"vw_l2", c.vw_l2},
      {"weight_decay", c.weight_decay},
      {"hidden", c.hidden},
      {"embedding_dim", c.embedding_dim},
      {"scale_intercept", c.scale_intercept},
      {"freeze_bias_heads", c.freeze_bias_heads},
      {"augment_through_prefix", c.augment_through_prefix},
      {"per_tap_epsilon_scaling", c.per_tap_epsilon_scaling},
      {"eval_every", c.eval_every},
  };
}

train::TrainConfig TrainConfigFromJson(const json& j) {
  train::TrainConfig c;
  const json ref = TrainConfigToJson(c);
  CheckKeys(j, ref, "train");
  c.epsilon = j.value("epsilon", c.epsilon);
  c.eta = j.value("eta", c.eta);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("weights")) {
    const json& w = j["weights"];
    CheckKeys(w, ref["weights"], "train.weights");
    c.weights.c1 = w.value("c1", c.weights.c1);
    c.weights.c2 = w.value("c2", c.weights.c2);
    c.weights.c3 = w.value("c3", c.weights.c3);
    c.weights.lambda = w.value("lambda", c.weights.lambda);
    c.weights.gamma = w.value("gamma", c.weights.gamma);
  }
  if (j.contains("task_mode")) c.task_mode = loss::ParseTaskMode(j["task_mode"]);
  if (j.contains("weighting")) c.weighting = loss::ParseDomainWeighting(j["weighting"]);
  c.taps = j.value("taps", c.taps);
  c.mixup_alpha = j.value("mixup_alpha", c.mixup_alpha);
  c.dann_weight = j.value("dann_weight", c.dann_weight);
  c.domain_weight = j.value("domain_weight", c.domain_weight);
  c.vw_l2 = j.value("vw_l2", c.vw_l2);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.hidden = j.value("hidden", c.hidden);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.scale_intercept = j.value("scale_intercept", c.scale_intercept);
  c.freeze_bias_heads = j.value("freeze_bias_heads", c.freeze_bias_heads);
  c.augment_through_prefix = j.value("augment_through_prefix", c.augment_through_prefix);
  c.per_tap_epsilon_scaling =
      j.value("per_tap_epsilon_scaling", c.per_tap_epsilon_scaling);
  c.eval_every = j.value("eval_every", c.eval_every);
  return c;
}

namespace {

json C2stToJson(const metrics::C2stConfig& c) {
  return {{"probe", metrics::ToString(c.probe)},
          {"train_fraction", c.train_fraction},
          {"seed", c.seed},
          {"hidden_units", c.hidden_units},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"l2", c.l2}};
}

metrics::C2stConfig C2stFromJson(const json& j) {
  metrics::C2stConfig c;
  CheckKeys(j, C2stToJson(c), "c2st");
  if (j.contains("probe")) c.probe = metrics::ParseProbeKind(j["probe"]);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.seed = j.value("seed", c.seed);
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.iterations = j.value("iterations", c.iterations);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.l2 = j.value("l2", c.l2);
  return c;
}

}  // namespace

void ExperimentConfig::Validate() const {
  if (strategies.empty()) throw std::invalid_argument("config: strategies is empty");
  if (seeds.empty()) throw std::invalid_argument("config: seeds is empty");
  std::set<train::Strategy> seen;
  for (auto s : strategies) {
    if (!seen.insert(s).second) {
      throw std::invalid_argument("config: strategy " + train::ToString(s) +
                                  " listed twice");
    }
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw std::invalid_argument("config: seeds contain duplicates");
  }
  train.Validate();
  if (!(c2st.train_fraction > 0.0 && c2st.train_fraction < 1.0)) {
    throw std::invalid_argument("config: c2st.train_fraction must be in (0, 1)");
  }
}

json ExperimentConfig::ToJson() const {
  json s = json::array();
  for (auto st : strategies) s.push_back(train::ToString(st));
  return {{"data", data.ToJson()},
          {"strategies", s},
          {"train", TrainConfigToJson(train)},
          {"holdouts", holdouts},
          {"seeds", seeds},
          {"out", out_dir},
          {"c2st", C2stToJson(c2st)},
          {"c2st_rows", c2st_rows},
          {"scatter_rows", scatter_rows}};
}

ExperimentConfig ExperimentConfig::FromJson(const json& j) {
  ExperimentConfig c;
  CheckKeys(j, c.ToJson(), "config");
  if (j.contains("data")) c.data = DataSource::FromJson(j["data"]);
  if (j.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : j["strategies"]) {
      c.strategies.push_back(train::ParseStrategy(s.get<std::string>()));
    }
  }
  if (j.contains("train")) c.train = TrainConfigFromJson(j["train"]);
  c.holdouts = j.value("holdouts", c.holdouts);
  c.seeds = j.value("seeds", c.seeds);
  c.out_dir = j.value("out", c.out_dir);
  if (j.contains("c2st")) c.c2st = C2stFromJson(j["c2st"]);
  c.c2st_rows = j.value("c2st_rows", c.c2st_rows);
  c.scatter_rows = j.value("scatter_rows", c.scatter_rows);
  c.Validate();
  return c;
}

ExperimentConfig ExperimentConfig::Load(const fs::path& path) {
  const json j = ReadJsonFile(path);
  try {
    return FromJson(j);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::uint64_t Fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ConfigHash(const ExperimentConfig& c) {
  json j = c.ToJson();
  // Grid axes and the output location do not identify the experiment.
  j.erase("strategies");
  j.erase("holdouts");
  j.erase("seeds");
  j.erase("out");
  return Hex(Fnv1a(j.dump()));
}

std::string DataSourceHash(const DataSource& d) { return Hex(Fnv1a(d.ToJson().dump())); }

// ---------------------------------------------------------------------------
// Records

json RunRecord::ToJson() const {
  return {{"config_hash", config_hash},
          {"data_hash", data_hash},
          {"strategy", strategy},
          {"held_out", held_out},
          {"seed", seed},
          {"report", metrics::ToJson(report)},
          {"shared_own", shared_own},
          {"bias_own", bias_own},
          {"final_validation", final_validation},
          {"steps", steps},
          {"history", history_path},
          {"checkpoint", checkpoint_path},
          {"projection", projection_path},
          {"wall_seconds", wall_seconds},
          {"complete", complete}};
}

RunRecord RunRecord::FromJson(const json& j) {
  RunRecord r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.data_hash = j.at("data_hash").get<std::string>();
  r.strategy = j.at("strategy").get<std::string>();
  r.held_out = j.at("held_out").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.report = metrics::BiasReportFromJson(j.at("report"));
  r.shared_own = j.at("shared_own").get<std::map<std::string, double>>();
  r.bias_own = j.at("bias_own").get<std::map<std::string, double>>();
  r.final_validation = j.at("final_validation").get<double>();
  r.steps = j.at("steps").get<std::size_t>();
  r.history_path = j.at("history").get<std::string>();
  r.checkpoint_path = j.at("checkpoint").get<std::string>();
  r.projection_path = j.at("projection").get<std::string>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.complete = j.at("complete").get<bool>();
  return r;
}

fs::path ExperimentDir(const fs::path& root, const ExperimentConfig& c) {
  return root / ConfigHash(c);
}

fs::path CellDir(const fs::path& experiment_dir, const std::string& strategy,
                 const std::string& held_out, std::uint64_t seed) {
  return experiment_dir / strategy / held_out / std::to_string(seed);
}

std::optional<RunRecord> ReadRecord(const fs::path& cell_dir) {
  const fs::path p = cell_dir / "record.json";
  if (!fs::exists(p)) return std::nullopt;
  RunRecord r;
  try {
    r = RunRecord::FromJson(ReadJsonFile(p));
  } catch (const json::exception& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
  if (!r.complete) return std::nullopt;
  return r;
}

// ---------------------------------------------------------------------------
// Grid

std::vector<Cell> ExpandGrid(const ExperimentConfig& c,
                             const std::vector<data::DomainDataset>& domains) {
  std::vector<std::string> held = c.holdouts;
  if (held.empty()) {
    for (const auto& d : domains) held.push_back(d.name);
  }
  std::vector<Cell> cells;
  for (auto s : c.strategies) {
    for (const auto& h : held) {
      // Validates the name and the number of remaining domains up front.
      data::MakeLodoSplit(domains, h, MinInternal(s));
      for (auto seed : c.seeds) cells.push_back({s, h, seed});
    }
  }
  return cells;
}

train::DomainData ValidationSet(const std::vector<data::DomainDataset>& domains,
                                const data::LodoSplit& split) {
  std::vector<Tensor> xs, ys;
  for (std::size_t i : split.internal) {
    xs.push_back(domains[i].SplitX(data::Split::kVal));
    ys.push_back(domains[i].SplitY(data::Split::kVal));
  }
  std::vector<const Tensor*> px, py;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    px.push_back(&xs[i]);
    py.push_back(&ys[i]);
  }
  return {ConcatRows(px), ConcatRows(py)};
}

namespace {

struct Scored {
  metrics::BiasReport report;
  std::map<std::string, double> shared_own, bias_own;
};

Scored ScoreState(const ExperimentConfig& c, const train::TrainState& state,
                  const std::vector<data::DomainDataset>& domains,
                  const data::LodoSplit& split, train::Strategy strategy) {
  Scored out;
  std::map<std::string, double> scores;
  std::vector<std::string> internal, external;
  const auto mode = c.train.task_mode;
  for (std::size_t k = 0; k < split.internal.size(); ++k) {
    const auto& d = domains[split.internal[k]];
    const Tensor x = d.SplitX(data::Split::kTest);
    const Tensor y = d.SplitY(data::Split::kTest);
    const double s = metrics::TaskScore(train::PredictVw(state, x), y, mode);
    scores[d.name] = s;
    internal.push_back(d.name);
    out.shared_own[d.name] = s;
    if (train::UsesBiasHeads(strategy)) {
      out.bias_own[d.name] =
          metrics::TaskScore(train::PredictBias(state, k, x), y, mode);
    }
  }
  const auto& ext = domains[split.external];
  scores[ext.name] = metrics::TaskScore(
      train::PredictVw(state, ext.SplitX(data::Split::kTest)),
      ext.SplitY(data::Split::kTest), mode);
  external.push_back(ext.name);
  out.report = metrics::CrossDatasetReport(scores, internal, external);
  if (c.c2st_rows > 0) {
    std::vector<Tensor> sources;
    for (std::size_t i : split.internal) {
      sources.push_back(state.net.Embed(
          HeadRows(domains[i].SplitX(data::Split::kTest), c.c2st_rows)));
    }
    out.report.c2st_acc = metrics::C2st(sources, c.c2st).accuracy;
  }
  return out;
}

std::string ProjectionOf(const ExperimentConfig& c, const train::TrainState& state,
                         const std::vector<data::DomainDataset>& domains) {
  std::vector<Tensor> zs;
  std::vector<std::string> names;
  std::vector<int> labels;
  for (const auto& d : domains) {
    const Tensor x = HeadRows(d.SplitX(data::Split::kTest), c.scatter_rows);
    zs.push_back(state.net.Embed(x));
    const auto y = d.SplitLabels(data::Split::kTest);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      names.push_back(d.name);
      labels.push_back(y[r]);
    }
  }
  std::vector<const Tensor*> parts;
  for (const auto& z : zs) parts.push_back(&z);
  const Tensor all = ConcatRows(parts);
  return metrics::ProjectionCsv(metrics::PrincipalProjection(all, 2), names, labels);
}

}  // namespace

CellOutput RunCell(const ExperimentConfig& c,
                   const std::vector<data::DomainDataset>& domains,
                   const Cell& cell) {
  const auto start = std::chrono::steady_clock::now();
  const auto split = data::MakeLodoSplit(domains, cell.held_out, MinInternal(cell.strategy));
  std::vector<train::DomainData> train_sets;
  for (std::size_t i : split.internal) {
    train_sets.push_back({domains[i].SplitX(data::Split::kTrain),
                          domains[i].SplitY(data::Split::kTrain)});
  }
  const train::DomainData val = ValidationSet(domains, split);
  train::TrainConfig tc = c.train;
  tc.strategy = cell.strategy;
  tc.seed = cell.seed;

  CellOutput out;
  out.result = train::Train(tc, train_sets, &val);
  const Scored sc = ScoreState(c, out.result.state, domains, split, cell.strategy);

  RunRecord& r = out.record;
  r.config_hash = ConfigHash(c);
  r.data_hash = DataSourceHash(c.data);
  r.strategy = train::ToString(cell.strategy);
  r.held_out = cell.held_out;
  r.seed = cell.seed;
  r.report = sc.report;
  r.shared_own = sc.shared_own;
  r.bias_own = sc.bias_own;
  r.final_validation = out.result.validation.empty() ? 0.0 : out.result.validation.back().score;
  r.steps = tc.steps;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

namespace {

void WriteExperimentManifest(const ExperimentConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path p = dir / "config.json";
  json j = c.ToJson();
  j["config_hash"] = ConfigHash(c);
  if (fs::exists(p)) {
    const json old = ReadJsonFile(p);
    if (old.value("config_hash", std::string()) != ConfigHash(c)) {
      throw std::runtime_error(p.string() + ": belongs to a different configuration");
    }
    // The grid axes may grow between invocations; keep the union.
    for (const char* axis : {"strategies", "holdouts", "seeds"}) {
      json merged = old.value(axis, json::array());
      for (const auto& v : j[axis]) {
        if (std::find(merged.begin(), merged.end(), v) == merged.end()) merged.push_back(v);
      }
      j[axis] = merged;
    }
  }
  data::WriteFileAtomic(p, j.dump(2) + "\n");
}

void PersistCell(const ExperimentConfig& c, const CellOutput& out,
                 const fs::path& cell_dir,
                 const std::vector<data::DomainDataset>& domains, bool abort_before_record) {
  fs::create_directories(cell_dir);
  RunRecord r = out.record;
  r.history_path = "history.csv";
  data::WriteFileAtomic(cell_dir / r.history_path, train::HistoryCsv(out.result.history));
  r.checkpoint_path = "model.ckpt";
  ckpt::Checkpoint ck{out.result.state.net, out.result.state.heads, out.result.state.domain};
  ckpt::Save(ck, cell_dir / r.checkpoint_path);
  if (c.scatter_rows > 0) {
    r.projection_path = "projection.csv";
    data::WriteFileAtomic(cell_dir / r.projection_path,
                          ProjectionOf(c, out.result.state, domains));
  }
  if (abort_before_record) return;
  r.complete = true;
  data::WriteFileAtomic(cell_dir / "record.json", r.ToJson().dump(2) + "\n");
}

}  // namespace

GridSummary RunGrid(const ExperimentConfig& c, const fs::path& root,
                    const GridOptions& options) {
  c.Validate();
  const auto domains = c.data.Load();
  const auto cells = ExpandGrid(c, domains);
  const fs::path exp = ExperimentDir(root, c);
  WriteExperimentManifest(c, exp);

  GridSummary summary;
  std::vector<std::optional<RunRecord>> results(cells.size());
  std::vector<char> ran(cells.size(), 0);
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;

  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      {
        std::lock_guard<std::mutex> lock(error_mu);
        if (error) return;
      }
      try {
        const Cell& cell = cells[i];
        const fs::path dir = CellDir(exp, train::ToString(cell.strategy), cell.held_out, cell.seed);
        if (auto done = ReadRecord(dir)) {
          results[i] = std::move(done);
          continue;
        }
        const CellOutput out = RunCell(c, domains, cell);
        PersistCell(c, out, dir, domains, options.abort_before_record);
        ran[i] = 1;
        results[i] = ReadRecord(dir);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (ran[i]) {
      ++summary.ran;
    } else {
      ++summary.skipped;
    }
    if (results[i]) summary.records.push_back(*results[i]);
  }
  return summary;
}

std::vector<RunRecord> CollectRecords(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
  std::vector<RunRecord> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "record.json") {
      if (auto r = ReadRecord(e.path().parent_path())) out.push_back(std::move(*r));
    }
  }
  std::sort(out.begin(), out.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.strategy, a.held_out, a.seed) < std::tie(b.strategy, b.held_out, b.seed);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

MeanStd Summarize(const std::vector<double>& values) {
  MeanStd m;
  m.n = values.size();
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return m;
}

Summary Aggregate(const std::vector<RunRecord>& records) {
  Summary s;
  if (records.empty()) return s;
  for (const auto& r : records) {
    if (r.data_hash != records.front().data_hash) {
      throw std::invalid_argument("aggregate: records come from different data sources (" +
                                  records.front().data_hash + " vs " + r.data_hash + ")");
    }
  }
  struct Acc {
    std::vector<double> self, others, pd, c2st;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> heads;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  for (const auto& r : records) {
    Acc& a = groups[{r.strategy, r.held_out}];
    a.self.push_back(r.report.self);
    a.others.push_back(r.report.others);
    if (r.report.pd) a.pd.push_back(*r.report.pd);
    if (r.report.c2st_acc) a.c2st.push_back(*r.report.c2st_acc);
    for (const auto& [dom, v] : r.shared_own) {
      auto& h = a.heads[dom];
      h.first.push_back(v);
      if (auto it = r.bias_own.find(dom); it != r.bias_own.end()) h.second.push_back(it->second);
    }
  }
  std::map<std::string, std::vector<SummaryRow>> by_strategy;
  for (const auto& [key, a] : groups) {
    SummaryRow row;
    row.strategy = key.first;
    row.held_out = key.second;
    row.seeds = a.self.size();
    row.self = Summarize(a.self);
    row.others = Summarize(a.others);
    row.pd = Summarize(a.pd);
    row.c2st = Summarize(a.c2st);
    s.rows.push_back(row);
    by_strategy[key.first].push_back(row);
    for (const auto& [dom, h] : a.heads) {
      s.heads.push_back({key.first, key.second, dom, Summarize(h.first), Summarize(h.second)});
    }
  }
  // Mean over held-out domains of the per-split means.
  for (const auto& [strategy, rows] : by_strategy) {
    std::vector<double> self, others, pd, c2st;
    for (const auto& r : rows) {
      self.push_back(r.self.mean);
      others.push_back(r.others.mean);
      if (r.pd.n) pd.push_back(r.pd.mean);
      if (r.c2st.n) c2st.push_back(r.c2st.mean);
    }
    SummaryRow m;
    m.strategy = strategy;
    m.held_out = "mean";
    m.seeds = rows.front().seeds;
    for (const auto& r : rows) m.seeds = std::min(m.seeds, r.seeds);
    m.self = Summarize(self);
    m.others = Summarize(others);
    m.pd = Summarize(pd);
    m.c2st = Summarize(c2st);
    s.rows.push_back(m);
  }
  std::stable_sort(s.rows.begin(), s.rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
    return a.strategy < b.strategy;
  });
  return s;
}

namespace {

std::string Cells(const MeanStd& m) {
  if (m.n == 0) return ",";
  return Num(m.mean) + "," + Num(m.std);
}

}  // namespace

std::string SummaryCsv(const Summary& s) {
  std::ostringstream out;
  out << "strategy,held_out,seeds,self_mean,self_std,others_mean,others_std,"
         "pd_mean,pd_std,c2st_mean,c2st_std\n";
  for (const auto& r : s.rows) {
    out << r.strategy << ',' << r.held_out << ',' << r.seeds << ',' << Cells(r.self) << ','
        << Cells(r.others) << ',' << Cells(r.pd) << ',' << Cells(r.c2st) << '\n';
  }
  return out.str();
}

std::string BiasHeadCsv(const Summary& s) {
  std::ostringstream out;
  out << "strategy,held_out,domain,seeds,shared_mean,shared_std,own_head_mean,own_head_std\n";
  for (const auto& h : s.heads) {
    out << h.strategy << ',' << h.held_out << ',' << h.domain << ',' << h.shared.n << ','
        << Cells(h.shared) << ',' << Cells(h.own) << '\n';
  }
  return out.str();
}

fs::path ResolveExperimentDir(const fs::path& dir) {
  if (fs::exists(dir / "config.json")) return dir;
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
  std::vector<fs::path> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "config.json")) found.push_back(e.path());
  }
  if (found.empty()) throw std::runtime_error(dir.string() + ": no experiment found");
  if (found.size() > 1) {
    throw std::runtime_error(dir.string() +
                             ": holds several experiments; pass --config or the hash directory");
  }
  return found.front();
}

fs::path WriteReport(const fs::path& experiment_dir) {
  const auto records = CollectRecords(experiment_dir);
  if (records.empty()) {
    throw std::runtime_error(experiment_dir.string() + ": no complete run records");
  }
  const Summary s = Aggregate(records);
  const fs::path out = experiment_dir / "report";
  fs::create_directories(out);
  data::WriteFileAtomic(out / "summary.csv", SummaryCsv(s));
  data::WriteFileAtomic(out / "bias_heads.csv", BiasHeadCsv(s));
  // One scatter per (strategy, held-out): the lowest seed that saved one.
  std::set<std::pair<std::string, std::string>> done;
  for (const auto& r : records) {
    if (r.projection_path.empty() || !done.insert({r.strategy, r.held_out}).second) continue;
    const fs::path src =
        CellDir(experiment_dir, r.strategy, r.held_out, r.seed) / r.projection_path;
    const auto bytes = data::ReadBytes(src);
    data::WriteFileAtomic(out / ("scatter_" + r.strategy + "_" + r.held_out + ".csv"), bytes);
  }
  return out;
}

EvalResult EvalCell(const fs::path& cell_dir) {
  const auto record = ReadRecord(cell_dir);
  if (!record) throw std::runtime_error(cell_dir.string() + ": no complete run record");
  const fs::path exp = cell_dir.parent_path().parent_path().parent_path();
  json manifest = ReadJsonFile(exp / "config.json");
  manifest.erase("config_hash");
  const ExperimentConfig c = ExperimentConfig::FromJson(manifest);
  const auto domains = c.data.Load();
  const auto strategy = train::ParseStrategy(record->strategy);
  const auto split = data::MakeLodoSplit(domains, record->held_out, MinInternal(strategy));
  auto ck = ckpt::Load(cell_dir / record->checkpoint_path);
  if (!ck.heads || !ck.domain) {
    throw std::runtime_error(cell_dir.string() + ": checkpoint lacks head sections");
  }
  train::TrainState state{std::move(ck.net), std::move(*ck.heads), std::move(*ck.domain)};
  const train::DomainData val = ValidationSet(domains, split);
  EvalResult e;
  e.validation = metrics::TaskScore(train::PredictVw(state, val.x), val.y, c.train.task_mode);
  e.recorded = record->final_validation;
  e.report = ScoreState(c, state, domains, split, strategy).report;
  return e;
}

}  // namespace debias::harness
