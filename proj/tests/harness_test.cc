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

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "debias/checkpoint.h"
#include "debias/dataset_io.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"

namespace debias::harness {
namespace {

using nlohmann::json;
using ::testing::HasSubstr;

class HarnessDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("debias_harness_" +
            std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

ExperimentConfig SmallConfig() {
  ExperimentConfig c;
  c.data.kind = DataSource::Kind::kConfounded;
  c.data.seed = 5;
  c.data.confounded.samples_per_domain = 300;
  c.data.confounded.d_common = 4;
  c.data.confounded.d_bias = 3;
  c.strategies = {train::Strategy::kErm, train::Strategy::kMct};
  c.train.steps = 60;
  c.train.hidden = {12};
  c.train.embedding_dim = 6;
  c.train.eval_every = 20;
  c.holdouts = {"ext"};
  c.seeds = {1, 2};
  c.c2st_rows = 60;
  c.scatter_rows = 20;
  return c;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Recursively reverses key insertion order; nlohmann's default object type is
// sorted, so build the text by hand.
std::string ReversedDump(const json& j) {
  if (!j.is_object()) return j.dump();
  std::vector<std::string> parts;
  for (const auto& [k, v] : j.items()) parts.push_back(json(k).dump() + ":" + ReversedDump(v));
  std::string out = "{";
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it != parts.rbegin()) out += ",";
    out += *it;
  }
  return out + "}";
}

TEST(ConfigHash, StableUnderKeyReordering) {
  const ExperimentConfig c = SmallConfig();
  const std::string forward = c.ToJson().dump();
  const std::string reversed = ReversedDump(c.ToJson());
  ASSERT_NE(forward, reversed);
  const auto a = ExperimentConfig::FromJson(json::parse(forward));
  const auto b = ExperimentConfig::FromJson(json::parse(reversed));
  EXPECT_EQ(ConfigHash(a), ConfigHash(b));
  EXPECT_EQ(ConfigHash(a), ConfigHash(c));
}

TEST(ConfigHash, IgnoresGridAxesButNotSettings) {
  const ExperimentConfig c = SmallConfig();
  ExperimentConfig grid = c;
  grid.seeds = {9};
  grid.strategies = {train::Strategy::kDann};
  grid.holdouts = {"d1"};
  grid.out_dir = "elsewhere";
  EXPECT_EQ(ConfigHash(grid), ConfigHash(c));
  ExperimentConfig eps = c;
  eps.train.epsilon = 0.5;
  EXPECT_NE(ConfigHash(eps), ConfigHash(c));
  ExperimentConfig data = c;
  data.data.seed = 6;
  EXPECT_NE(ConfigHash(data), ConfigHash(c));
  EXPECT_NE(DataSourceHash(data.data), DataSourceHash(c.data));
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(Fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(Fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(Fnv1a("foobar"), 0x85944171f73967e8ULL);
}

TEST(Config, RoundTrip) {
  ExperimentConfig c = SmallConfig();
  c.train.taps = {"input", "dense1"};
  c.train.weights.lambda = 0.3;
  c.c2st.probe = metrics::ProbeKind::kHiddenLayer;
  const auto back = ExperimentConfig::FromJson(c.ToJson());
  EXPECT_EQ(back.ToJson(), c.ToJson());
}

TEST(Config, PartialFileKeepsDefaults) {
  const auto c = ExperimentConfig::FromJson(json::parse(R"({"seeds":[3],"train":{"eta":0.2}})"));
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{3});
  EXPECT_EQ(c.train.eta, 0.2);
  EXPECT_EQ(c.train.steps, train::TrainConfig{}.steps);
}

TEST(Config, InvalidFilesRejected) {
  const std::array<const char*, 8> bad = {
      R"({"seeds":[]})",
      R"({"strategies":["mct","nope"]})",
      R"({"strategies":[]})",
      R"({"sedes":[1]})",
      R"({"train":{"etaa":1}})",
      R"({"train":{"weights":{"c4":1}}})",
      R"({"data":{"kind":"confounded","spec":{"rhoo":1}}})",
      R"({"data":{"kind":"tabular"}})",
  };
  for (const char* text : bad) {
    EXPECT_ANY_THROW(ExperimentConfig::FromJson(json::parse(text))) << text;
  }
  EXPECT_NO_THROW(ExperimentConfig::FromJson(json::parse("{}")));
}

TEST(Summarize, SampleConvention) {
  const auto one = Summarize({0.7});
  EXPECT_EQ(one.mean, 0.7);
  EXPECT_EQ(one.std, 0.0);
  const double a = 0.61, b = 0.83;
  const auto two = Summarize({a, b});
  EXPECT_NEAR(two.mean, (a + b) / 2, 1e-15);
  EXPECT_NEAR(two.std, std::abs(a - b) / std::sqrt(2.0), 1e-15);
  const auto five = Summarize({1, 2, 3, 4, 5});
  EXPECT_NEAR(five.std, std::sqrt(2.5), 1e-15);
}

RunRecord FakeRecord(const std::string& strategy, const std::string& held,
                     std::uint64_t seed, double self, double others) {
  RunRecord r;
  r.data_hash = "d";
  r.strategy = strategy;
  r.held_out = held;
  r.seed = seed;
  r.report.self = self;
  r.report.others = others;
  r.report.pd = (self - others) / self;
  r.report.c2st_acc = 0.4 + 0.01 * static_cast<double>(seed);
  r.complete = true;
  return r;
}

TEST(Aggregate, RowsPerStrategyAndSplitPlusMean) {
  std::vector<RunRecord> rs;
  for (const char* s : {"erm", "e2e-ce", "mct"}) {
    for (const char* h : {"d1", "ext"}) {
      for (std::uint64_t seed : {1, 2, 3}) {
        rs.push_back(FakeRecord(s, h, seed, 0.8 + 0.01 * seed, 0.7 - 0.02 * seed));
      }
    }
  }
  const Summary s = Aggregate(rs);
  ASSERT_EQ(s.rows.size(), 9u);
  std::map<std::string, int> per_strategy;
  for (const auto& r : s.rows) ++per_strategy[r.strategy];
  for (const auto& [k, n] : per_strategy) EXPECT_EQ(n, 3) << k;
  const std::string csv = SummaryCsv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "strategy,held_out,seeds,self_mean,self_std,others_mean,others_std,"
            "pd_mean,pd_std,c2st_mean,c2st_std");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
}

TEST(Aggregate, MeanRowAveragesPerSplitMeans) {
  std::vector<RunRecord> rs = {FakeRecord("mct", "d1", 1, 0.8, 0.6),
                               FakeRecord("mct", "d1", 2, 0.9, 0.6),
                               FakeRecord("mct", "d2", 1, 0.5, 0.4)};
  const Summary s = Aggregate(rs);
  const auto it = std::find_if(s.rows.begin(), s.rows.end(),
                               [](const SummaryRow& r) { return r.held_out == "mean"; });
  ASSERT_NE(it, s.rows.end());
  const double pd1 = ((0.8 - 0.6) / 0.8 + (0.9 - 0.6) / 0.9) / 2;
  const double pd2 = (0.5 - 0.4) / 0.5;
  EXPECT_NEAR(it->pd.mean, (pd1 + pd2) / 2, 1e-12);
  EXPECT_NEAR(it->self.mean, (0.85 + 0.5) / 2, 1e-12);
}

TEST(Aggregate, MixedDataSourcesRejected) {
  auto a = FakeRecord("mct", "d1", 1, 0.8, 0.6);
  auto b = FakeRecord("mct", "d1", 2, 0.8, 0.6);
  b.data_hash = "other";
  EXPECT_THROW(Aggregate({a, b}), std::invalid_argument);
}

TEST(Grid, ExpandsInStrategyHoldoutSeedOrder) {
  ExperimentConfig c = SmallConfig();
  c.holdouts.clear();
  const auto domains = c.data.Load();
  const auto cells = ExpandGrid(c, domains);
  ASSERT_EQ(cells.size(), 2u * 4u * 2u);
  EXPECT_EQ(cells[0].strategy, train::Strategy::kErm);
  EXPECT_EQ(cells[0].held_out, "d1");
  EXPECT_EQ(cells[1].seed, 2u);
  EXPECT_EQ(cells.back().held_out, "ext");
  c.holdouts = {"d9"};
  EXPECT_ANY_THROW(ExpandGrid(c, domains));
}

using GridRun = HarnessDir;

TEST_F(GridRun, WritesLayoutAndNeverRewritesCompletedRecords) {
  const ExperimentConfig c = SmallConfig();
  const auto first = RunGrid(c, dir_);
  EXPECT_EQ(first.ran, 4u);
  ASSERT_EQ(first.records.size(), 4u);
  const fs::path exp = dir_ / ConfigHash(c);
  ASSERT_TRUE(fs::exists(exp / "config.json"));
  const fs::path cell = CellDir(exp, "mct", "ext", 2);
  for (const char* f : {"record.json", "history.csv", "model.ckpt", "projection.csv"}) {
    EXPECT_TRUE(fs::exists(cell / f)) << f;
  }
  const std::string before = Slurp(cell / "record.json");
  const auto stamp = fs::last_write_time(cell / "model.ckpt");
  const auto second = RunGrid(c, dir_);
  EXPECT_EQ(second.ran, 0u);
  EXPECT_EQ(second.skipped, 4u);
  EXPECT_EQ(Slurp(cell / "record.json"), before);
  EXPECT_EQ(fs::last_write_time(cell / "model.ckpt"), stamp);
}

TEST_F(GridRun, InterruptedRunLeavesNoCompleteRecord) {
  const ExperimentConfig c = SmallConfig();
  const auto crashed = RunGrid(c, dir_, {.jobs = 1, .abort_before_record = true});
  EXPECT_TRUE(crashed.records.empty());
  EXPECT_TRUE(CollectRecords(dir_).empty());
  const fs::path cell = CellDir(dir_ / ConfigHash(c), "erm", "ext", 1);
  EXPECT_TRUE(fs::exists(cell / "model.ckpt"));
  EXPECT_FALSE(fs::exists(cell / "record.json"));
  // A later run picks the incomplete cells up.
  const auto resumed = RunGrid(c, dir_);
  EXPECT_EQ(resumed.ran, 4u);
  EXPECT_EQ(CollectRecords(dir_).size(), 4u);
}

TEST_F(GridRun, ParallelMatchesSerial) {
  const ExperimentConfig c = SmallConfig();
  const auto serial = RunGrid(c, dir_ / "a", {.jobs = 1});
  const auto parallel = RunGrid(c, dir_ / "b", {.jobs = 3});
  ASSERT_EQ(serial.records.size(), parallel.records.size());
  for (std::size_t i = 0; i < serial.records.size(); ++i) {
    json a = serial.records[i].ToJson(), b = parallel.records[i].ToJson();
    a.erase("wall_seconds");
    b.erase("wall_seconds");
    EXPECT_EQ(a, b);
  }
}

TEST_F(GridRun, RecordsMatchIndependentRecomputation) {
  const ExperimentConfig c = SmallConfig();
  RunGrid(c, dir_);
  const auto domains = c.data.Load();
  for (const auto& r : CollectRecords(dir_)) {
    const fs::path cell = CellDir(dir_ / r.config_hash, r.strategy, r.held_out, r.seed);
    const auto ck = ckpt::Load(cell / r.checkpoint_path);
    std::map<std::string, double> acc;
    for (const auto& d : domains) {
      // Hand-rolled argmax accuracy through the visual-world head.
      const Tensor z = ck.net.Embed(d.SplitX(data::Split::kTest));
      const auto labels = d.SplitLabels(data::Split::kTest);
      const Tensor& w = ck.heads->w_vw;
      std::size_t hit = 0;
      for (std::size_t i = 0; i < z.rows(); ++i) {
        std::size_t best = 0;
        double best_v = -1e300;
        for (std::size_t k = 0; k < w.cols(); ++k) {
          double v = w.at(z.cols(), k);  // intercept row
          for (std::size_t j = 0; j < z.cols(); ++j) v += z.at(i, j) * w.at(j, k);
          if (v > best_v) {
            best_v = v;
            best = k;
          }
        }
        hit += static_cast<int>(best) == labels[i];
      }
      acc[d.name] = static_cast<double>(hit) / static_cast<double>(z.rows());
    }
    double self = 0.0;
    for (const char* d : {"d1", "d2", "d3"}) {
      EXPECT_NEAR(r.report.per_domain.at(d), acc[d], 1e-12) << d;
      EXPECT_NEAR(r.shared_own.at(d), acc[d], 1e-12) << d;
      self += acc[d] / 3.0;
    }
    EXPECT_NEAR(r.report.self, self, 1e-12);
    EXPECT_NEAR(r.report.others, acc["ext"], 1e-12);
    EXPECT_NEAR(*r.report.pd, (self - acc["ext"]) / self, 1e-12);
    EXPECT_EQ(r.bias_own.empty(), r.strategy == "erm");
  }
}

TEST_F(GridRun, AggregateEqualsRecomputationFromRawJson) {
  const ExperimentConfig c = SmallConfig();
  RunGrid(c, dir_);
  std::map<std::string, std::vector<json>> raw;
  for (const auto& e : fs::recursive_directory_iterator(dir_)) {
    if (e.path().filename() != "record.json") continue;
    const json j = json::parse(std::ifstream(e.path()));
    raw[j["strategy"].get<std::string>() + "/" + j["held_out"].get<std::string>()].push_back(j);
  }
  const Summary s = Aggregate(CollectRecords(dir_));
  for (const auto& row : s.rows) {
    if (row.held_out == "mean") continue;
    const auto& js = raw.at(row.strategy + "/" + row.held_out);
    ASSERT_EQ(js.size(), 2u);
    const double a = js[0]["report"]["others"], b = js[1]["report"]["others"];
    EXPECT_NEAR(row.others.mean, (a + b) / 2, 1e-10);
    EXPECT_NEAR(row.others.std, std::abs(a - b) / std::sqrt(2.0), 1e-10);
    const double pa = js[0]["report"]["pd"], pb = js[1]["report"]["pd"];
    EXPECT_NEAR(row.pd.mean, (pa + pb) / 2, 1e-10);
  }
}

TEST_F(GridRun, ReportIsIdempotent) {
  const ExperimentConfig c = SmallConfig();
  RunGrid(c, dir_);
  const fs::path exp = ResolveExperimentDir(dir_);
  const fs::path out = WriteReport(exp);
  std::map<std::string, std::string> first;
  for (const auto& e : fs::directory_iterator(out)) first[e.path().filename()] = Slurp(e.path());
  EXPECT_TRUE(first.count("summary.csv"));
  EXPECT_TRUE(first.count("bias_heads.csv"));
  EXPECT_TRUE(first.count("scatter_mct_ext.csv"));
  WriteReport(exp);
  std::map<std::string, std::string> second;
  for (const auto& e : fs::directory_iterator(out)) second[e.path().filename()] = Slurp(e.path());
  EXPECT_EQ(first, second);
}

TEST_F(GridRun, EvalReproducesFinalValidation) {
  const ExperimentConfig c = SmallConfig();
  RunGrid(c, dir_);
  for (const auto& r : CollectRecords(dir_)) {
    const auto e = EvalCell(CellDir(dir_ / r.config_hash, r.strategy, r.held_out, r.seed));
    EXPECT_NEAR(e.validation, r.final_validation, 1e-10);
    EXPECT_EQ(e.report.per_domain, r.report.per_domain);
    EXPECT_EQ(e.report.c2st_acc, r.report.c2st_acc);
  }
}

TEST_F(GridRun, CollectionSourceMatchesGenerator) {
  ExperimentConfig c = SmallConfig();
  data::WriteCollection(c.data.Load(), dir_ / "data");
  ExperimentConfig files = c;
  files.data.kind = DataSource::Kind::kCollection;
  files.data.path = (dir_ / "data").string();
  files.strategies = {train::Strategy::kErm};
  files.seeds = {1};
  c.strategies = files.strategies;
  c.seeds = files.seeds;
  const auto a = RunGrid(c, dir_ / "gen");
  const auto b = RunGrid(files, dir_ / "files");
  ASSERT_EQ(a.records.size(), 1u);
  ASSERT_EQ(b.records.size(), 1u);
  EXPECT_EQ(a.records[0].report.per_domain, b.records[0].report.per_domain);
  EXPECT_NE(a.records[0].data_hash, b.records[0].data_hash);
}

TEST_F(GridRun, ReportRejectsMixedSources) {
  ExperimentConfig c = SmallConfig();
  c.seeds = {1};
  c.strategies = {train::Strategy::kErm};
  RunGrid(c, dir_);
  // Drop a record from another data source into the same experiment.
  ExperimentConfig other = c;
  other.data.seed = 77;
  const auto o = RunGrid(other, dir_ / "tmp");
  auto rec = o.records.at(0);
  rec.seed = 9;
  const fs::path stray = CellDir(dir_ / ConfigHash(c), "erm", "ext", 9);
  fs::create_directories(stray);
  data::WriteFileAtomic(stray / "record.json", rec.ToJson().dump());
  EXPECT_THAT(
      [&] {
        try {
          WriteReport(dir_ / ConfigHash(c));
        } catch (const std::exception& e) {
          return std::string(e.what());
        }
        return std::string();
      }(),
      HasSubstr("different data sources"));
}

// ---------------------------------------------------------------------------
// Command line

struct Proc {
  int status = -1;
  std::string out;
  std::string err;
};

Proc RunCli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" DEBIAS_DG_BIN "' " +
                          args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int raw = std::system(cmd.c_str());
  Proc p;
  p.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  p.out = Slurp(out);
  p.err = Slurp(err);
  return p;
}

class Cli : public HarnessDir {
 protected:
  void SetUp() override {
    HarnessDir::SetUp();
    ExperimentConfig c = SmallConfig();
    c.strategies = {train::Strategy::kErm, train::Strategy::kE2eCe, train::Strategy::kMct};
    c.seeds = {1};
    std::ofstream(dir_ / "cfg.json") << c.ToJson().dump(2);
    hash_ = ConfigHash(c);
  }
  std::string hash_;
};

int Lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

TEST_F(Cli, ErrorsExitNonzeroWithOneLine) {
  for (const char* args : {"train --bogus", "train --config missing.json", "frobnicate",
                           "train --config cfg.json --strategy nope",
                           "eval --config cfg.json --strategy mct", "report --out nowhere"}) {
    const Proc p = RunCli(args, dir_);
    EXPECT_NE(p.status, 0) << args;
    EXPECT_EQ(Lines(p.err), 1) << args << ": " << p.err;
    EXPECT_THAT(p.err, HasSubstr("error")) << args;
  }
  std::ofstream(dir_ / "bad.json") << R"({"seeds": [1], "train": {"stepz": 3}})";
  const Proc p = RunCli("train --config bad.json", dir_);
  EXPECT_NE(p.status, 0);
  EXPECT_THAT(p.err, HasSubstr("stepz"));
}

TEST_F(Cli, TrainIsDeterministicAcrossRoots) {
  ASSERT_EQ(RunCli("train --config cfg.json --strategy mct --seed 1 --out a", dir_).status, 0);
  ASSERT_EQ(RunCli("train --config cfg.json --strategy mct --seed 1 --out b", dir_).status, 0);
  const auto a = ReadRecord(dir_ / "a" / hash_ / "mct/ext/1");
  const auto b = ReadRecord(dir_ / "b" / hash_ / "mct/ext/1");
  ASSERT_TRUE(a && b);
  EXPECT_EQ(metrics::ToJson(a->report), metrics::ToJson(b->report));
  EXPECT_EQ(a->final_validation, b->final_validation);
  EXPECT_EQ(Slurp(dir_ / "a" / hash_ / "mct/ext/1/history.csv"),
            Slurp(dir_ / "b" / hash_ / "mct/ext/1/history.csv"));
}

TEST_F(Cli, FlagsOverrideConfigAndEnvSetsDefaultRoot) {
  const Proc p = RunCli("train --config cfg.json --strategy erm --steps 7", dir_,
                     "DEBIAS_DG_OUT=envroot");
  ASSERT_EQ(p.status, 0) << p.err;
  ExperimentConfig c = SmallConfig();
  c.train.steps = 7;
  const auto r = ReadRecord(dir_ / "envroot" / ConfigHash(c) / "erm/ext/1");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->steps, 7u);
}

TEST_F(Cli, FullPipeline) {
  ASSERT_EQ(RunCli("train --config cfg.json --out o", dir_).status, 0);
  const Proc rep = RunCli("report --out o", dir_);
  ASSERT_EQ(rep.status, 0) << rep.err;
  const std::string csv = Slurp(dir_ / "o" / hash_ / "report/summary.csv");
  // Header, three strategies x (one split + mean).
  EXPECT_EQ(Lines(csv), 7);
  for (const char* s : {"\nerm,ext,", "\ne2e-ce,ext,", "\nmct,ext,"}) {
    EXPECT_THAT(csv, HasSubstr(s));
  }
  ASSERT_EQ(RunCli("report --out o", dir_).status, 0);
  EXPECT_EQ(Slurp(dir_ / "o" / hash_ / "report/summary.csv"), csv);

  const Proc ev = RunCli("eval o/" + hash_ + "/mct/ext/1", dir_);
  ASSERT_EQ(ev.status, 0) << ev.err;
  const json e = json::parse(ev.out);
  EXPECT_LE(e["abs_diff"].get<double>(), 1e-10);

  const Proc raw = RunCli("c2st --config cfg.json --holdout ext", dir_);
  ASSERT_EQ(raw.status, 0) << raw.err;
  EXPECT_EQ(json::parse(raw.out)["sources"].size(), 3u);
  const Proc emb = RunCli("c2st o/" + hash_ + "/mct/ext/1", dir_);
  ASSERT_EQ(emb.status, 0) << emb.err;
  EXPECT_GE(json::parse(emb.out)["accuracy"].get<double>(), 0.0);

  ASSERT_EQ(RunCli("gen-data --config cfg.json --out data", dir_).status, 0);
  EXPECT_EQ(data::ReadCollection(dir_ / "data").size(), 4u);
}

}  // namespace
}  // namespace debias::harness
