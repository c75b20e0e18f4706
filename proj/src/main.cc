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

// debias_dg: gen-data | train | eval | c2st | report.
//
// Flags override config-file values. The output root is --out, else the
// config's "out", else $DEBIAS_DG_OUT, else ./out. Every failure prints one
// line to stderr and exits nonzero.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "debias/checkpoint.h"
#include "debias/dataset_io.h"
#include "debias/harness.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
namespace h = debias::harness;
using nlohmann::json;

struct Flags {
  std::string config;
  std::string strategy;
  std::string holdout;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> epsilon;
  std::optional<double> eta;
  std::optional<std::size_t> steps;
  std::vector<std::string> taps;
  std::size_t jobs = 1;
  std::string run;
  std::string probe;
  double tolerance = 1e-10;
};

h::ExperimentConfig ResolveConfig(const Flags& f) {
  h::ExperimentConfig c;
  if (!f.config.empty()) c = h::ExperimentConfig::Load(f.config);
  if (!f.strategy.empty()) c.strategies = {debias::train::ParseStrategy(f.strategy)};
  if (!f.holdout.empty()) c.holdouts = {f.holdout};
  if (f.seed) c.seeds = {*f.seed};
  if (f.epsilon) c.train.epsilon = *f.epsilon;
  if (f.eta) c.train.eta = *f.eta;
  if (f.steps) c.train.steps = *f.steps;
  if (!f.taps.empty()) c.train.taps = f.taps;
  if (!f.probe.empty()) c.c2st.probe = debias::metrics::ParseProbeKind(f.probe);
  c.Validate();
  return c;
}

fs::path OutputRoot(const Flags& f, const h::ExperimentConfig& c) {
  if (!f.out.empty()) return f.out;
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv("DEBIAS_DG_OUT"); env && *env) return env;
  return "out";
}

void AddExperimentFlags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app->add_option("--strategy", f.strategy, "Run only this strategy");
  app->add_option("--holdout", f.holdout, "Held-out domain name");
  app->add_option("--seed", f.seed, "Run only this seed");
  app->add_option("--out", f.out, "Output root (default $DEBIAS_DG_OUT or ./out)");
  app->add_option("--epsilon", f.epsilon, "Perturbation step size");
  app->add_option("--eta", f.eta, "Learning rate");
  app->add_option("--steps", f.steps, "Training steps");
  app->add_option("--tap-set", f.taps, "Comma-separated tap names")->delimiter(',');
}

int GenData(const Flags& f) {
  h::ExperimentConfig c = ResolveConfig(f);
  if (f.seed) c.data.seed = *f.seed;
  const fs::path dir = OutputRoot(f, c);
  const auto domains = c.data.Load();
  debias::data::WriteCollection(domains, dir, json{{"source", c.data.ToJson()}});
  std::cout << "wrote " << domains.size() << " domains to " << dir.string() << "\n";
  return 0;
}

int Train(const Flags& f) {
  const h::ExperimentConfig c = ResolveConfig(f);
  const fs::path root = OutputRoot(f, c);
  const auto summary = h::RunGrid(c, root, {.jobs = f.jobs});
  for (const auto& r : summary.records) {
    std::cout << r.strategy << " " << r.held_out << " seed=" << r.seed
              << " self=" << r.report.self << " others=" << r.report.others;
    if (r.report.pd) std::cout << " pd=" << *r.report.pd;
    if (r.report.c2st_acc) std::cout << " c2st=" << *r.report.c2st_acc;
    std::cout << "\n";
  }
  std::cout << "ran " << summary.ran << ", reused " << summary.skipped << " in "
            << h::ExperimentDir(root, c).string() << "\n";
  return 0;
}

fs::path CellFromFlags(const Flags& f) {
  if (!f.run.empty()) return f.run;
  if (f.strategy.empty() || f.holdout.empty() || !f.seed) {
    throw std::invalid_argument("eval: give a run directory or --strategy, --holdout and --seed");
  }
  const h::ExperimentConfig c = ResolveConfig(f);
  return h::CellDir(h::ExperimentDir(OutputRoot(f, c), c), f.strategy, f.holdout, *f.seed);
}

int Eval(const Flags& f) {
  const fs::path cell = CellFromFlags(f);
  const auto e = h::EvalCell(cell);
  const double diff = std::abs(e.validation - e.recorded);
  json out = {{"run", cell.string()},
              {"validation", e.validation},
              {"recorded_validation", e.recorded},
              {"abs_diff", diff},
              {"report", debias::metrics::ToJson(e.report)}};
  std::cout << out.dump() << "\n";
  if (!(diff <= f.tolerance)) {
    throw std::runtime_error("eval: validation metric differs from the record by " +
                             std::to_string(diff));
  }
  return 0;
}

int C2st(const Flags& f) {
  std::vector<debias::Tensor> sources;
  std::vector<std::string> names;
  debias::metrics::C2stConfig cfg;
  if (!f.run.empty()) {
    // Embeddings of a trained model on the test rows of its training domains.
    const fs::path cell = f.run;
    const auto record = h::ReadRecord(cell);
    if (!record) throw std::runtime_error(cell.string() + ": no complete run record");
    const fs::path exp = cell.parent_path().parent_path().parent_path();
    json manifest = json::parse(std::ifstream(exp / "config.json"));
    manifest.erase("config_hash");
    const auto c = h::ExperimentConfig::FromJson(manifest);
    cfg = c.c2st;
    const auto domains = c.data.Load();
    const auto ck = debias::ckpt::Load(cell / record->checkpoint_path);
    for (const auto& d : domains) {
      if (d.name == record->held_out) continue;
      sources.push_back(ck.net.Embed(d.SplitX(debias::data::Split::kTest)));
      names.push_back(d.name);
    }
  } else {
    const h::ExperimentConfig c = ResolveConfig(f);
    cfg = c.c2st;
    for (const auto& d : c.data.Load()) {
      if (d.name == f.holdout) continue;
      sources.push_back(d.SplitX(debias::data::Split::kTest));
      names.push_back(d.name);
    }
  }
  if (!f.probe.empty()) cfg.probe = debias::metrics::ParseProbeKind(f.probe);
  if (f.seed) cfg.seed = *f.seed;
  const auto r = debias::metrics::C2st(sources, cfg);
  std::cout << json{{"sources", names},
                    {"accuracy", r.accuracy},
                    {"chance", r.chance},
                    {"threshold", r.threshold},
                    {"distinguishable", r.distinguishable},
                    {"n_train", r.n_train},
                    {"n_test", r.n_test}}
                   .dump()
            << "\n";
  return 0;
}

int Report(const Flags& f) {
  fs::path dir;
  if (!f.config.empty()) {
    const h::ExperimentConfig c = ResolveConfig(f);
    dir = h::ExperimentDir(OutputRoot(f, c), c);
  } else {
    dir = h::ResolveExperimentDir(f.out.empty() ? OutputRoot(f, {}) : fs::path(f.out));
  }
  const fs::path out = h::WriteReport(dir);
  std::cout << (out / "summary.csv").string() << "\n";
  return 0;
}

std::string OneLine(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-generalization experiments on multi-domain data", "debias_dg"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "Generate the configured domains as dataset files");
  AddExperimentFlags(gen, f);

  auto* train = app.add_subcommand("train", "Run the strategy x held-out x seed grid");
  AddExperimentFlags(train, f);
  train->add_option("--jobs", f.jobs, "Cells trained in parallel")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Recompute metrics of a saved run from its checkpoint");
  AddExperimentFlags(eval, f);
  eval->add_option("run", f.run, "Run directory")->check(CLI::ExistingDirectory);
  eval->add_option("--tolerance", f.tolerance, "Allowed validation-metric difference");

  auto* c2st = app.add_subcommand("c2st", "Classifier two-sample test between domains");
  AddExperimentFlags(c2st, f);
  c2st->add_option("run", f.run, "Run directory; tests its embeddings instead of raw features")
      ->check(CLI::ExistingDirectory);
  c2st->add_option("--probe", f.probe, "linear or mlp");

  auto* report = app.add_subcommand("report", "Aggregate run records into summary CSVs");
  AddExperimentFlags(report, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "debias_dg: error: " << OneLine(e.what()) << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return GenData(f);
    if (train->parsed()) return Train(f);
    if (eval->parsed()) return Eval(f);
    if (c2st->parsed()) return C2st(f);
    if (report->parsed()) return Report(f);
  } catch (const std::exception& e) {
    std::cerr << "debias_dg: error: " << OneLine(e.what()) << "\n";
    return 1;
  }
  return 1;
}
