// conceptguard: concept-level backdoor attacks and the group-ensemble
// certified defense, from data generation to certification.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "conceptguard/attack.h"
#include "conceptguard/certify.h"
#include "conceptguard/clustering.h"
#include "conceptguard/dataset.h"
#include "conceptguard/error.h"
#include "conceptguard/models.h"
#include "conceptguard/pipeline.h"

namespace fs = std::filesystem;
using namespace conceptguard;

namespace {

// Flags shared by every subcommand; unset flags leave the config untouched.
struct Overrides {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<int> m;
  std::optional<double> p;
  std::optional<int> trigger_size;
  std::optional<int> target_class;
  std::optional<std::string> mode;
  std::optional<std::string> out;

  void Register(CLI::App* app) {
    app->add_option("--config", config, "INI experiment config");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--m", m, "number of concept groups");
    app->add_option("--p", p, "injection rate");
    app->add_option("--trigger-size", trigger_size, "trigger size |e|");
    app->add_option("--target-class", target_class, "target class (1-based)");
    app->add_option("--mode", mode, "attack mode: cat or cat+");
    app->add_option("--out", out, "output directory");
  }

  ExperimentConfig Resolve() const {
    ExperimentConfig c = config.empty() ? ExperimentConfig{} : LoadExperimentConfig(config);
    if (seed) c.seed = *seed;
    if (m) c.m = *m;
    if (p) c.attack.injection_rate = *p;
    if (trigger_size) c.attack.trigger_size = *trigger_size;
    if (target_class) c.attack.target_class = *target_class - 1;
    if (mode) c.attack.mode = ParseAttackMode(*mode);
    if (out) c.out_dir = *out;
    return c;
  }
};

ConceptDataset LoadAny(const fs::path& path) { return LoadDataset(path, FormatForPath(path)); }

void PrintRow(const MetricsRow& row) {
  std::cout << MetricsCsvHeader() << "\n" << MetricsCsvLine(row) << "\n";
}

std::vector<double> ParseValues(const std::string& text) {
  std::vector<double> values;
  std::stringstream stream(text);
  std::string cell;
  while (std::getline(stream, cell, ',')) {
    if (cell.empty()) continue;
    size_t used = 0;
    double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument("bad sweep value '" + cell + "'");
    values.push_back(v);
  }
  if (values.empty()) throw std::invalid_argument("--values is empty");
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-level backdoor attacks and certified group-ensemble defense"};
  app.require_subcommand(1);

  Overrides gen_opts, attack_opts, cluster_opts, train_opts, eval_opts, certify_opts, sweep_opts, run_opts;

  auto* gen = app.add_subcommand("gen", "generate a synthetic train/test split");
  gen_opts.Register(gen);
  std::string gen_format = "jsonl";
  gen->add_option("--format", gen_format, "jsonl or csv")->check(CLI::IsMember({"jsonl", "csv"}));

  auto* attack = app.add_subcommand("attack", "select a trigger and poison a training set");
  attack_opts.Register(attack);
  std::string attack_train;
  attack->add_option("--train", attack_train, "training dataset")->required();

  auto* cluster = app.add_subcommand("cluster", "group concepts by text similarity");
  cluster_opts.Register(cluster);
  std::string cluster_vocab;
  cluster->add_option("--vocab", cluster_vocab, "vocabulary file (one concept per line)")->required();

  auto* train = app.add_subcommand("train", "train a group ensemble (m = 1 is direct training)");
  train_opts.Register(train);
  std::string train_data, train_assignment;
  train->add_option("--train", train_data, "training dataset")->required();
  train->add_option("--assignment", train_assignment, "assignment.json; clusters with --m if absent");

  auto* eval = app.add_subcommand("eval", "accuracy and attack success rate of a model bundle");
  eval_opts.Register(eval);
  std::string eval_model, eval_test, eval_trigger;
  eval->add_option("--model", eval_model, "model bundle directory")->required();
  eval->add_option("--test", eval_test, "test dataset")->required();
  eval->add_option("--trigger", eval_trigger, "trigger.json for ASR");

  auto* certify = app.add_subcommand("certify", "certified size and certified accuracy");
  certify_opts.Register(certify);
  std::string certify_model, certify_test;
  uint64_t certify_budget = kDefaultCombinationBudget;
  certify->add_option("--model", certify_model, "model bundle directory")->required();
  certify->add_option("--test", certify_test, "clean test dataset")->required();
  certify->add_option("--budget", certify_budget, "maximum group combinations per t");

  auto* sweep = app.add_subcommand("sweep", "run the pipeline across one axis");
  sweep_opts.Register(sweep);
  std::string sweep_axis, sweep_values;
  bool sweep_chart = false;
  sweep->add_option("--axis", sweep_axis, "m, p, trigger_size or y_tc")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep->add_flag("--chart", sweep_chart, "also write chart.svg");

  auto* run = app.add_subcommand("run", "full attack/defend/evaluate/certify pipeline");
  run_opts.Register(run);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentConfig c = gen_opts.Resolve();
      auto split = LoadOrGenerateData(c);
      fs::create_directories(c.out_dir);
      const auto format = gen_format == "csv" ? DatasetFormat::kCsv : DatasetFormat::kJsonl;
      const std::string ext = gen_format == "csv" ? ".csv" : ".jsonl";
      SaveDataset(split.train, c.out_dir / ("train" + ext), format);
      SaveDataset(split.test, c.out_dir / ("test" + ext), format);
      std::cout << "wrote " << split.train.size() << " train and " << split.test.size()
                << " test samples to " << c.out_dir.string() << "\n";
    } else if (attack->parsed()) {
      ExperimentConfig c = attack_opts.Resolve();
      ConceptDataset data = LoadAny(attack_train);
      AttackConfig cfg = c.attack;
      cfg.seed = StageSeed(c, SeedStream::kAttack);
      TrainingConfig probe = c.training;
      probe.seed = StageSeed(c, SeedStream::kTrain);
      Trigger trigger = SelectTrigger(data, cfg, probe);
      auto poisoned = PoisonDataset(data, trigger, cfg);
      fs::create_directories(c.out_dir);
      SaveTrigger(trigger, cfg, c.out_dir / "trigger.json");
      SaveDataset(poisoned.dataset, c.out_dir / "poisoned.jsonl", DatasetFormat::kJsonl);
      std::ofstream ids(c.out_dir / "poisoned_ids.txt", std::ios::binary);
      for (int64_t id : poisoned.poisoned_ids) ids << id << "\n";
      std::cout << TriggerToJson(trigger, cfg) << "\npoisoned " << poisoned.poisoned_ids.size()
                << " samples\n";
    } else if (cluster->parsed()) {
      ExperimentConfig c = cluster_opts.Resolve();
      ConceptVocabulary vocab = LoadVocabulary(cluster_vocab);
      auto assignment = KMeansCluster(EmbedConcepts(vocab), c.m, StageSeed(c, SeedStream::kCluster), c.kmeans);
      fs::create_directories(c.out_dir);
      assignment.Save(c.out_dir / "assignment.json");
      std::cout << assignment.ToJson() << "\n";
    } else if (train->parsed()) {
      ExperimentConfig c = train_opts.Resolve();
      ConceptDataset data = LoadAny(train_data);
      GroupAssignment assignment =
          train_assignment.empty()
              ? KMeansCluster(EmbedConcepts(data.vocabulary), c.m, StageSeed(c, SeedStream::kCluster), c.kmeans)
              : GroupAssignment::Load(train_assignment);
      TrainingConfig cfg = c.training;
      cfg.seed = StageSeed(c, SeedStream::kTrain);
      EnsembleModel model = TrainEnsemble(data, assignment, cfg, c.threads);
      model.Save(c.out_dir);
      std::cout << "trained " << model.group_count() << " classifiers into " << c.out_dir.string() << "\n";
    } else if (eval->parsed()) {
      ExperimentConfig c = eval_opts.Resolve();
      EnsembleModel model = EnsembleModel::Load(eval_model);
      ConceptDataset test = LoadDataset(eval_test, FormatForPath(eval_test), model.class_count());
      std::cout << "accuracy," << MetricAccuracy(model, test) << "\n";
      auto base = BaseAccuracies(model, test);
      for (size_t j = 0; j < base.size(); ++j) std::cout << "base_accuracy_" << j + 1 << "," << base[j] << "\n";
      if (!eval_trigger.empty()) {
        AttackConfig provenance;
        Trigger trigger = LoadTrigger(eval_trigger, &provenance);
        const ClassLabel target = eval_opts.target_class ? *eval_opts.target_class - 1 : provenance.target_class;
        std::cout << "asr," << MetricAsr(model, test, trigger, target) << "\n";
      }
    } else if (certify->parsed()) {
      ExperimentConfig c = certify_opts.Resolve();
      EnsembleModel model = EnsembleModel::Load(certify_model);
      ConceptDataset test = LoadDataset(certify_test, FormatForPath(certify_test), model.class_count());
      auto report = Certify(model, test, certify_budget);
      fs::create_directories(c.out_dir);
      report.WriteCsv(c.out_dir / "certification.csv");
      report.WriteJson(c.out_dir / "certification.json");
      std::cout << report.AggregateJson() << "\n";
    } else if (sweep->parsed()) {
      ExperimentConfig c = sweep_opts.Resolve();
      const SweepAxis axis = ParseSweepAxis(sweep_axis);
      const auto values = ParseValues(sweep_values);
      auto rows = Sweep(c, axis, values);
      WriteSweep(rows, axis, values, c.out_dir, sweep_chart);
      std::cout << "axis,value," << MetricsCsvHeader() << "\n";
      for (size_t i = 0; i < rows.size(); ++i) {
        std::cout << SweepAxisName(axis) << "," << values[i] << "," << MetricsCsvLine(rows[i]) << "\n";
      }
    } else if (run->parsed()) {
      PrintRow(RunPipeline(run_opts.Resolve()));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
