#ifndef CONCEPTGUARD_PIPELINE_H_
#define CONCEPTGUARD_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "conceptguard/attack.h"
#include "conceptguard/certify.h"
#include "conceptguard/clustering.h"
#include "conceptguard/dataset.h"
#include "conceptguard/models.h"

namespace conceptguard {

// Everything one attack -> defend -> evaluate -> certify run needs.
//
// Config files are INI-style; see README.md for the key list. Stage seeds
// are derived from the master `seed` with MixSeed, so one number pins the run.
struct ExperimentConfig {
  // Data: synthetic unless both file paths are set.
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<int> file_class_count;
  SyntheticSpec synthetic;
  int test_per_class = 50;

  // |e| = 12 keeps the default run a meaningful attack on the 60-concept set.
  AttackConfig attack{.trigger_size = 12};
  int m = 6;
  KMeansOptions kmeans;
  TrainingConfig training;

  uint64_t seed = 7;
  uint64_t combination_budget = kDefaultCombinationBudget;
  int threads = 1;
  std::filesystem::path out_dir = "out";

  // Throws std::invalid_argument on out-of-range values or missing files.
  void Validate() const;
};

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);
// INI text that LoadExperimentConfig reads back to the same config.
std::string ExperimentConfigToIni(const ExperimentConfig& config);

// Stage seeds.
enum class SeedStream : uint64_t { kData = 0, kSplit = 1, kAttack = 2, kCluster = 3, kTrain = 4 };
uint64_t StageSeed(const ExperimentConfig& config, SeedStream stream);

// Fraction of samples whose prediction equals the label.
double MetricAccuracy(const EnsembleModel& model, const ConceptDataset& test);
// Accuracy of every base classifier on its own restriction of `test`.
std::vector<double> BaseAccuracies(const EnsembleModel& model, const ConceptDataset& test);
// Fraction of triggered non-target test samples predicted as `target`.
double MetricAsr(const EnsembleModel& model, const ConceptDataset& test, const Trigger& trigger,
                 ClassLabel target);

struct MetricsRow {
  int m = 1;
  double injection_rate = 0.0;
  int trigger_size = 0;
  ClassLabel target_class = 0;
  AttackMode mode = AttackMode::kCat;

  // Direct training (single classifier over all concepts).
  double dt_original_acc = 0.0;
  double dt_acc = 0.0;
  double dt_asr = 0.0;
  // Group ensemble.
  double cg_original_acc = 0.0;
  double cg_acc = 0.0;
  double cg_asr = 0.0;
  std::vector<double> cg_base_acc;
  std::vector<double> cg_base_acc_original;
  // Certification of the clean-trained ensemble, t = 0..m.
  std::vector<CertifiedAccuracyRow> certified;

  double mean_base_acc() const;
};

std::string MetricsCsvHeader();
// Percentages with two decimals; list-valued cells are ';'-joined.
std::string MetricsCsvLine(const MetricsRow& row);

struct DataSplit {
  ConceptDataset train;
  ConceptDataset test;
};

DataSplit LoadOrGenerateData(const ExperimentConfig& config);

struct ExperimentResult {
  MetricsRow metrics;
  Trigger trigger;
  AttackConfig attack;
  GroupAssignment assignment;
  std::vector<int64_t> poisoned_ids;
  EnsembleModel guard_clean;
  EnsembleModel guard_attacked;
  EnsembleModel direct_clean;
  EnsembleModel direct_attacked;
  CertificationReport certification;
};

// Runs the full pipeline in memory. Errors are rethrown as Error tagged with
// the failing stage.
ExperimentResult RunExperiment(const ExperimentConfig& config);
ExperimentResult RunExperiment(const ExperimentConfig& config, const DataSplit& data);

// Writes metrics.csv, certification.csv, certification.json, assignment.json,
// trigger.json, poisoned_ids.txt, config.ini and the model bundles under `dir`.
void WriteArtifacts(const ExperimentResult& result, const ExperimentConfig& config,
                    const std::filesystem::path& dir);

// RunExperiment + WriteArtifacts(config.out_dir).
MetricsRow RunPipeline(const ExperimentConfig& config);

enum class SweepAxis { kM, kInjectionRate, kTriggerSize, kTargetClass };
SweepAxis ParseSweepAxis(const std::string& name);
std::string SweepAxisName(SweepAxis axis);

// Applies one sweep value to a copy of `config`. Integer axes reject
// fractional values; target classes are 1-based.
ExperimentConfig ApplySweepValue(const ExperimentConfig& config, SweepAxis axis, double value);

// One MetricsRow per value, data generated once and shared by every point.
std::vector<MetricsRow> Sweep(const ExperimentConfig& config, SweepAxis axis,
                              const std::vector<double>& values);

// Writes sweep.csv (axis,value + metrics columns) and, if requested,
// chart.svg plotting ASR and ACC against the axis.
void WriteSweep(const std::vector<MetricsRow>& rows, SweepAxis axis, const std::vector<double>& values,
                const std::filesystem::path& dir, bool chart);

// Spearman rank correlation with average ranks for ties. NaN if either
// series is constant.
double SpearmanCorrelation(std::span<const double> x, std::span<const double> y);

}  // namespace conceptguard

#endif  // CONCEPTGUARD_PIPELINE_H_
