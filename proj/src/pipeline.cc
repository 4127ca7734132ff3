#include "conceptguard/pipeline.h"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "conceptguard/error.h"
#include "conceptguard/rng.h"
#include "conceptguard/svg_chart.h"

namespace conceptguard {
namespace {

std::string Percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

std::string Decimal(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return buf;
}

template <typename T>
std::string JoinPercents(const std::vector<T>& values, const std::function<std::optional<double>(const T&)>& pick) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ';';
    auto v = pick(values[i]);
    out += v ? Percent(*v) : "NA";
  }
  return out;
}

// Runs one pipeline stage, tagging any failure with the stage name.
template <typename F>
auto Stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const std::exception& e) {
    throw Error(std::string("[") + name + "] " + e.what());
  }
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

void ExperimentConfig::Validate() const {
  if (m < 1) throw std::invalid_argument("m must be at least 1");
  if (train_path.has_value() != test_path.has_value()) {
    throw std::invalid_argument("file data needs both a train and a test path");
  }
  if (train_path) {
    for (const auto& p : {*train_path, *test_path}) {
      if (!std::filesystem::exists(p)) throw std::invalid_argument("data file not found: " + p.string());
    }
  } else {
    synthetic.Validate();
    if (m > synthetic.concept_count) throw std::invalid_argument("m exceeds the concept count");
    if (attack.target_class < 0 || attack.target_class >= synthetic.class_count) {
      throw std::invalid_argument("target class outside 1.." + std::to_string(synthetic.class_count));
    }
  }
  if (test_per_class < 0) throw std::invalid_argument("test_per_class must be non-negative");
  if (!(attack.injection_rate >= 0.0 && attack.injection_rate <= 1.0)) {
    throw std::invalid_argument("injection rate must lie in [0,1]");
  }
  if (attack.trigger_size < 0) throw std::invalid_argument("trigger size must be non-negative");
  if (training.epochs < 0 || training.learning_rate <= 0.0 || training.hidden_units < 0) {
    throw std::invalid_argument("invalid training hyperparameters");
  }
  if (threads < 1) throw std::invalid_argument("threads must be positive");
}

namespace {

const std::set<std::string> kConfigKeys = {
    "run.seed", "run.out", "run.threads", "run.combination_budget",
    "data.source", "data.train", "data.test", "data.class_count", "data.concept_count",
    "data.family_count", "data.samples_per_class", "data.on_concepts_per_family",
    "data.activation_prob_on", "data.activation_prob_off", "data.test_per_class",
    "attack.mode", "attack.p", "attack.trigger_size", "attack.target_class",
    "defense.m", "defense.kmeans_restarts", "defense.kmeans_max_iterations", "defense.kmeans_tolerance",
    "train.learning_rate", "train.epochs", "train.weight_decay", "train.hidden_units"};

// 1-based line of `key` inside [section], 0 if not found. property_tree
// drops positions, so errors re-scan the file.
int LineOf(const std::filesystem::path& path, const std::string& section, const std::string& key) {
  std::ifstream in(path);
  std::string line, current;
  for (int number = 1; std::getline(in, line); ++number) {
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    line = line.substr(first);
    if (line[0] == '[') {
      current = line.substr(1, line.find(']') - 1);
    } else if (current == section && line.compare(0, key.size(), key) == 0 &&
               (line.size() == key.size() || line[key.size()] == ' ' || line[key.size()] == '=' ||
                line[key.size()] == '\t')) {
      return number;
    }
  }
  return 0;
}

}  // namespace

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(path.string(), e.line(), e.message());
  }
  for (const auto& [section, keys] : tree) {
    if (keys.empty()) {
      throw ParseError(path.string(), LineOf(path, "", section), "key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : keys) {
      if (!kConfigKeys.count(section + "." + key)) {
        throw ParseError(path.string(), LineOf(path, section, key),
                         "unknown key '" + key + "' in [" + section + "]");
      }
    }
  }
  // Typed lookup that keeps `fallback` only when the key is absent.
  auto get = [&]<typename T>(const std::string& dotted, T fallback) -> T {
    const auto raw = tree.get_optional<std::string>(dotted);
    if (!raw) return fallback;
    const auto dot = dotted.find('.');
    const int line = LineOf(path, dotted.substr(0, dot), dotted.substr(dot + 1));
    std::istringstream in(*raw);
    T value{};
    in >> value;
    if (!in || !(in >> std::ws).eof()) {
      throw ParseError(path.string(), line, "bad value '" + *raw + "' for " + dotted);
    }
    return value;
  };
  ExperimentConfig c;
  c.seed = get("run.seed", c.seed);
  c.out_dir = tree.get("run.out", c.out_dir.string());
  c.threads = get("run.threads", c.threads);
  c.combination_budget = get("run.combination_budget", c.combination_budget);

  const std::string source = tree.get<std::string>("data.source", "synthetic");
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& key) {
    const auto raw = tree.get_optional<std::string>(key);
    if (!raw) throw ParseError(path.string(), 0, key + " is required when data.source = file");
    std::filesystem::path fp(*raw);
    return fp.is_absolute() ? fp : base / fp;
  };
  if (source == "file") {
    c.train_path = resolve("data.train");
    c.test_path = resolve("data.test");
    if (tree.get_optional<std::string>("data.class_count")) c.file_class_count = get("data.class_count", 0);
  } else if (source != "synthetic") {
    throw ParseError(path.string(), LineOf(path, "data", "source"), "data.source must be 'synthetic' or 'file'");
  }
  auto& s = c.synthetic;
  s.class_count = get("data.class_count", s.class_count);
  s.concept_count = get("data.concept_count", s.concept_count);
  s.family_count = get("data.family_count", s.family_count);
  s.samples_per_class = get("data.samples_per_class", s.samples_per_class);
  s.on_concepts_per_family = get("data.on_concepts_per_family", s.on_concepts_per_family);
  s.activation_prob_on = get("data.activation_prob_on", s.activation_prob_on);
  s.activation_prob_off = get("data.activation_prob_off", s.activation_prob_off);
  c.test_per_class = get("data.test_per_class", c.test_per_class);

  try {
    c.attack.mode = ParseAttackMode(tree.get<std::string>("attack.mode", AttackModeName(c.attack.mode)));
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string(), LineOf(path, "attack", "mode"), e.what());
  }
  c.attack.injection_rate = get("attack.p", c.attack.injection_rate);
  c.attack.trigger_size = get("attack.trigger_size", c.attack.trigger_size);
  c.attack.target_class = get("attack.target_class", c.attack.target_class + 1) - 1;

  c.m = get("defense.m", c.m);
  c.kmeans.restarts = get("defense.kmeans_restarts", c.kmeans.restarts);
  c.kmeans.max_iterations = get("defense.kmeans_max_iterations", c.kmeans.max_iterations);
  c.kmeans.tolerance = get("defense.kmeans_tolerance", c.kmeans.tolerance);

  c.training.learning_rate = get("train.learning_rate", c.training.learning_rate);
  c.training.epochs = get("train.epochs", c.training.epochs);
  c.training.weight_decay = get("train.weight_decay", c.training.weight_decay);
  c.training.hidden_units = get("train.hidden_units", c.training.hidden_units);
  return c;
}

std::string ExperimentConfigToIni(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[run]\n"
      << "seed = " << c.seed << "\n"
      << "out = " << c.out_dir.string() << "\n"
      << "threads = " << c.threads << "\n"
      << "combination_budget = " << c.combination_budget << "\n\n";
  out << "[data]\n";
  if (c.train_path) {
    out << "source = file\n"
        << "train = " << std::filesystem::absolute(*c.train_path).string() << "\n"
        << "test = " << std::filesystem::absolute(*c.test_path).string() << "\n";
    if (c.file_class_count) out << "class_count = " << *c.file_class_count << "\n";
  } else {
    const auto& s = c.synthetic;
    out << "source = synthetic\n"
        << "class_count = " << s.class_count << "\n"
        << "concept_count = " << s.concept_count << "\n"
        << "family_count = " << s.family_count << "\n"
        << "samples_per_class = " << s.samples_per_class << "\n"
        << "test_per_class = " << c.test_per_class << "\n"
        << "on_concepts_per_family = " << s.on_concepts_per_family << "\n"
        << "activation_prob_on = " << Decimal(s.activation_prob_on) << "\n"
        << "activation_prob_off = " << Decimal(s.activation_prob_off) << "\n";
  }
  out << "\n[attack]\n"
      << "mode = " << AttackModeName(c.attack.mode) << "\n"
      << "p = " << Decimal(c.attack.injection_rate) << "\n"
      << "trigger_size = " << c.attack.trigger_size << "\n"
      << "target_class = " << c.attack.target_class + 1 << "\n\n";
  out << "[defense]\n"
      << "m = " << c.m << "\n"
      << "kmeans_restarts = " << c.kmeans.restarts << "\n"
      << "kmeans_max_iterations = " << c.kmeans.max_iterations << "\n"
      << "kmeans_tolerance = " << Decimal(c.kmeans.tolerance) << "\n\n";
  out << "[train]\n"
      << "learning_rate = " << Decimal(c.training.learning_rate) << "\n"
      << "epochs = " << c.training.epochs << "\n"
      << "weight_decay = " << Decimal(c.training.weight_decay) << "\n"
      << "hidden_units = " << c.training.hidden_units << "\n";
  return out.str();
}

uint64_t StageSeed(const ExperimentConfig& config, SeedStream stream) {
  return MixSeed(config.seed, static_cast<uint64_t>(stream));
}

double MetricAccuracy(const EnsembleModel& model, const ConceptDataset& test) {
  if (test.empty()) throw std::invalid_argument("accuracy of an empty test set");
  size_t correct = 0;
  for (const auto& s : test.samples) correct += model.Predict(s.concepts) == s.label;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<double> BaseAccuracies(const EnsembleModel& model, const ConceptDataset& test) {
  if (test.empty()) throw std::invalid_argument("accuracy of an empty test set");
  std::vector<size_t> correct(model.group_count(), 0);
  for (const auto& s : test.samples) {
    auto predictions = model.BasePredictions(s.concepts);
    for (size_t j = 0; j < predictions.size(); ++j) correct[j] += predictions[j] == s.label;
  }
  std::vector<double> out;
  for (size_t c : correct) out.push_back(static_cast<double>(c) / static_cast<double>(test.size()));
  return out;
}

double MetricAsr(const EnsembleModel& model, const ConceptDataset& test, const Trigger& trigger,
                 ClassLabel target) {
  const ConceptDataset attacked = AttackTestSet(test, trigger, target);
  if (attacked.empty()) throw std::invalid_argument("no non-target test samples to attack");
  size_t hits = 0;
  for (const auto& s : attacked.samples) hits += model.Predict(s.concepts) == target;
  return static_cast<double>(hits) / static_cast<double>(attacked.size());
}

double MetricsRow::mean_base_acc() const {
  if (cg_base_acc.empty()) return 0.0;
  return std::accumulate(cg_base_acc.begin(), cg_base_acc.end(), 0.0) /
         static_cast<double>(cg_base_acc.size());
}

std::string MetricsCsvHeader() {
  return "m,p,trigger_size,target_class,mode,dt_original_acc,dt_acc,dt_asr,cg_original_acc,cg_acc,"
         "cg_asr,cg_mean_base_acc,cg_base_acc,cg_base_acc_original,cert_independent,cert_joint";
}

std::string MetricsCsvLine(const MetricsRow& r) {
  std::ostringstream out;
  auto direct = [](const double& v) -> std::optional<double> { return v; };
  out << r.m << ',' << Decimal(r.injection_rate) << ',' << r.trigger_size << ',' << r.target_class + 1
      << ',' << AttackModeName(r.mode) << ',' << Percent(r.dt_original_acc) << ',' << Percent(r.dt_acc)
      << ',' << Percent(r.dt_asr) << ',' << Percent(r.cg_original_acc) << ',' << Percent(r.cg_acc) << ','
      << Percent(r.cg_asr) << ',' << Percent(r.mean_base_acc()) << ','
      << JoinPercents<double>(r.cg_base_acc, direct) << ','
      << JoinPercents<double>(r.cg_base_acc_original, direct) << ','
      << JoinPercents<CertifiedAccuracyRow>(
             r.certified, [](const CertifiedAccuracyRow& row) -> std::optional<double> { return row.independent; })
      << ','
      << JoinPercents<CertifiedAccuracyRow>(
             r.certified, [](const CertifiedAccuracyRow& row) { return row.joint; });
  return out.str();
}

DataSplit LoadOrGenerateData(const ExperimentConfig& config) {
  return Stage("data", [&] {
    if (config.train_path) {
      DataSplit split{LoadDataset(*config.train_path, FormatForPath(*config.train_path), config.file_class_count),
                      LoadDataset(*config.test_path, FormatForPath(*config.test_path), config.file_class_count)};
      const int classes = std::max(split.train.class_count, split.test.class_count);
      split.train.class_count = split.test.class_count = classes;
      if (split.train.vocabulary != split.test.vocabulary) {
        throw Error("train and test vocabularies differ");
      }
      return split;
    }
    SyntheticSpec spec = config.synthetic;
    spec.samples_per_class += config.test_per_class;
    spec.seed = StageSeed(config, SeedStream::kData);
    auto generated = GenerateSynthetic(spec);
    auto [train, test] = TrainTestSplit(generated.dataset, config.test_per_class,
                                        StageSeed(config, SeedStream::kSplit));
    return DataSplit{std::move(train), std::move(test)};
  });
}

ExperimentResult RunExperiment(const ExperimentConfig& config) {
  Stage("config", [&] { config.Validate(); });
  return RunExperiment(config, LoadOrGenerateData(config));
}

ExperimentResult RunExperiment(const ExperimentConfig& config, const DataSplit& data) {
  Stage("config", [&] {
    config.Validate();
    if (config.attack.target_class >= data.train.class_count) {
      throw std::invalid_argument("target class outside the dataset's classes");
    }
    if (config.m > static_cast<int>(data.train.concept_count())) {
      throw std::invalid_argument("m exceeds the concept count");
    }
  });
  ExperimentResult result;
  result.attack = config.attack;
  result.attack.seed = StageSeed(config, SeedStream::kAttack);
  TrainingConfig training = config.training;
  training.seed = StageSeed(config, SeedStream::kTrain);

  result.trigger = Stage("attack", [&] { return SelectTrigger(data.train, result.attack, training); });
  auto poisoned = Stage("attack", [&] { return PoisonDataset(data.train, result.trigger, result.attack); });
  result.poisoned_ids = poisoned.poisoned_ids;

  result.assignment = Stage("cluster", [&] {
    return KMeansCluster(EmbedConcepts(data.train.vocabulary), config.m,
                         StageSeed(config, SeedStream::kCluster), config.kmeans);
  });

  Stage("train", [&] {
    result.direct_clean = TrainDirect(data.train, training);
    result.direct_attacked = TrainDirect(poisoned.dataset, training);
    result.guard_clean = TrainEnsemble(data.train, result.assignment, training, config.threads);
    result.guard_attacked = TrainEnsemble(poisoned.dataset, result.assignment, training, config.threads);
  });

  MetricsRow& row = result.metrics;
  row.m = config.m;
  row.injection_rate = config.attack.injection_rate;
  row.trigger_size = static_cast<int>(result.trigger.size());
  row.target_class = config.attack.target_class;
  row.mode = config.attack.mode;
  Stage("eval", [&] {
    const ClassLabel target = config.attack.target_class;
    row.dt_original_acc = MetricAccuracy(result.direct_clean, data.test);
    row.dt_acc = MetricAccuracy(result.direct_attacked, data.test);
    row.dt_asr = MetricAsr(result.direct_attacked, data.test, result.trigger, target);
    row.cg_original_acc = MetricAccuracy(result.guard_clean, data.test);
    row.cg_acc = MetricAccuracy(result.guard_attacked, data.test);
    row.cg_asr = MetricAsr(result.guard_attacked, data.test, result.trigger, target);
    row.cg_base_acc = BaseAccuracies(result.guard_attacked, data.test);
    row.cg_base_acc_original = BaseAccuracies(result.guard_clean, data.test);
  });
  result.certification =
      Stage("certify", [&] { return Certify(result.guard_clean, data.test, config.combination_budget); });
  row.certified = result.certification.table;
  return result;
}

void WriteArtifacts(const ExperimentResult& result, const ExperimentConfig& config,
                    const std::filesystem::path& dir) {
  Stage("write", [&] {
    std::filesystem::create_directories(dir);
    WriteText(dir / "metrics.csv", MetricsCsvHeader() + "\n" + MetricsCsvLine(result.metrics) + "\n");
    result.certification.WriteCsv(dir / "certification.csv");
    result.certification.WriteJson(dir / "certification.json");
    result.assignment.Save(dir / "assignment.json");
    SaveTrigger(result.trigger, result.attack, dir / "trigger.json");
    std::string ids;
    for (int64_t id : result.poisoned_ids) ids += std::to_string(id) + "\n";
    WriteText(dir / "poisoned_ids.txt", ids);
    WriteText(dir / "config.ini", ExperimentConfigToIni(config));
    result.guard_attacked.Save(dir / "model");
    result.direct_attacked.Save(dir / "baseline");
  });
}

MetricsRow RunPipeline(const ExperimentConfig& config) {
  auto result = RunExperiment(config);
  WriteArtifacts(result, config, config.out_dir);
  return result.metrics;
}

SweepAxis ParseSweepAxis(const std::string& name) {
  if (name == "m") return SweepAxis::kM;
  if (name == "p") return SweepAxis::kInjectionRate;
  if (name == "trigger_size" || name == "trigger-size") return SweepAxis::kTriggerSize;
  if (name == "y_tc" || name == "target_class" || name == "target-class") return SweepAxis::kTargetClass;
  throw std::invalid_argument("unknown sweep axis '" + name + "' (expected m, p, trigger_size or y_tc)");
}

std::string SweepAxisName(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kM: return "m";
    case SweepAxis::kInjectionRate: return "p";
    case SweepAxis::kTriggerSize: return "trigger_size";
    case SweepAxis::kTargetClass: return "y_tc";
  }
  return "?";
}

ExperimentConfig ApplySweepValue(const ExperimentConfig& config, SweepAxis axis, double value) {
  auto as_int = [&](double v) {
    if (!std::isfinite(v) || v != std::floor(v)) {
      throw std::invalid_argument("sweep axis " + SweepAxisName(axis) + " needs integer values, got " +
                                  Decimal(v));
    }
    return static_cast<int>(v);
  };
  ExperimentConfig c = config;
  switch (axis) {
    case SweepAxis::kM: c.m = as_int(value); break;
    case SweepAxis::kInjectionRate: c.attack.injection_rate = value; break;
    case SweepAxis::kTriggerSize: c.attack.trigger_size = as_int(value); break;
    case SweepAxis::kTargetClass: c.attack.target_class = as_int(value) - 1; break;
  }
  c.Validate();
  return c;
}

std::vector<MetricsRow> Sweep(const ExperimentConfig& config, SweepAxis axis,
                              const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  std::vector<ExperimentConfig> points;
  for (double v : values) points.push_back(Stage("config", [&] { return ApplySweepValue(config, axis, v); }));
  const DataSplit data = LoadOrGenerateData(config);
  std::vector<MetricsRow> rows;
  for (const auto& point : points) rows.push_back(RunExperiment(point, data).metrics);
  return rows;
}

void WriteSweep(const std::vector<MetricsRow>& rows, SweepAxis axis, const std::vector<double>& values,
                const std::filesystem::path& dir, bool chart) {
  std::filesystem::create_directories(dir);
  std::string csv = "axis,value," + MetricsCsvHeader() + "\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    csv += SweepAxisName(axis) + "," + Decimal(values[i]) + "," + MetricsCsvLine(rows[i]) + "\n";
  }
  WriteText(dir / "sweep.csv", csv);
  if (!chart) return;
  std::vector<ChartSeries> series(4);
  series[0].name = "Guard ASR";
  series[1].name = "Guard ACC";
  series[2].name = "Direct ASR";
  series[3].name = "Direct ACC";
  for (const auto& r : rows) {
    series[0].y.push_back(100.0 * r.cg_asr);
    series[1].y.push_back(100.0 * r.cg_acc);
    series[2].y.push_back(100.0 * r.dt_asr);
    series[3].y.push_back(100.0 * r.dt_acc);
  }
  WriteText(dir / "chart.svg",
            RenderLineChart("Accuracy and ASR versus " + SweepAxisName(axis), SweepAxisName(axis), values, series));
}

namespace {

std::vector<double> AverageRanks(std::span<const double> v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double SpearmanCorrelation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("Spearman needs two equal series");
  const auto rx = AverageRanks(x);
  const auto ry = AverageRanks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace conceptguard
