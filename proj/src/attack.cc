#include "conceptguard/attack.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "conceptguard/clustering.h"
#include "conceptguard/error.h"
#include "conceptguard/rng.h"
#include "json.hpp"

namespace conceptguard {
namespace {

constexpr double kNoMatch = -std::numeric_limits<double>::infinity();

double ZFromCounts(size_t matches, size_t target_matches, double p0) {
  if (matches == 0 || target_matches == 0) return kNoMatch;
  const double p_cond = static_cast<double>(target_matches) / static_cast<double>(matches);
  return (p_cond - p0) / (p0 * (1.0 - p0) / p_cond);
}

double BaseRate(const ConceptDataset& dataset, ClassLabel target) {
  if (dataset.empty()) throw std::invalid_argument("Z-score needs a non-empty dataset");
  size_t n_target = 0;
  for (const auto& s : dataset.samples) n_target += s.label == target;
  if (n_target == 0 || n_target == dataset.size()) {
    throw std::invalid_argument("Z-score undefined: target class is absent or covers every sample");
  }
  return static_cast<double>(n_target) / static_cast<double>(dataset.size());
}

bool Matches(ConceptView concepts, const Trigger& trigger) {
  return std::all_of(trigger.entries.begin(), trigger.entries.end(),
                     [&](const TriggerEntry& e) { return concepts[e.index] == e.value; });
}

}  // namespace

std::string AttackModeName(AttackMode mode) { return mode == AttackMode::kCat ? "cat" : "cat+"; }

AttackMode ParseAttackMode(const std::string& name) {
  if (name == "cat" || name == "CAT") return AttackMode::kCat;
  if (name == "cat+" || name == "CAT+" || name == "cat_plus" || name == "CAT_PLUS") {
    return AttackMode::kCatPlus;
  }
  throw std::invalid_argument("unknown attack mode '" + name + "' (expected cat or cat+)");
}

void Trigger::Validate(size_t concept_count) const {
  std::set<size_t> seen;
  for (const auto& e : entries) {
    if (e.index >= concept_count) {
      throw std::invalid_argument("trigger concept " + std::to_string(e.index + 1) +
                                  " exceeds concept count " + std::to_string(concept_count));
    }
    if (e.value > 1) throw std::invalid_argument("trigger values must be 0 or 1");
    if (!seen.insert(e.index).second) {
      throw std::invalid_argument("trigger repeats concept " + std::to_string(e.index + 1));
    }
  }
}

std::string TriggerToJson(const Trigger& trigger, const AttackConfig& provenance) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : trigger.entries) {
    entries.push_back({e.index + 1, static_cast<int>(e.value)});
  }
  nlohmann::json doc{{"entries", entries},
                     {"mode", AttackModeName(provenance.mode)},
                     {"seed", provenance.seed},
                     {"target_class", provenance.target_class + 1},
                     {"injection_rate", provenance.injection_rate},
                     {"trigger_size", trigger.size()}};
  return doc.dump();
}

Trigger TriggerFromJson(const std::string& text, AttackConfig* provenance) {
  Trigger trigger;
  try {
    auto doc = nlohmann::json::parse(text);
    for (const auto& pair : doc.at("entries")) {
      if (!pair.is_array() || pair.size() != 2) throw Error("trigger entry must be [index, value]");
      const int64_t index = pair[0].get<int64_t>();
      const int value = pair[1].get<int>();
      if (index < 1) throw Error("trigger indices are 1-based");
      if (value != 0 && value != 1) throw Error("trigger values must be 0 or 1");
      trigger.entries.push_back({static_cast<size_t>(index - 1), static_cast<uint8_t>(value)});
    }
    if (provenance) {
      provenance->mode = ParseAttackMode(doc.value("mode", std::string("cat")));
      provenance->seed = doc.value("seed", uint64_t{0});
      provenance->target_class = doc.value("target_class", 1) - 1;
      provenance->injection_rate = doc.value("injection_rate", 0.0);
      provenance->trigger_size = static_cast<int>(trigger.size());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed trigger JSON: ") + e.what());
  }
  return trigger;
}

void SaveTrigger(const Trigger& trigger, const AttackConfig& provenance,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << TriggerToJson(trigger, provenance) << '\n';
}

Trigger LoadTrigger(const std::filesystem::path& path, AttackConfig* provenance) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return TriggerFromJson(buffer.str(), provenance);
}

ConceptVector EmbedTrigger(ConceptView concepts, const Trigger& trigger) {
  ConceptVector out(concepts.begin(), concepts.end());
  for (const auto& e : trigger.entries) {
    if (e.index >= out.size()) throw std::invalid_argument("trigger index out of range");
    out[e.index] = e.value;
  }
  return out;
}

std::vector<double> ConceptRelevance(const BaseClassifier& probe) {
  if (probe.hidden_units() != 0) throw std::invalid_argument("relevance needs a linear probe");
  const auto& w = probe.output_weights();
  std::vector<double> relevance(w.cols());
  for (Eigen::Index k = 0; k < w.cols(); ++k) relevance[k] = w.col(k).cwiseAbs().sum();
  return relevance;
}

Trigger SelectLeastRelevant(std::span<const double> relevance, int size, Polarity polarity) {
  if (size < 0 || static_cast<size_t>(size) > relevance.size()) {
    throw std::invalid_argument("trigger size must lie in 0..d");
  }
  std::vector<size_t> order(relevance.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return relevance[a] < relevance[b]; });
  const uint8_t value = polarity == Polarity::kPositive ? 0 : 1;
  Trigger trigger;
  for (int i = 0; i < size; ++i) trigger.entries.push_back({order[i], value});
  return trigger;
}

Trigger SelectTriggerCat(const ConceptDataset& dataset, const AttackConfig& config,
                         const TrainingConfig& probe) {
  if (config.trigger_size < 0 || static_cast<size_t>(config.trigger_size) > dataset.concept_count()) {
    throw std::invalid_argument("trigger size must lie in 0..d");
  }
  std::set<ClassLabel> present;
  for (const auto& s : dataset.samples) present.insert(s.label);
  if (present.size() < 2) {
    throw std::invalid_argument("concept filter needs at least two classes in the training data");
  }
  TrainingConfig linear = probe;
  linear.hidden_units = 0;
  const BaseClassifier model = TrainDirect(dataset, linear).classifiers().front();
  return SelectLeastRelevant(ConceptRelevance(model), config.trigger_size, DatasetPolarity(dataset));
}

double ZScore(const ConceptDataset& dataset, const Trigger& partial, TriggerEntry candidate,
              ClassLabel target) {
  for (const auto& e : partial.entries) {
    if (e.index == candidate.index) throw std::invalid_argument("candidate concept already in trigger");
  }
  const double p0 = BaseRate(dataset, target);
  size_t matches = 0;
  size_t target_matches = 0;
  for (const auto& s : dataset.samples) {
    if (s.concepts.at(candidate.index) != candidate.value || !Matches(s.concepts, partial)) continue;
    ++matches;
    target_matches += s.label == target;
  }
  return ZFromCounts(matches, target_matches, p0);
}

Trigger SelectTriggerCatPlus(const ConceptDataset& dataset, const AttackConfig& config) {
  const size_t d = dataset.concept_count();
  if (config.trigger_size < 0 || static_cast<size_t>(config.trigger_size) > d) {
    throw std::invalid_argument("trigger size must lie in 0..d");
  }
  Trigger trigger;
  if (config.trigger_size == 0) return trigger;
  const double p0 = BaseRate(dataset, config.target_class);

  // Samples agreeing with every pair chosen so far.
  std::vector<size_t> matched(dataset.size());
  std::iota(matched.begin(), matched.end(), size_t{0});
  std::vector<bool> used(d, false);

  for (int step = 0; step < config.trigger_size; ++step) {
    // counts[k][v]: matches and target matches after adding (k, v).
    std::vector<std::array<size_t, 2>> hits(d, {0, 0});
    std::vector<std::array<size_t, 2>> target_hits(d, {0, 0});
    for (size_t i : matched) {
      const auto& s = dataset.samples[i];
      const bool is_target = s.label == config.target_class;
      for (size_t k = 0; k < d; ++k) {
        ++hits[k][s.concepts[k]];
        target_hits[k][s.concepts[k]] += is_target;
      }
    }
    double best_z = kNoMatch;
    std::optional<TriggerEntry> best;
    for (size_t k = 0; k < d; ++k) {
      if (used[k]) continue;
      for (uint8_t v = 0; v <= 1; ++v) {
        const double z = ZFromCounts(hits[k][v], target_hits[k][v], p0);
        if (z > best_z) {
          best_z = z;
          best = TriggerEntry{k, v};
        }
      }
    }
    if (!best) {
      throw Error("CAT+ cannot extend the trigger past " + std::to_string(step) +
                  " concepts: no candidate keeps any target-class sample");
    }
    trigger.entries.push_back(*best);
    used[best->index] = true;
    std::erase_if(matched, [&](size_t i) {
      return dataset.samples[i].concepts[best->index] != best->value;
    });
  }
  return trigger;
}

Trigger SelectTrigger(const ConceptDataset& dataset, const AttackConfig& config,
                      const TrainingConfig& probe) {
  return config.mode == AttackMode::kCat ? SelectTriggerCat(dataset, config, probe)
                                         : SelectTriggerCatPlus(dataset, config);
}

size_t InjectionCount(double rate, size_t n) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("injection rate must lie in [0,1]");
  const double exact = rate * static_cast<double>(n);
  return static_cast<size_t>(std::floor(exact + 1e-9 * std::max(1.0, exact)));
}

PoisonResult PoisonDataset(const ConceptDataset& dataset, const Trigger& trigger,
                           const AttackConfig& config) {
  trigger.Validate(dataset.concept_count());
  if (config.target_class < 0 || config.target_class >= dataset.class_count) {
    throw std::invalid_argument("target class out of range");
  }
  const size_t count = InjectionCount(config.injection_rate, dataset.size());
  std::vector<size_t> candidates;
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.samples[i].label != config.target_class) candidates.push_back(i);
  }
  if (count > candidates.size()) {
    throw std::invalid_argument("injection needs " + std::to_string(count) + " non-target samples, only " +
                                std::to_string(candidates.size()) + " available");
  }
  Rng rng(config.seed);
  PoisonResult result{dataset, {}};
  for (size_t pick : rng.SampleWithoutReplacement(candidates.size(), count)) {
    Sample& s = result.dataset.samples[candidates[pick]];
    s.concepts = EmbedTrigger(s.concepts, trigger);
    s.label = config.target_class;
    result.poisoned_ids.push_back(s.id);
  }
  std::sort(result.poisoned_ids.begin(), result.poisoned_ids.end());
  return result;
}

ConceptDataset AttackTestSet(const ConceptDataset& test, const Trigger& trigger, ClassLabel target) {
  trigger.Validate(test.concept_count());
  ConceptDataset out{test.vocabulary, {}, test.class_count};
  for (const auto& s : test.samples) {
    if (s.label == target) continue;
    out.samples.push_back(Sample{s.id, EmbedTrigger(s.concepts, trigger), s.label});
  }
  return out;
}

}  // namespace conceptguard
