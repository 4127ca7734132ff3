#ifndef CONCEPTGUARD_ATTACK_H_
#define CONCEPTGUARD_ATTACK_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "conceptguard/dataset.h"
#include "conceptguard/models.h"

namespace conceptguard {

enum class AttackMode { kCat, kCatPlus };

std::string AttackModeName(AttackMode mode);
// Accepts "cat" and "cat+" (also "cat_plus").
AttackMode ParseAttackMode(const std::string& name);

struct TriggerEntry {
  size_t index = 0;
  uint8_t value = 0;

  friend bool operator==(const TriggerEntry&, const TriggerEntry&) = default;
};

struct AttackConfig {
  ClassLabel target_class = 0;
  double injection_rate = 0.05;
  int trigger_size = 1;
  AttackMode mode = AttackMode::kCat;
  uint64_t seed = 0;
};

// Ordered (concept, value) pairs written over a concept vector. The empty
// trigger is the identity.
struct Trigger {
  std::vector<TriggerEntry> entries;

  size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  // Throws std::invalid_argument on duplicate or out-of-range indices or
  // non-binary values.
  void Validate(size_t concept_count) const;

  friend bool operator==(const Trigger&, const Trigger&) = default;
};

// {"entries":[[k,v],...],"mode":...,"seed":...,"target_class":...}; indices
// and classes are 1-based in the file.
std::string TriggerToJson(const Trigger& trigger, const AttackConfig& provenance);
Trigger TriggerFromJson(const std::string& text, AttackConfig* provenance = nullptr);
void SaveTrigger(const Trigger& trigger, const AttackConfig& provenance,
                 const std::filesystem::path& path);
Trigger LoadTrigger(const std::filesystem::path& path, AttackConfig* provenance = nullptr);

ConceptVector EmbedTrigger(ConceptView concepts, const Trigger& trigger);

// Per-concept relevance of a linear probe: sum over classes of |W[l,k]|.
std::vector<double> ConceptRelevance(const BaseClassifier& probe);

// The `size` least relevant concepts (ascending relevance, smaller index on
// ties). Values are 0 on positive datasets and 1 on negative ones.
Trigger SelectLeastRelevant(std::span<const double> relevance, int size, Polarity polarity);

// CAT: trains a linear concept-to-label probe on `dataset` and filters the
// least relevant concepts. `probe` supplies the optimizer settings; its
// hidden layer setting is ignored.
Trigger SelectTriggerCat(const ConceptDataset& dataset, const AttackConfig& config,
                         const TrainingConfig& probe = {});

// Z-score of adding `candidate` to `partial`:
//   p0     = n_target / n
//   p_cond = share of the target class among samples matching every pair in
//            partial + candidate
//   Z      = (p_cond - p0) / (p0 (1 - p0) / p_cond)
// Returns -infinity when nothing matches or p_cond is 0.
double ZScore(const ConceptDataset& dataset, const Trigger& partial, TriggerEntry candidate,
              ClassLabel target);

// CAT+: greedy Z-score maximization over unused (concept, value) pairs; ties
// go to the smaller concept index, then value 0.
Trigger SelectTriggerCatPlus(const ConceptDataset& dataset, const AttackConfig& config);

// Dispatches on config.mode.
Trigger SelectTrigger(const ConceptDataset& dataset, const AttackConfig& config,
                      const TrainingConfig& probe = {});

// floor(rate * n), guarded against representation error in `rate`.
size_t InjectionCount(double rate, size_t n);

struct PoisonResult {
  ConceptDataset dataset;
  // Ascending ids of the replaced samples.
  std::vector<int64_t> poisoned_ids;
};

// Replaces InjectionCount(p, n) randomly chosen non-target samples with
// triggered copies labeled as the target class.
PoisonResult PoisonDataset(const ConceptDataset& dataset, const Trigger& trigger,
                           const AttackConfig& config);

// Non-target samples with the trigger embedded; ground-truth labels are kept.
ConceptDataset AttackTestSet(const ConceptDataset& test, const Trigger& trigger, ClassLabel target);

}  // namespace conceptguard

#endif  // CONCEPTGUARD_ATTACK_H_
