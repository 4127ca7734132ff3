#ifndef CONCEPTGUARD_DATASET_H_
#define CONCEPTGUARD_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace conceptguard {

// Binary concept vector; every entry is 0 or 1.
using ConceptVector = std::vector<uint8_t>;
using ConceptView = std::span<const uint8_t>;

// Class labels are 0-based in memory and 1-based in every file and report.
using ClassLabel = int;

// Ordered concept texts. Index k is concept k of every concept vector.
class ConceptVocabulary {
 public:
  ConceptVocabulary() = default;
  // Collapses whitespace runs and trims each text. Throws std::invalid_argument
  // on empty or duplicate texts.
  explicit ConceptVocabulary(std::vector<std::string> texts);

  size_t concept_count() const { return texts_.size(); }
  const std::vector<std::string>& texts() const { return texts_; }
  const std::string& text(size_t k) const { return texts_.at(k); }

  friend bool operator==(const ConceptVocabulary&, const ConceptVocabulary&) = default;

 private:
  std::vector<std::string> texts_;
};

struct Sample {
  int64_t id = 0;
  ConceptVector concepts;
  ClassLabel label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct ConceptDataset {
  ConceptVocabulary vocabulary;
  std::vector<Sample> samples;
  int class_count = 0;

  size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  size_t concept_count() const { return vocabulary.concept_count(); }

  // Throws std::invalid_argument if any type invariant is violated.
  void Validate() const;

  friend bool operator==(const ConceptDataset&, const ConceptDataset&) = default;
};

enum class DatasetFormat { kJsonl, kCsv };

// Picks the format from the file extension (".csv" vs anything else).
DatasetFormat FormatForPath(const std::filesystem::path& path);

// Sidecar holding the vocabulary of a dataset file: "<path>.vocab".
std::filesystem::path VocabularyPathFor(const std::filesystem::path& data_path);

ConceptVocabulary LoadVocabulary(const std::filesystem::path& path);
void SaveVocabulary(const ConceptVocabulary& vocab, const std::filesystem::path& path);

// Reads a dataset and its vocabulary sidecar. With no explicit class count the
// largest label seen defines it. Malformed rows raise ParseError with the
// offending line number.
ConceptDataset LoadDataset(const std::filesystem::path& path, DatasetFormat format,
                           std::optional<int> class_count = std::nullopt,
                           std::optional<std::filesystem::path> vocab_path = std::nullopt);

// Writes the canonical form of `dataset` plus the vocabulary sidecar.
void SaveDataset(const ConceptDataset& dataset, const std::filesystem::path& path,
                 DatasetFormat format);

struct SyntheticSpec {
  int class_count = 10;
  int concept_count = 60;
  int family_count = 6;
  int samples_per_class = 200;
  // Size of each class's "on" set inside every family.
  int on_concepts_per_family = 5;
  double activation_prob_on = 0.95;
  double activation_prob_off = 0.1;
  uint64_t seed = 0;

  void Validate() const;
};

struct SyntheticData {
  ConceptDataset dataset;
  // family_of[k] is the family whose text template concept k uses.
  std::vector<int> family_of;
  // class_templates[l][k] == 1 iff concept k is in class l's "on" set.
  std::vector<ConceptVector> class_templates;
};

// Deterministic in `spec`. Samples are emitted class by class.
SyntheticData GenerateSynthetic(const SyntheticSpec& spec);

// Seeded stratified split: from every class, `test_per_class` samples (or all
// of them, if fewer) go to the test set. Relative order is preserved and ids
// are reassigned from 0 in each output.
std::pair<ConceptDataset, ConceptDataset> TrainTestSplit(const ConceptDataset& dataset,
                                                         int test_per_class, uint64_t seed);

enum class Polarity { kPositive, kNegative };

// Positive iff the mean concept entry is strictly above 0.5.
Polarity DatasetPolarity(const ConceptDataset& dataset);

// Reassigns ids 0..n-1 in order.
void RenumberSamples(ConceptDataset& dataset);

}  // namespace conceptguard

#endif  // CONCEPTGUARD_DATASET_H_
