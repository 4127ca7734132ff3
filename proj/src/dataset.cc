#include "conceptguard/dataset.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "conceptguard/error.h"
#include "conceptguard/rng.h"
#include "json.hpp"

namespace conceptguard {
namespace {

std::string NormalizeWhitespace(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ch);
  }
  return out;
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream stream(line);
  std::string cell;
  while (std::getline(stream, cell, ',')) cells.push_back(NormalizeWhitespace(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void StripCarriageReturn(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool IsBlank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](char ch) { return std::isspace(static_cast<unsigned char>(ch)); });
}

int ParseInt(const std::string& cell, const std::string& file, size_t line_no) {
  size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(cell, &used);
  } catch (const std::exception&) {
    throw ParseError(file, line_no, "not an integer: '" + cell + "'");
  }
  if (used != cell.size()) throw ParseError(file, line_no, "not an integer: '" + cell + "'");
  return value;
}

struct RawRow {
  ConceptVector concepts;
  int label_one_based;
  size_t line_no;
};

std::vector<RawRow> ReadJsonl(const std::filesystem::path& path, size_t dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file " + path.string());
  const std::string file = path.string();
  std::vector<RawRow> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    StripCarriageReturn(line);
    if (IsBlank(line)) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(file, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!row.is_object() || !row.contains("concepts") || !row.contains("label")) {
      throw ParseError(file, line_no, "expected object with 'concepts' and 'label'");
    }
    const auto& concepts = row["concepts"];
    if (!concepts.is_array()) throw ParseError(file, line_no, "'concepts' is not an array");
    if (concepts.size() != dim) {
      throw ParseError(file, line_no,
                       "expected " + std::to_string(dim) + " concepts, found " +
                           std::to_string(concepts.size()));
    }
    RawRow raw{ConceptVector(dim), 0, line_no};
    for (size_t k = 0; k < dim; ++k) {
      const auto& v = concepts[k];
      if (!v.is_number_integer() || (v.get<int64_t>() != 0 && v.get<int64_t>() != 1)) {
        throw ParseError(file, line_no,
                         "concept " + std::to_string(k + 1) + " is not 0 or 1: " + v.dump());
      }
      raw.concepts[k] = static_cast<uint8_t>(v.get<int64_t>());
    }
    if (!row["label"].is_number_integer()) throw ParseError(file, line_no, "label is not an integer");
    raw.label_one_based = row["label"].get<int>();
    rows.push_back(std::move(raw));
  }
  return rows;
}

std::vector<RawRow> ReadCsv(const std::filesystem::path& path, size_t dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file " + path.string());
  const std::string file = path.string();
  std::vector<RawRow> rows;
  std::string line;
  size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    StripCarriageReturn(line);
    if (IsBlank(line)) continue;
    auto cells = SplitCsvLine(line);
    if (cells.size() != dim + 1) {
      throw ParseError(file, line_no,
                       "expected " + std::to_string(dim + 1) + " columns, found " +
                           std::to_string(cells.size()));
    }
    if (!header_seen) {
      header_seen = true;
      for (size_t k = 0; k < dim; ++k) {
        if (cells[k] != "c" + std::to_string(k + 1)) {
          throw ParseError(file, line_no, "bad header cell '" + cells[k] + "'");
        }
      }
      if (cells[dim] != "label") throw ParseError(file, line_no, "last header cell must be 'label'");
      continue;
    }
    RawRow raw{ConceptVector(dim), 0, line_no};
    for (size_t k = 0; k < dim; ++k) {
      int v = ParseInt(cells[k], file, line_no);
      if (v != 0 && v != 1) {
        throw ParseError(file, line_no, "concept " + std::to_string(k + 1) + " is not 0 or 1: " + cells[k]);
      }
      raw.concepts[k] = static_cast<uint8_t>(v);
    }
    raw.label_one_based = ParseInt(cells[dim], file, line_no);
    rows.push_back(std::move(raw));
  }
  return rows;
}

// Two tokens per family word, neither shared with another family.
const std::vector<std::string>& FamilyWords() {
  static const std::vector<std::string> words = {
      "bill-shape",     "wing-color",      "tail-pattern",   "eye-ring",
      "crown-crest",    "breast-marking",  "throat-patch",   "leg-length",
      "nape-shade",     "belly-spotting",  "back-plumage",   "forehead-stripe",
      "upperparts-hue", "underparts-tone", "head-profile",   "primary-edge"};
  return words;
}

// Shared by every family, so value words carry less weight than family words.
const std::vector<std::string>& ValueWords() {
  static const std::vector<std::string> words = {"black", "striped", "long", "plain"};
  return words;
}

}  // namespace

ConceptVocabulary::ConceptVocabulary(std::vector<std::string> texts) {
  std::set<std::string> seen;
  texts_.reserve(texts.size());
  for (size_t k = 0; k < texts.size(); ++k) {
    std::string normalized = NormalizeWhitespace(texts[k]);
    if (normalized.empty()) {
      throw std::invalid_argument("concept " + std::to_string(k + 1) + " has empty text");
    }
    if (!seen.insert(normalized).second) {
      throw std::invalid_argument("duplicate concept text '" + normalized + "'");
    }
    texts_.push_back(std::move(normalized));
  }
}

void ConceptDataset::Validate() const {
  if (class_count < 1) throw std::invalid_argument("class count must be positive");
  const size_t dim = concept_count();
  for (const auto& s : samples) {
    if (s.concepts.size() != dim) {
      throw std::invalid_argument("sample " + std::to_string(s.id) + " has " +
                                  std::to_string(s.concepts.size()) + " concepts, expected " +
                                  std::to_string(dim));
    }
    if (s.label < 0 || s.label >= class_count) {
      throw std::invalid_argument("sample " + std::to_string(s.id) + " label out of range");
    }
    for (uint8_t v : s.concepts) {
      if (v > 1) throw std::invalid_argument("sample " + std::to_string(s.id) + " has non-binary concept");
    }
  }
}

DatasetFormat FormatForPath(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? DatasetFormat::kCsv : DatasetFormat::kJsonl;
}

std::filesystem::path VocabularyPathFor(const std::filesystem::path& data_path) {
  return std::filesystem::path(data_path.string() + ".vocab");
}

ConceptVocabulary LoadVocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file " + path.string());
  std::vector<std::string> texts;
  std::string line;
  while (std::getline(in, line)) {
    StripCarriageReturn(line);
    texts.push_back(line);
  }
  try {
    return ConceptVocabulary(std::move(texts));
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

void SaveVocabulary(const ConceptVocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary file " + path.string());
  for (const auto& text : vocab.texts()) out << text << '\n';
}

ConceptDataset LoadDataset(const std::filesystem::path& path, DatasetFormat format,
                           std::optional<int> class_count,
                           std::optional<std::filesystem::path> vocab_path) {
  ConceptDataset dataset;
  dataset.vocabulary = LoadVocabulary(vocab_path.value_or(VocabularyPathFor(path)));
  const size_t dim = dataset.concept_count();
  auto rows = format == DatasetFormat::kJsonl ? ReadJsonl(path, dim) : ReadCsv(path, dim);

  int max_label = 0;
  for (const auto& row : rows) max_label = std::max(max_label, row.label_one_based);
  dataset.class_count = class_count.value_or(std::max(max_label, 1));
  if (dataset.class_count < 1) throw Error("class count must be positive");

  dataset.samples.reserve(rows.size());
  for (auto& row : rows) {
    if (row.label_one_based < 1 || row.label_one_based > dataset.class_count) {
      throw ParseError(path.string(), row.line_no,
                       "label " + std::to_string(row.label_one_based) + " outside 1.." +
                           std::to_string(dataset.class_count));
    }
    dataset.samples.push_back(Sample{static_cast<int64_t>(dataset.samples.size()),
                                     std::move(row.concepts), row.label_one_based - 1});
  }
  return dataset;
}

void SaveDataset(const ConceptDataset& dataset, const std::filesystem::path& path,
                 DatasetFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset file " + path.string());
  const size_t dim = dataset.concept_count();
  if (format == DatasetFormat::kCsv) {
    for (size_t k = 0; k < dim; ++k) out << 'c' << (k + 1) << ',';
    out << "label\n";
    for (const auto& s : dataset.samples) {
      for (uint8_t v : s.concepts) out << static_cast<int>(v) << ',';
      out << (s.label + 1) << '\n';
    }
  } else {
    for (const auto& s : dataset.samples) {
      out << "{\"concepts\":[";
      for (size_t k = 0; k < s.concepts.size(); ++k) {
        if (k) out << ',';
        out << static_cast<int>(s.concepts[k]);
      }
      out << "],\"label\":" << (s.label + 1) << "}\n";
    }
  }
  SaveVocabulary(dataset.vocabulary, VocabularyPathFor(path));
}

void SyntheticSpec::Validate() const {
  if (family_count <= 0) throw std::invalid_argument("family_count must be positive");
  if (class_count < 1) throw std::invalid_argument("class_count must be positive");
  if (concept_count < 1) throw std::invalid_argument("concept_count must be positive");
  if (family_count > concept_count) throw std::invalid_argument("family_count exceeds concept_count");
  if (samples_per_class < 0) throw std::invalid_argument("samples_per_class must be non-negative");
  if (on_concepts_per_family < 0) throw std::invalid_argument("on_concepts_per_family must be non-negative");
  auto is_prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!is_prob(activation_prob_on) || !is_prob(activation_prob_off)) {
    throw std::invalid_argument("activation probabilities must lie in [0,1]");
  }
}

SyntheticData GenerateSynthetic(const SyntheticSpec& spec) {
  spec.Validate();
  const int d = spec.concept_count;
  const int families = spec.family_count;
  Rng rng(spec.seed);

  SyntheticData out;
  out.family_of.resize(d);
  std::vector<std::vector<int>> members(families);
  for (int k = 0; k < d; ++k) {
    int f = static_cast<int>(static_cast<int64_t>(k) * families / d);
    out.family_of[k] = f;
    members[f].push_back(k);
  }

  const auto& family_words = FamilyWords();
  const auto& value_words = ValueWords();
  std::vector<std::string> texts(d);
  for (int f = 0; f < families; ++f) {
    std::string family_word = family_words[f % family_words.size()];
    if (f >= static_cast<int>(family_words.size())) {
      family_word += std::to_string(f / family_words.size() + 1);
    }
    for (size_t i = 0; i < members[f].size(); ++i) {
      const int k = members[f][i];
      texts[k] = family_word + " attribute " + std::to_string(k + 1) + " is " + value_words[i % value_words.size()];
    }
  }
  out.dataset.vocabulary = ConceptVocabulary(std::move(texts));
  out.dataset.class_count = spec.class_count;

  out.class_templates.assign(spec.class_count, ConceptVector(d, 0));
  for (int l = 0; l < spec.class_count; ++l) {
    for (int f = 0; f < families; ++f) {
      const size_t take = std::min<size_t>(spec.on_concepts_per_family, members[f].size());
      for (size_t pick : rng.SampleWithoutReplacement(members[f].size(), take)) {
        out.class_templates[l][members[f][pick]] = 1;
      }
    }
  }

  out.dataset.samples.reserve(static_cast<size_t>(spec.class_count) * spec.samples_per_class);
  for (int l = 0; l < spec.class_count; ++l) {
    const auto& tmpl = out.class_templates[l];
    for (int i = 0; i < spec.samples_per_class; ++i) {
      Sample s{static_cast<int64_t>(out.dataset.samples.size()), ConceptVector(d), l};
      for (int k = 0; k < d; ++k) {
        const double p = tmpl[k] ? spec.activation_prob_on : spec.activation_prob_off;
        s.concepts[k] = rng.Bernoulli(p) ? 1 : 0;
      }
      out.dataset.samples.push_back(std::move(s));
    }
  }
  return out;
}

std::pair<ConceptDataset, ConceptDataset> TrainTestSplit(const ConceptDataset& dataset,
                                                         int test_per_class, uint64_t seed) {
  if (test_per_class < 0) throw std::invalid_argument("test_per_class must be non-negative");
  Rng rng(seed);
  std::vector<std::vector<size_t>> by_class(dataset.class_count);
  for (size_t i = 0; i < dataset.samples.size(); ++i) by_class.at(dataset.samples[i].label).push_back(i);
  std::vector<bool> is_test(dataset.samples.size(), false);
  for (const auto& rows : by_class) {
    const size_t take = std::min<size_t>(test_per_class, rows.size());
    for (size_t pick : rng.SampleWithoutReplacement(rows.size(), take)) is_test[rows[pick]] = true;
  }
  ConceptDataset train{dataset.vocabulary, {}, dataset.class_count};
  ConceptDataset test{dataset.vocabulary, {}, dataset.class_count};
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    (is_test[i] ? test : train).samples.push_back(dataset.samples[i]);
  }
  RenumberSamples(train);
  RenumberSamples(test);
  return {std::move(train), std::move(test)};
}

Polarity DatasetPolarity(const ConceptDataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("polarity of an empty dataset is undefined");
  uint64_t ones = 0;
  uint64_t total = 0;
  for (const auto& s : dataset.samples) {
    for (uint8_t v : s.concepts) ones += v;
    total += s.concepts.size();
  }
  return 2 * ones > total ? Polarity::kPositive : Polarity::kNegative;
}

void RenumberSamples(ConceptDataset& dataset) {
  for (size_t i = 0; i < dataset.samples.size(); ++i) dataset.samples[i].id = static_cast<int64_t>(i);
}

}  // namespace conceptguard
