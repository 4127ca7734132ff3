#ifndef CONCEPTGUARD_TESTS_TEST_UTIL_H_
#define CONCEPTGUARD_TESTS_TEST_UTIL_H_

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "conceptguard/dataset.h"
#include "conceptguard/models.h"
#include "json.hpp"

namespace conceptguard::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("conceptguard_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void WriteFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline ConceptVocabulary NumberedVocabulary(size_t d) {
  std::vector<std::string> texts;
  for (size_t k = 0; k < d; ++k) texts.push_back("concept number " + std::to_string(k + 1));
  return ConceptVocabulary(texts);
}

inline ConceptDataset MakeDataset(const std::vector<ConceptVector>& rows, const std::vector<int>& labels,
                                  int class_count) {
  ConceptDataset d;
  d.vocabulary = NumberedVocabulary(rows.empty() ? 0 : rows.front().size());
  d.class_count = class_count;
  for (size_t i = 0; i < rows.size(); ++i) {
    d.samples.push_back(Sample{static_cast<int64_t>(i), rows[i], labels[i]});
  }
  return d;
}

inline ConceptDataset RandomDataset(std::mt19937_64& gen, size_t n, size_t d, int classes) {
  std::vector<ConceptVector> rows(n, ConceptVector(d));
  std::vector<int> labels(n);
  for (size_t i = 0; i < n; ++i) {
    for (auto& v : rows[i]) v = static_cast<uint8_t>(gen() & 1);
    labels[i] = static_cast<int>(gen() % classes);
  }
  ConceptDataset out = MakeDataset(rows, labels, classes);
  out.vocabulary = NumberedVocabulary(d);
  return out;
}

// Linear classifier with hand-set parameters; weights is class x input.
inline BaseClassifier MakeLinear(int group, const std::vector<std::vector<double>>& weights,
                                 const std::vector<double>& bias) {
  nlohmann::json doc{{"group", group + 1},
                     {"input_dim", weights.front().size()},
                     {"class_count", bias.size()},
                     {"hidden_units", 0},
                     {"output_weights", weights},
                     {"output_bias", bias},
                     {"final_loss", 0.0},
                     {"training",
                      {{"learning_rate", 0.1}, {"epochs", 0}, {"weight_decay", 0.0}, {"hidden_units", 0}, {"seed", 0}}}};
  return BaseClassifier::FromJson(doc.dump());
}

// Ignores its input and always scores `label` highest.
inline BaseClassifier MakeConstant(int group, int input_dim, int class_count, int label) {
  std::vector<double> bias(class_count, 0.0);
  bias[label] = 1.0;
  return MakeLinear(group, std::vector<std::vector<double>>(class_count, std::vector<double>(input_dim, 0.0)),
                    bias);
}

}  // namespace conceptguard::testing

#endif  // CONCEPTGUARD_TESTS_TEST_UTIL_H_
