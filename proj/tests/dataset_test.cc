#include "conceptguard/dataset.h"

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "conceptguard/clustering.h"
#include "conceptguard/error.h"
#include "test_util.h"

namespace conceptguard {
namespace {

using testing::TempDir;
using testing::WriteFile;

TEST(VocabularyTest, NormalizesWhitespaceAndRejectsDuplicates) {
  ConceptVocabulary vocab({"  Eye   color is black ", "bill shape\tis dagger"});
  EXPECT_EQ(vocab.text(0), "Eye color is black");
  EXPECT_EQ(vocab.text(1), "bill shape is dagger");
  EXPECT_THROW(ConceptVocabulary({"a b", "a  b"}), std::invalid_argument);
  EXPECT_THROW(ConceptVocabulary({"a", "   "}), std::invalid_argument);
}

TEST(LoadDatasetTest, ParsesThreeLineJsonl) {
  TempDir dir("load");
  auto data = dir.path() / "d.jsonl";
  WriteFile(data,
            "{\"concepts\":[0,1,0,1],\"label\":1}\n"
            "{\"concepts\":[1,1,0,0],\"label\":2}\n"
            "{\"concepts\":[0,0,0,0],\"label\":2}\n");
  WriteFile(VocabularyPathFor(data), "c one\nc two\nc three\nc four\n");
  ConceptDataset d = LoadDataset(data, DatasetFormat::kJsonl, 2);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.concept_count(), 4u);
  EXPECT_EQ(d.class_count, 2);
  EXPECT_EQ(d.samples[0].concepts, (ConceptVector{0, 1, 0, 1}));
  EXPECT_EQ(d.samples[0].label, 0);
  EXPECT_EQ(d.samples[2].id, 2);
  EXPECT_NO_THROW(d.Validate());
}

TEST(LoadDatasetTest, EmptyFileIsAnEmptyDataset) {
  TempDir dir("empty");
  auto data = dir.path() / "d.jsonl";
  WriteFile(data, "");
  WriteFile(VocabularyPathFor(data), "a\nb\n");
  ConceptDataset d = LoadDataset(data, DatasetFormat::kJsonl, 3);
  EXPECT_TRUE(d.empty());
  EXPECT_EQ(d.concept_count(), 2u);
}

TEST(LoadDatasetTest, NonBinaryConceptNamesTheLine) {
  TempDir dir("bad");
  auto data = dir.path() / "d.jsonl";
  WriteFile(data,
            "{\"concepts\":[0,1],\"label\":1}\n"
            "{\"concepts\":[0,2],\"label\":1}\n");
  WriteFile(VocabularyPathFor(data), "a\nb\n");
  try {
    LoadDataset(data, DatasetFormat::kJsonl, 2);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
}

TEST(LoadDatasetTest, RejectsWrongArityAndLabelOutOfRange) {
  TempDir dir("arity");
  auto data = dir.path() / "d.jsonl";
  WriteFile(VocabularyPathFor(data), "a\nb\n");
  WriteFile(data, "{\"concepts\":[0,1,1],\"label\":1}\n");
  EXPECT_THROW(LoadDataset(data, DatasetFormat::kJsonl, 2), ParseError);
  WriteFile(data, "{\"concepts\":[0,1],\"label\":3}\n");
  EXPECT_THROW(LoadDataset(data, DatasetFormat::kJsonl, 2), ParseError);
  WriteFile(data, "{\"concepts\":[0,1],\"label\":0}\n");
  EXPECT_THROW(LoadDataset(data, DatasetFormat::kJsonl, 2), ParseError);
}

TEST(LoadDatasetTest, ParsesCsvWithHeader) {
  TempDir dir("csv");
  auto data = dir.path() / "d.csv";
  WriteFile(data, "c1,c2,c3,label\n1,0,1,2\n0,0,1,1\n");
  WriteFile(VocabularyPathFor(data), "x\ny\nz\n");
  ConceptDataset d = LoadDataset(data, FormatForPath(data));
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.class_count, 2);
  EXPECT_EQ(d.samples[0].concepts, (ConceptVector{1, 0, 1}));
  EXPECT_EQ(d.samples[0].label, 1);

  WriteFile(data, "c1,c2,c3,label\n1,0,1\n");
  try {
    LoadDataset(data, DatasetFormat::kCsv);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadDatasetTest, MissingVocabularySidecarIsAnError) {
  TempDir dir("novocab");
  auto data = dir.path() / "d.jsonl";
  WriteFile(data, "");
  EXPECT_THROW(LoadDataset(data, DatasetFormat::kJsonl), Error);
}

// Canonical files survive load -> save byte for byte, in both formats.
TEST(SaveDatasetTest, RoundTripIsByteIdentical) {
  std::mt19937_64 gen(11);
  TempDir dir("roundtrip");
  for (int trial = 0; trial < 20; ++trial) {
    const size_t d = 1 + gen() % 9;
    const int classes = 1 + static_cast<int>(gen() % 5);
    ConceptDataset original = testing::RandomDataset(gen, gen() % 30, d, classes);
    for (auto format : {DatasetFormat::kJsonl, DatasetFormat::kCsv}) {
      auto first = dir.path() / (format == DatasetFormat::kCsv ? "a.csv" : "a.jsonl");
      auto second = dir.path() / (format == DatasetFormat::kCsv ? "b.csv" : "b.jsonl");
      SaveDataset(original, first, format);
      ConceptDataset loaded = LoadDataset(first, format, classes);
      EXPECT_EQ(loaded, original);
      SaveDataset(loaded, second, format);
      EXPECT_EQ(testing::ReadFile(first), testing::ReadFile(second));
    }
  }
}

TEST(SyntheticTest, SameSeedGivesIdenticalDatasets) {
  SyntheticSpec spec;
  spec.seed = 7;
  auto a = GenerateSynthetic(spec);
  auto b = GenerateSynthetic(spec);
  EXPECT_EQ(a.dataset, b.dataset);
  EXPECT_EQ(a.class_templates, b.class_templates);

  TempDir dir("synthetic");
  SaveDataset(a.dataset, dir.path() / "a.jsonl", DatasetFormat::kJsonl);
  SaveDataset(b.dataset, dir.path() / "b.jsonl", DatasetFormat::kJsonl);
  EXPECT_EQ(testing::ReadFile(dir.path() / "a.jsonl"), testing::ReadFile(dir.path() / "b.jsonl"));

  spec.seed = 8;
  EXPECT_NE(GenerateSynthetic(spec).dataset, a.dataset);
}

TEST(SyntheticTest, ProducesRequestedClassCounts) {
  SyntheticSpec spec;
  spec.class_count = 2;
  spec.samples_per_class = 100;
  auto out = GenerateSynthetic(spec);
  ASSERT_EQ(out.dataset.size(), 200u);
  std::vector<int> per_class(2, 0);
  for (const auto& s : out.dataset.samples) ++per_class[s.label];
  EXPECT_EQ(per_class, (std::vector<int>{100, 100}));
  EXPECT_NO_THROW(out.dataset.Validate());
}

TEST(SyntheticTest, DegenerateBernoulliReproducesTemplates) {
  SyntheticSpec spec;
  spec.activation_prob_on = 1.0;
  spec.activation_prob_off = 0.0;
  spec.samples_per_class = 5;
  auto out = GenerateSynthetic(spec);
  for (const auto& s : out.dataset.samples) EXPECT_EQ(s.concepts, out.class_templates[s.label]);
}

TEST(SyntheticTest, EveryConceptUsesExactlyOneFamilyTemplate) {
  SyntheticSpec spec;
  spec.concept_count = 23;
  spec.family_count = 5;
  spec.samples_per_class = 1;
  auto out = GenerateSynthetic(spec);
  const auto& vocab = out.dataset.vocabulary;
  std::vector<std::set<std::string>> family_words(spec.family_count);
  for (size_t k = 0; k < vocab.concept_count(); ++k) {
    auto tokens = Tokenize(vocab.text(k));
    // family-word (two tokens), "attribute", index, "is", value-word
    ASSERT_EQ(tokens.size(), 6u) << vocab.text(k);
    EXPECT_EQ(tokens[2], "attribute");
    EXPECT_EQ(tokens[3], std::to_string(k + 1));
    EXPECT_EQ(tokens[4], "is");
    family_words[out.family_of[k]].insert(tokens[0] + "-" + tokens[1]);
  }
  std::set<std::string> all;
  for (const auto& words : family_words) {
    EXPECT_EQ(words.size(), 1u);
    all.insert(words.begin(), words.end());
  }
  EXPECT_EQ(all.size(), static_cast<size_t>(spec.family_count));
}

TEST(SyntheticTest, RejectsInvalidSpecs) {
  SyntheticSpec spec;
  spec.family_count = 0;
  EXPECT_THROW(GenerateSynthetic(spec), std::invalid_argument);
  spec = {};
  spec.family_count = spec.concept_count + 1;
  EXPECT_THROW(GenerateSynthetic(spec), std::invalid_argument);
  spec = {};
  spec.activation_prob_on = 1.5;
  EXPECT_THROW(GenerateSynthetic(spec), std::invalid_argument);
}

TEST(TrainTestSplitTest, StratifiedAndDeterministic) {
  SyntheticSpec spec;
  spec.samples_per_class = 30;
  auto data = GenerateSynthetic(spec).dataset;
  auto [train, test] = TrainTestSplit(data, 10, 3);
  EXPECT_EQ(train.size(), 200u);
  EXPECT_EQ(test.size(), 100u);
  std::vector<int> per_class(spec.class_count, 0);
  for (const auto& s : test.samples) ++per_class[s.label];
  for (int c : per_class) EXPECT_EQ(c, 10);
  EXPECT_EQ(test.samples.back().id, 99);
  auto again = TrainTestSplit(data, 10, 3);
  EXPECT_EQ(again.first, train);
  EXPECT_EQ(again.second, test);
}

TEST(PolarityTest, Examples) {
  auto ones = testing::MakeDataset({{1, 1, 1}, {1, 1, 1}}, {0, 0}, 1);
  EXPECT_EQ(DatasetPolarity(ones), Polarity::kPositive);
  auto zeros = testing::MakeDataset({{0, 0, 0}}, {0}, 1);
  EXPECT_EQ(DatasetPolarity(zeros), Polarity::kNegative);
  // 3 ones out of 8 entries.
  auto mixed = testing::MakeDataset({{1, 1, 0, 0}, {1, 0, 0, 0}}, {0, 0}, 1);
  EXPECT_EQ(DatasetPolarity(mixed), Polarity::kNegative);
  // Exactly half resolves to negative.
  auto tie = testing::MakeDataset({{1, 0}, {0, 1}}, {0, 0}, 1);
  EXPECT_EQ(DatasetPolarity(tie), Polarity::kNegative);
  EXPECT_THROW(DatasetPolarity(ConceptDataset{}), std::invalid_argument);
}

}  // namespace
}  // namespace conceptguard
