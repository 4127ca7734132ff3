#include "conceptguard/attack.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "conceptguard/error.h"
#include "conceptguard/rng.h"
#include "oracles.h"
#include "test_util.h"

namespace conceptguard {
namespace {

using testing::MakeDataset;

TEST(EmbedTriggerTest, Examples) {
  // 1-based {(1,0),(3,0)}
  Trigger t{{{0, 0}, {2, 0}}};
  EXPECT_EQ(EmbedTrigger(ConceptVector{1, 0, 1, 0}, t), (ConceptVector{0, 0, 0, 0}));
  EXPECT_EQ(EmbedTrigger(ConceptVector{1, 0, 1, 0}, Trigger{}), (ConceptVector{1, 0, 1, 0}));
  EXPECT_EQ(EmbedTrigger(ConceptVector{0, 0, 0}, Trigger{{{1, 1}}}), (ConceptVector{0, 1, 0}));
}

TEST(EmbedTriggerTest, IdempotentAndBoundedChange) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 500; ++trial) {
    const size_t d = 1 + gen() % 12;
    ConceptVector c(d);
    for (auto& v : c) v = gen() & 1;
    Trigger t;
    for (size_t pick : Rng(gen()).SampleWithoutReplacement(d, gen() % (d + 1))) {
      t.entries.push_back({pick, static_cast<uint8_t>(gen() & 1)});
    }
    const ConceptVector once = EmbedTrigger(c, t);
    EXPECT_EQ(EmbedTrigger(once, t), once);
    size_t changed = 0;
    for (size_t k = 0; k < d; ++k) changed += once[k] != c[k];
    EXPECT_LE(changed, t.size());
  }
}

TEST(TriggerTest, ValidateAndJsonRoundTrip) {
  Trigger t{{{4, 1}, {0, 0}}};
  EXPECT_NO_THROW(t.Validate(5));
  EXPECT_THROW(t.Validate(4), std::invalid_argument);
  EXPECT_THROW((Trigger{{{1, 0}, {1, 1}}}.Validate(3)), std::invalid_argument);

  AttackConfig provenance;
  provenance.mode = AttackMode::kCatPlus;
  provenance.seed = 99;
  provenance.target_class = 2;
  const std::string json = TriggerToJson(t, provenance);
  EXPECT_NE(json.find("\"entries\":[[5,1],[1,0]]"), std::string::npos) << json;
  AttackConfig back;
  EXPECT_EQ(TriggerFromJson(json, &back), t);
  EXPECT_EQ(back.mode, AttackMode::kCatPlus);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.target_class, 2);
}

TEST(ConceptFilterTest, PicksLowestSummedAbsoluteWeight) {
  // |column sums| = [5.0, 0.1, 2.0]; 1-based concept 2 is least relevant.
  std::vector<double> relevance = {5.0, 0.1, 2.0};
  Trigger t = SelectLeastRelevant(relevance, 1, Polarity::kPositive);
  EXPECT_EQ(t, (Trigger{{{1, 0}}}));

  BaseClassifier probe = testing::MakeLinear(0, {{3.0, -0.05, 1.0}, {-2.0, 0.05, -1.0}}, {0, 0});
  EXPECT_EQ(ConceptRelevance(probe), (std::vector<double>{5.0, 0.1, 2.0}));
}

TEST(ConceptFilterTest, FullSizeCoversEveryConceptAndNegativeUsesOnes) {
  std::vector<double> relevance = {0.3, 0.2, 0.1};
  Trigger t = SelectLeastRelevant(relevance, 3, Polarity::kNegative);
  ASSERT_EQ(t.size(), 3u);
  std::set<size_t> indices;
  for (const auto& e : t.entries) {
    indices.insert(e.index);
    EXPECT_EQ(e.value, 1);
  }
  EXPECT_EQ(indices.size(), 3u);
  EXPECT_THROW(SelectLeastRelevant(relevance, 4, Polarity::kNegative), std::invalid_argument);
}

TEST(ConceptFilterTest, TiesGoToSmallerIndex) {
  std::vector<double> relevance(9, 1.0);
  relevance[4] = relevance[7] = 0.5;
  Trigger t = SelectLeastRelevant(relevance, 1, Polarity::kNegative);
  EXPECT_EQ(t.entries.front().index, 4u);
}

TEST(SelectTriggerCatTest, IgnoresIrrelevantConceptsOfTrainedProbe) {
  // Concepts 0 and 1 determine the label, 2 and 3 are noise.
  std::mt19937_64 gen(3);
  std::vector<ConceptVector> rows;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    const int label = i % 2;
    rows.push_back({static_cast<uint8_t>(label), static_cast<uint8_t>(1 - label),
                    static_cast<uint8_t>(gen() & 1), static_cast<uint8_t>(gen() & 1)});
    labels.push_back(label);
  }
  auto d = MakeDataset(rows, labels, 2);
  AttackConfig cfg;
  cfg.trigger_size = 2;
  Trigger t = SelectTriggerCat(d, cfg);
  std::set<size_t> picked;
  for (const auto& e : t.entries) picked.insert(e.index);
  EXPECT_EQ(picked, (std::set<size_t>{2, 3}));
  const uint8_t expected = DatasetPolarity(d) == Polarity::kPositive ? 0 : 1;
  for (const auto& e : t.entries) EXPECT_EQ(e.value, expected);
}

TEST(SelectTriggerCatTest, SingleClassIsAnError) {
  auto d = MakeDataset({{0, 1}, {1, 0}}, {0, 0}, 2);
  AttackConfig cfg;
  EXPECT_THROW(SelectTriggerCat(d, cfg), std::invalid_argument);
}

// 10 samples, 3 in the target class. Concept 0 is on for all 3 targets and 2
// others, so p0 = 0.3 and p_cond = 0.6.
ConceptDataset ZExample() {
  std::vector<ConceptVector> rows = {{1, 0}, {1, 0}, {1, 1}, {1, 1}, {1, 0},
                                     {0, 1}, {0, 0}, {0, 1}, {0, 0}, {0, 1}};
  std::vector<int> labels = {0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
  return MakeDataset(rows, labels, 2);
}

TEST(ZScoreTest, HandEvaluatedExample) {
  const double z = ZScore(ZExample(), Trigger{}, {0, 1}, 0);
  EXPECT_NEAR(z, 0.6 * 0.3 / 0.21, 1e-12);
  EXPECT_NEAR(z, 0.857142857142857, 1e-12);
}

TEST(ZScoreTest, SignFollowsConditionalRate) {
  // p0 = 0.5; concept 0 = 1 matches three targets and two others.
  std::vector<ConceptVector> rows = {{1}, {0}, {1}, {0}, {1}, {0}, {1}, {0}, {1}, {0}};
  auto balanced = MakeDataset(rows, {0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 2);
  EXPECT_NEAR(ZScore(balanced, Trigger{}, {0, 1}, 0), 0.1 * 0.6 / 0.25, 1e-12);
  EXPECT_NEAR(ZScore(balanced, Trigger{}, {0, 0}, 0), -0.1 * 0.4 / 0.25, 1e-12);

  auto flat = MakeDataset({{1}, {1}, {1}, {1}}, {0, 1, 0, 1}, 2);
  EXPECT_DOUBLE_EQ(ZScore(flat, Trigger{}, {0, 1}, 0), 0.0);
  EXPECT_EQ(ZScore(flat, Trigger{}, {0, 0}, 0), -std::numeric_limits<double>::infinity());
}

TEST(ZScoreTest, ConditionsOnTheWholeConjunction) {
  // Concept 0 = 1 and concept 1 = 1 together match samples 2 and 3.
  EXPECT_NEAR(ZScore(ZExample(), Trigger{{{0, 1}}}, {1, 1}, 0), 0.2 * 0.5 / 0.21, 1e-12);
}

TEST(ZScoreTest, DegenerateBaseRateIsAnError) {
  auto all_target = MakeDataset({{1}, {0}}, {0, 0}, 2);
  EXPECT_THROW(ZScore(all_target, Trigger{}, {0, 1}, 0), std::invalid_argument);
  EXPECT_THROW(ZScore(all_target, Trigger{}, {0, 1}, 1), std::invalid_argument);
  EXPECT_THROW(ZScore(ZExample(), Trigger{{{0, 1}}}, {0, 0}, 0), std::invalid_argument);
}

TEST(SelectTriggerCatPlusTest, PicksConceptExclusiveToTarget) {
  // 1-based concept 3 is on only in target-class samples.
  std::vector<ConceptVector> rows = {{1, 0, 1, 0}, {0, 1, 1, 1}, {1, 1, 0, 0}, {0, 0, 0, 1},
                                     {1, 0, 0, 1}, {0, 1, 0, 0}, {1, 1, 1, 0}, {0, 0, 0, 0}};
  std::vector<int> labels = {0, 0, 1, 1, 1, 1, 0, 1};
  auto d = MakeDataset(rows, labels, 2);
  AttackConfig cfg;
  cfg.mode = AttackMode::kCatPlus;
  cfg.trigger_size = 1;
  Trigger t = SelectTriggerCatPlus(d, cfg);
  EXPECT_EQ(t, (Trigger{{{2, 1}}}));
  auto oracle = oracle::BestSingleCandidate(d, 0);
  ASSERT_TRUE(oracle);
  EXPECT_EQ(*oracle, t.entries.front());
}

TEST(SelectTriggerCatPlusTest, ZeroSizeAndTies) {
  AttackConfig cfg;
  cfg.mode = AttackMode::kCatPlus;
  cfg.trigger_size = 0;
  EXPECT_TRUE(SelectTriggerCatPlus(ZExample(), cfg).empty());

  // Concepts 0 and 1 are identical columns: equal Z, smaller index wins.
  auto twins = MakeDataset({{1, 1}, {1, 1}, {0, 0}, {0, 0}}, {0, 0, 1, 1}, 2);
  cfg.trigger_size = 1;
  EXPECT_EQ(SelectTriggerCatPlus(twins, cfg), (Trigger{{{0, 1}}}));
}

TEST(SelectTriggerCatPlusTest, GreedyStepsMaximizeConjunctionZ) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 30; ++trial) {
    auto d = testing::RandomDataset(gen, 40, 6, 3);
    d.samples[0].label = 0;
    d.samples[1].label = 1;
    AttackConfig cfg;
    cfg.mode = AttackMode::kCatPlus;
    cfg.trigger_size = 3;
    Trigger t;
    try {
      t = SelectTriggerCatPlus(d, cfg);
    } catch (const Error&) {
      continue;  // the conjunction ran out of target samples
    }
    // Each chosen pair beats every other unused pair given the prefix.
    for (size_t step = 0; step < t.size(); ++step) {
      std::vector<TriggerEntry> prefix(t.entries.begin(), t.entries.begin() + step);
      std::vector<TriggerEntry> with_choice = prefix;
      with_choice.push_back(t.entries[step]);
      const double chosen = oracle::ZFromScratch(d, with_choice, 0);
      for (size_t k = 0; k < d.concept_count(); ++k) {
        bool used = false;
        for (const auto& e : prefix) used = used || e.index == k;
        if (used) continue;
        for (uint8_t v : {uint8_t{0}, uint8_t{1}}) {
          auto alt = prefix;
          alt.push_back({k, v});
          EXPECT_LE(oracle::ZFromScratch(d, alt, 0), chosen);
        }
      }
    }
  }
}

TEST(SelectTriggerCatPlusTest, LoneTargetSampleIsCopiedExactly) {
  // With one target sample every step keeps only that sample, so the full
  // trigger reproduces it.
  auto d = MakeDataset({{1, 0, 1}, {0, 1, 1}, {0, 0, 0}, {1, 1, 0}}, {0, 1, 1, 1}, 2);
  AttackConfig cfg;
  cfg.mode = AttackMode::kCatPlus;
  cfg.trigger_size = 3;
  Trigger t = SelectTriggerCatPlus(d, cfg);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(EmbedTrigger(ConceptVector{0, 0, 0}, t), (ConceptVector{1, 0, 1}));
}

ConceptDataset Hundred() {
  std::mt19937_64 gen(21);
  auto d = testing::RandomDataset(gen, 100, 8, 4);
  return d;
}

TEST(PoisonDatasetTest, ZeroRateIsIdentity) {
  auto d = Hundred();
  AttackConfig cfg;
  cfg.injection_rate = 0.0;
  auto result = PoisonDataset(d, Trigger{{{0, 1}}}, cfg);
  EXPECT_EQ(result.dataset, d);
  EXPECT_TRUE(result.poisoned_ids.empty());
}

TEST(PoisonDatasetTest, FivePercentOfHundred) {
  auto d = Hundred();
  Trigger trigger{{{1, 1}, {6, 0}}};
  AttackConfig cfg;
  cfg.injection_rate = 0.05;
  cfg.target_class = 2;
  cfg.seed = 4;
  auto result = PoisonDataset(d, trigger, cfg);
  ASSERT_EQ(result.poisoned_ids.size(), 5u);
  ASSERT_EQ(result.dataset.size(), d.size());
  std::set<int64_t> poisoned(result.poisoned_ids.begin(), result.poisoned_ids.end());
  size_t identical = 0;
  for (size_t i = 0; i < d.size(); ++i) {
    const auto& before = d.samples[i];
    const auto& after = result.dataset.samples[i];
    if (poisoned.count(before.id)) {
      EXPECT_NE(before.label, cfg.target_class);
      EXPECT_EQ(after.label, cfg.target_class);
      EXPECT_EQ(after.concepts[1], 1);
      EXPECT_EQ(after.concepts[6], 0);
      EXPECT_EQ(after.concepts, EmbedTrigger(before.concepts, trigger));
    } else {
      identical += after == before;
    }
  }
  EXPECT_EQ(identical, d.size() - 5);
  EXPECT_EQ(PoisonDataset(d, trigger, cfg).poisoned_ids, result.poisoned_ids);
}

TEST(PoisonDatasetTest, PreservesSizeAndUntouchedSamplesForRandomRates) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto d = testing::RandomDataset(gen, 1 + gen() % 60, 5, 3);
    AttackConfig cfg;
    cfg.target_class = 0;
    cfg.injection_rate = static_cast<double>(gen() % 101) / 100.0;
    cfg.seed = gen();
    size_t non_target = 0;
    for (const auto& s : d.samples) non_target += s.label != 0;
    const size_t k = InjectionCount(cfg.injection_rate, d.size());
    if (k > non_target) {
      EXPECT_THROW(PoisonDataset(d, Trigger{{{0, 1}}}, cfg), std::invalid_argument);
      continue;
    }
    auto result = PoisonDataset(d, Trigger{{{0, 1}}}, cfg);
    EXPECT_EQ(result.dataset.size(), d.size());
    size_t identical = 0;
    for (size_t i = 0; i < d.size(); ++i) identical += result.dataset.samples[i] == d.samples[i];
    EXPECT_EQ(identical, d.size() - k);
  }
}

TEST(PoisonDatasetTest, InjectionCountFloorsTheProduct) {
  EXPECT_EQ(InjectionCount(0.05, 100), 5u);
  EXPECT_EQ(InjectionCount(0.29, 100), 29u);
  EXPECT_EQ(InjectionCount(0.05, 99), 4u);
  EXPECT_EQ(InjectionCount(0.0, 100), 0u);
  EXPECT_THROW(InjectionCount(1.5, 10), std::invalid_argument);
}

TEST(PoisonDatasetTest, TooFewNonTargetSamplesIsAnError) {
  auto d = MakeDataset({{0}, {0}, {1}, {1}}, {0, 0, 0, 1}, 2);
  AttackConfig cfg;
  cfg.injection_rate = 0.5;
  EXPECT_THROW(PoisonDataset(d, Trigger{{{0, 1}}}, cfg), std::invalid_argument);
}

TEST(AttackTestSetTest, Examples) {
  auto all_target = MakeDataset({{0, 1}, {1, 1}}, {1, 1}, 2);
  EXPECT_TRUE(AttackTestSet(all_target, Trigger{{{0, 0}}}, 1).empty());

  std::vector<ConceptVector> rows(10, ConceptVector{0, 0, 1});
  std::vector<int> labels = {0, 1, 0, 2, 0, 1, 1, 2, 2, 1};
  auto mixed = MakeDataset(rows, labels, 3);
  auto unchanged = AttackTestSet(mixed, Trigger{}, 0);
  ASSERT_EQ(unchanged.size(), 7u);
  for (const auto& s : unchanged.samples) {
    EXPECT_NE(s.label, 0);
    EXPECT_EQ(s.concepts, (ConceptVector{0, 0, 1}));
  }
  auto attacked = AttackTestSet(mixed, Trigger{{{0, 1}, {2, 0}}}, 0);
  ASSERT_EQ(attacked.size(), 7u);
  for (const auto& s : attacked.samples) EXPECT_EQ(s.concepts, (ConceptVector{1, 0, 0}));
  EXPECT_EQ(attacked.samples.front().id, 1);
}

}  // namespace
}  // namespace conceptguard
