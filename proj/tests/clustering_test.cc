#include "conceptguard/clustering.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "test_util.h"

namespace conceptguard {
namespace {

double Cosine(const Eigen::MatrixXd& rows, int a, int b) {
  const double na = rows.row(a).norm(), nb = rows.row(b).norm();
  if (na == 0 || nb == 0) return 0.0;
  return rows.row(a).dot(rows.row(b)) / (na * nb);
}

TEST(TokenizeTest, LowercaseAlphanumericRuns) {
  EXPECT_EQ(Tokenize("Wing-Color is  RED2!"), (std::vector<std::string>{"wing", "color", "is", "red2"}));
  EXPECT_TRUE(Tokenize(" -- ").empty());
}

TEST(EmbedConceptsTest, IdenticalAndDisjointTexts) {
  ConceptVocabulary vocab({"has red wings", "Has Red Wings!", "small beak"});
  Eigen::MatrixXd rows = EmbedConcepts(vocab);
  EXPECT_TRUE(rows.row(0).isApprox(rows.row(1)));
  EXPECT_DOUBLE_EQ(Cosine(rows, 0, 2), 0.0);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(rows.row(k).norm(), 1.0, 1e-12);
}

TEST(EmbedConceptsTest, HandComputedWeights) {
  ConceptVocabulary vocab({"eye color is black", "eye color is red", "bill shape is dagger"});
  Eigen::MatrixXd rows = EmbedConcepts(vocab);
  // "is" occurs everywhere and gets weight 0; "eye" and "color" get ln(3/2),
  // the remaining tokens ln(3).
  const double shared = std::log(1.5), unique = std::log(3.0);
  const double expected = 2 * shared * shared / (2 * shared * shared + unique * unique);
  EXPECT_NEAR(Cosine(rows, 0, 1), expected, 1e-12);
  EXPECT_NEAR(Cosine(rows, 0, 1), 0.2141, 1e-4);
  EXPECT_DOUBLE_EQ(Cosine(rows, 0, 2), 0.0);
  EXPECT_EQ(rows.cols(), 8);
}

TEST(EmbedConceptsTest, TextsOfOnlySharedTokensStayZero) {
  ConceptVocabulary vocab({"is a", "a is"});
  Eigen::MatrixXd rows = EmbedConcepts(vocab);
  EXPECT_DOUBLE_EQ(rows.norm(), 0.0);
}

Eigen::MatrixXd TwoFamilies() {
  return EmbedConcepts(ConceptVocabulary(
      {"wing color is plain", "wing color is striped", "bill shape is long", "bill shape is hooked"}));
}

TEST(KMeansTest, SingleGroupAndSingletons) {
  Eigen::MatrixXd points = TwoFamilies();
  auto one = KMeansCluster(points, 1, 3);
  EXPECT_EQ(one, GroupAssignment::Single(4));
  auto four = KMeansCluster(points, 4, 3);
  EXPECT_EQ(std::set<int>(four.group_of.begin(), four.group_of.end()).size(), 4u);
}

TEST(KMeansTest, RecoversFamiliesAtMinimumInertia) {
  Eigen::MatrixXd points = TwoFamilies();
  KMeansResult result = KMeans(points, 2, 11);
  const auto& g = result.assignment.group_of;
  EXPECT_EQ(g[0], g[1]);
  EXPECT_EQ(g[2], g[3]);
  EXPECT_NE(g[0], g[2]);
  EXPECT_NEAR(result.inertia, ClusterInertia(points, result.assignment), 1e-9);
  // All 7 bipartitions of four concepts.
  for (int mask = 1; mask < 8; ++mask) {
    GroupAssignment other{2, {0, 0, 0, 0}};
    for (int k = 0; k < 3; ++k) other.group_of[k + 1] = (mask >> k) & 1;
    EXPECT_LE(result.inertia, ClusterInertia(points, other) + 1e-9);
  }
}

TEST(KMeansTest, InvalidGroupCounts) {
  Eigen::MatrixXd points = TwoFamilies();
  EXPECT_THROW(KMeans(points, 5, 1), std::invalid_argument);
  EXPECT_THROW(KMeans(points, 0, 1), std::invalid_argument);
}

TEST(KMeansTest, Deterministic) {
  std::mt19937_64 gen(2);
  Eigen::MatrixXd points(30, 4);
  for (Eigen::Index i = 0; i < points.size(); ++i) points.data()[i] = static_cast<double>(gen() % 1000) / 1000.0;
  auto a = KMeans(points, 5, 42);
  auto b = KMeans(points, 5, 42);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeansTest, DuplicatePointsStillFillEveryGroup) {
  Eigen::MatrixXd points = Eigen::MatrixXd::Zero(6, 2);
  points(5, 0) = 1.0;
  auto assignment = KMeansCluster(points, 4, 9);
  EXPECT_NO_THROW(assignment.Validate());
}

TEST(PartitionTest, RestrictsInAscendingConceptOrder) {
  auto d = testing::MakeDataset({{1, 0, 1, 1}}, {0}, 2);
  GroupAssignment assignment{2, {0, 1, 0, 1}};
  auto subs = PartitionDataset(d, assignment);
  ASSERT_EQ(subs.size(), 2u);
  EXPECT_EQ(subs[0].samples[0].concepts, (ConceptVector{1, 1}));
  EXPECT_EQ(subs[1].samples[0].concepts, (ConceptVector{0, 1}));
  EXPECT_EQ(subs[1].concept_indices, (std::vector<size_t>{1, 3}));
  EXPECT_EQ(subs[1].group_index, 1);
}

TEST(PartitionTest, SingleGroupReturnsTheDataset) {
  std::mt19937_64 gen(4);
  auto d = testing::RandomDataset(gen, 20, 7, 3);
  auto subs = PartitionDataset(d, GroupAssignment::Single(7));
  ASSERT_EQ(subs.size(), 1u);
  EXPECT_EQ(subs[0].samples, d.samples);
}

TEST(PartitionTest, DimensionMismatchIsAnError) {
  auto d = testing::MakeDataset({{1, 0, 1}}, {0}, 2);
  EXPECT_THROW(PartitionDataset(d, GroupAssignment{2, {0, 1, 0, 1}}), std::invalid_argument);
}

TEST(PartitionTest, RandomVocabulariesGiveDisjointCoveringGroups) {
  std::mt19937_64 gen(6);
  const std::vector<std::string> words = {"red", "wing", "bill", "tail", "long", "short", "eye", "ring", "plain"};
  for (int trial = 0; trial < 40; ++trial) {
    const size_t d = 2 + gen() % 14;
    std::vector<std::string> texts;
    for (size_t k = 0; k < d; ++k) {
      texts.push_back(words[gen() % words.size()] + " " + words[gen() % words.size()] + " " + std::to_string(k));
    }
    ConceptVocabulary vocab(texts);
    const int m = 1 + static_cast<int>(gen() % d);
    auto assignment = KMeansCluster(EmbedConcepts(vocab), m, gen());
    ASSERT_NO_THROW(assignment.Validate());
    ASSERT_EQ(assignment.concept_count(), d);

    ConceptDataset data = testing::RandomDataset(gen, 5, d, 2);
    auto subs = PartitionDataset(data, assignment);
    std::vector<int> seen(d, 0);
    for (const auto& sub : subs) {
      EXPECT_FALSE(sub.concept_indices.empty());
      for (size_t k : sub.concept_indices) ++seen[k];
      for (size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(sub.samples[i].concepts, Restrict(data.samples[i].concepts, sub.concept_indices));
        EXPECT_EQ(sub.samples[i].label, data.samples[i].label);
      }
    }
    for (int count : seen) EXPECT_EQ(count, 1);
  }
}

TEST(GroupAssignmentTest, JsonRoundTripAndValidation) {
  GroupAssignment a{3, {2, 0, 1, 0}};
  EXPECT_EQ(a.ToJson(), "{\"group_of\":[3,1,2,1],\"m\":3}");
  EXPECT_EQ(GroupAssignment::FromJson(a.ToJson()), a);
  EXPECT_EQ(a.Members(0), (std::vector<size_t>{1, 3}));
  EXPECT_THROW((GroupAssignment{3, {0, 0, 1}}.Validate()), std::invalid_argument);
  EXPECT_THROW((GroupAssignment{2, {0, 2}}.Validate()), std::invalid_argument);
  EXPECT_ANY_THROW(GroupAssignment::FromJson("{\"m\":2,\"group_of\":[0,1]}"));
}

}  // namespace
}  // namespace conceptguard
