#ifndef CONCEPTGUARD_CLUSTERING_H_
#define CONCEPTGUARD_CLUSTERING_H_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "conceptguard/dataset.h"

namespace conceptguard {

// Total map from concept index to group index. Groups are 0-based in memory
// and 1-based in JSON.
struct GroupAssignment {
  int m = 0;
  std::vector<int> group_of;

  size_t concept_count() const { return group_of.size(); }
  // Concept indices of group j, ascending.
  std::vector<size_t> Members(int j) const;
  // Throws std::invalid_argument unless every concept maps into [0, m) and
  // every group is non-empty.
  void Validate() const;

  // {"m":4,"group_of":[1,2,1,...]}
  std::string ToJson() const;
  static GroupAssignment FromJson(const std::string& text);
  void Save(const std::filesystem::path& path) const;
  static GroupAssignment Load(const std::filesystem::path& path);

  // Every concept in group 0.
  static GroupAssignment Single(size_t concept_count);

  friend bool operator==(const GroupAssignment&, const GroupAssignment&) = default;
};

// One group's view of a dataset: the same samples, restricted to the group's
// concepts in ascending concept order.
struct SubDataset {
  int group_index = 0;
  std::vector<size_t> concept_indices;
  std::vector<Sample> samples;
  int class_count = 0;

  size_t input_dim() const { return concept_indices.size(); }
};

ConceptVector Restrict(ConceptView concepts, std::span<const size_t> indices);

// TF-IDF rows (one per concept) over lowercase alphanumeric tokens.
// idf(t) = ln(d / df(t)); rows are L2-normalized, all-zero rows stay zero.
// Columns follow the lexicographic order of tokens.
Eigen::MatrixXd EmbedConcepts(const ConceptVocabulary& vocab);

// Lowercase alphanumeric runs of `text`.
std::vector<std::string> Tokenize(const std::string& text);

struct KMeansOptions {
  int max_iterations = 300;
  double tolerance = 1e-6;
  // Independent k-means++ restarts; the lowest-inertia run wins (earliest on
  // ties). Restart r is seeded with MixSeed(seed, r).
  int restarts = 10;
};

struct KMeansResult {
  GroupAssignment assignment;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
  int iterations = 0;
};

// Euclidean k-means with k-means++ seeding over the rows of `points`.
// Deterministic in (points, m, seed, options).
KMeansResult KMeans(const Eigen::MatrixXd& points, int m, uint64_t seed,
                    const KMeansOptions& options = {});

GroupAssignment KMeansCluster(const Eigen::MatrixXd& embeddings, int m, uint64_t seed,
                              const KMeansOptions& options = {});

// Sum of squared distances from each row to the mean of its group.
double ClusterInertia(const Eigen::MatrixXd& points, const GroupAssignment& assignment);

std::vector<SubDataset> PartitionDataset(const ConceptDataset& dataset,
                                         const GroupAssignment& assignment);

}  // namespace conceptguard

#endif  // CONCEPTGUARD_CLUSTERING_H_
