#ifndef CONCEPTGUARD_MODELS_H_
#define CONCEPTGUARD_MODELS_H_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "conceptguard/clustering.h"
#include "conceptguard/dataset.h"

namespace conceptguard {

struct TrainingConfig {
  double learning_rate = 0.1;
  int epochs = 500;
  double weight_decay = 5e-5;
  // 0 selects the multinomial linear model; otherwise one ReLU hidden layer.
  int hidden_units = 0;
  uint64_t seed = 0;

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

// Concept-to-label classifier for one group's restricted concept vector.
//
// Linear:  scores = W x + b
// Hidden:  scores = W relu(H x + c) + b
class BaseClassifier {
 public:
  BaseClassifier() = default;
  BaseClassifier(int group_index, int input_dim, int class_count, int hidden_units);

  int group_index() const { return group_index_; }
  int input_dim() const { return input_dim_; }
  int class_count() const { return class_count_; }
  int hidden_units() const { return hidden_units_; }
  double final_loss() const { return final_loss_; }
  const TrainingConfig& training() const { return training_; }

  Eigen::VectorXd Scores(ConceptView input) const;
  // Highest score, lowest class index on ties.
  ClassLabel Predict(ConceptView input) const;

  // Output-layer weights, class_count x (hidden_units or input_dim).
  const Eigen::MatrixXd& output_weights() const { return output_weights_; }

  std::string ToJson() const;
  static BaseClassifier FromJson(const std::string& text);

  friend BaseClassifier TrainBase(const SubDataset& sub, const TrainingConfig& config);

 private:
  int group_index_ = 0;
  int input_dim_ = 0;
  int class_count_ = 0;
  int hidden_units_ = 0;
  Eigen::MatrixXd hidden_weights_;
  Eigen::VectorXd hidden_bias_;
  Eigen::MatrixXd output_weights_;
  Eigen::VectorXd output_bias_;
  TrainingConfig training_;
  double final_loss_ = 0.0;
};

// Minimizes mean cross-entropy (+ weight_decay/2 * |weights|^2) with
// full-batch gradient descent. Linear models start from zero; hidden layers
// start from He-scaled normals drawn from `config.seed`.
BaseClassifier TrainBase(const SubDataset& sub, const TrainingConfig& config);

struct VoteCounts {
  std::vector<int> counts;

  int total() const;
  // argmax with ties resolved to the smallest label.
  ClassLabel Winner() const;

  friend bool operator==(const VoteCounts&, const VoteCounts&) = default;
};

VoteCounts CountVotes(std::span<const ClassLabel> predictions, int class_count);

class EnsembleModel {
 public:
  EnsembleModel() = default;
  EnsembleModel(GroupAssignment assignment, std::vector<BaseClassifier> classifiers, int class_count);

  const GroupAssignment& assignment() const { return assignment_; }
  const std::vector<BaseClassifier>& classifiers() const { return classifiers_; }
  int class_count() const { return class_count_; }
  int group_count() const { return assignment_.m; }
  size_t concept_count() const { return assignment_.concept_count(); }

  // Prediction of base classifier j for every group j.
  std::vector<ClassLabel> BasePredictions(ConceptView concepts) const;
  VoteCounts Votes(ConceptView concepts) const;
  ClassLabel Predict(ConceptView concepts) const;

  // Bundle layout: assignment.json, classifier_<j>.json (1-based j) and
  // manifest.json, all in `dir`.
  void Save(const std::filesystem::path& dir) const;
  static EnsembleModel Load(const std::filesystem::path& dir);

 private:
  void CheckDimension(ConceptView concepts) const;

  GroupAssignment assignment_;
  std::vector<std::vector<size_t>> members_;
  std::vector<BaseClassifier> classifiers_;
  int class_count_ = 0;
};

// Partitions `dataset` by `assignment` and trains one classifier per group.
// Group j trains with seed MixSeed(config.seed, j). `threads` only affects
// wall time.
EnsembleModel TrainEnsemble(const ConceptDataset& dataset, const GroupAssignment& assignment,
                            const TrainingConfig& config, int threads = 1);

// Undefended baseline: a single classifier over all concepts (m = 1).
EnsembleModel TrainDirect(const ConceptDataset& dataset, const TrainingConfig& config);

}  // namespace conceptguard

#endif  // CONCEPTGUARD_MODELS_H_
