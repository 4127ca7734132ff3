#ifndef CONCEPTGUARD_CERTIFY_H_
#define CONCEPTGUARD_CERTIFY_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conceptguard/dataset.h"
#include "conceptguard/models.h"

namespace conceptguard {

// Certified size held exactly as a count of half-votes.
struct CertifiedSize {
  int twice = 0;

  double value() const { return twice / 2.0; }
  // t <= sigma, in exact arithmetic.
  bool Covers(int64_t t) const { return 2 * t <= twice; }
  // "2", "2.5", ...
  std::string ToString() const;

  friend auto operator<=>(const CertifiedSize&, const CertifiedSize&) = default;
};

// sigma = (N_y - max_{l != y}(N_l + [y > l])) / 2. The maximum over an empty
// rival set is 0. Throws std::invalid_argument unless y is the tie-broken vote
// winner.
CertifiedSize ComputeCertifiedSize(const VoteCounts& votes, ClassLabel y);

// Everything certification needs about one clean test sample.
struct SampleRecord {
  int64_t id = 0;
  ClassLabel truth = 0;
  ClassLabel prediction = 0;
  std::vector<ClassLabel> base_predictions;
  VoteCounts votes;
  CertifiedSize sigma;
};

std::vector<SampleRecord> BuildRecords(const EnsembleModel& model, const ConceptDataset& test);

// Fraction of samples predicted correctly with t <= sigma.
double IndependentCertifiedAccuracy(std::span<const SampleRecord> records, int64_t t);
double IndependentCertifiedAccuracy(const EnsembleModel& model, const ConceptDataset& test, int64_t t);

// Whether `record` provably keeps label y when the groups in `corrupted`
// (0-based, distinct) may vote arbitrarily:
//   N_y - #{j in J : f_j = y} >= max_{l != y}(N_l + [y > l] + #{j in J : f_j != l})
bool JointCondition(const SampleRecord& record, std::span<const int> corrupted, ClassLabel y);

// C(n, k), saturating at UINT64_MAX.
uint64_t BinomialCoefficient(int n, int k);

// Calls `visit` for every k-subset of {0..n-1} in lexicographic order.
// Stops early when `visit` returns false.
void ForEachCombination(int n, int k, const std::function<bool(std::span<const int>)>& visit);

inline constexpr uint64_t kDefaultCombinationBudget = 10'000'000;

// Minimum over all t-subsets J of the groups of the fraction of samples that
// are correct and satisfy JointCondition for J. Throws BudgetExceeded when
// C(m, t) > budget.
double JointCertifiedAccuracy(std::span<const SampleRecord> records, int group_count, int t,
                              uint64_t budget = kDefaultCombinationBudget);
double JointCertifiedAccuracy(const EnsembleModel& model, const ConceptDataset& test, int t,
                              uint64_t budget = kDefaultCombinationBudget);

// Exhaustive check that moving at most k votes between classes can never
// change the winner away from y. Enumerates every count profile with the
// same total; throws BudgetExceeded if there are more than `budget`.
bool FlipOracle(const VoteCounts& votes, ClassLabel y, int k,
                uint64_t budget = kDefaultCombinationBudget);

struct CertifiedAccuracyRow {
  int t = 0;
  double independent = 0.0;
  // Absent when C(m, t) exceeds the budget.
  std::optional<double> joint;
};

struct CertificationReport {
  int group_count = 0;
  std::vector<SampleRecord> records;
  std::vector<CertifiedAccuracyRow> table;

  // id,y,y_test,sigma with 1-based labels.
  void WriteCsv(const std::filesystem::path& path) const;
  // {"m":..,"samples":..,"certified_accuracy":{"0":{"independent":..,"joint":..},..}}
  std::string AggregateJson() const;
  void WriteJson(const std::filesystem::path& path) const;
};

// Certifies the ensemble on a clean test set for every budget t = 0..m.
CertificationReport Certify(const EnsembleModel& model, const ConceptDataset& test,
                            uint64_t budget = kDefaultCombinationBudget);

}  // namespace conceptguard

#endif  // CONCEPTGUARD_CERTIFY_H_
