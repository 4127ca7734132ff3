#include "conceptguard/certify.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "conceptguard/error.h"
#include "json.hpp"

namespace conceptguard {
namespace {

// max_{l != y}(N_l + [y > l]); 0 when there is no rival class.
int StrongestRival(std::span<const int> counts, ClassLabel y) {
  int best = 0;
  for (size_t l = 0; l < counts.size(); ++l) {
    if (static_cast<ClassLabel>(l) == y) continue;
    best = std::max(best, counts[l] + (y > static_cast<ClassLabel>(l) ? 1 : 0));
  }
  return best;
}

double Ratio(size_t hits, size_t total) {
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

std::string CertifiedSize::ToString() const {
  const int whole = twice / 2;
  if (twice % 2 == 0) return std::to_string(whole);
  return (twice < 0 && whole == 0 ? "-0" : std::to_string(whole)) + ".5";
}

CertifiedSize ComputeCertifiedSize(const VoteCounts& votes, ClassLabel y) {
  if (y < 0 || static_cast<size_t>(y) >= votes.counts.size()) {
    throw std::invalid_argument("label outside the vote table");
  }
  if (votes.Winner() != y) {
    throw std::invalid_argument("certified size requires y to be the vote winner");
  }
  return CertifiedSize{votes.counts[y] - StrongestRival(votes.counts, y)};
}

std::vector<SampleRecord> BuildRecords(const EnsembleModel& model, const ConceptDataset& test) {
  std::vector<SampleRecord> records;
  records.reserve(test.size());
  for (const auto& s : test.samples) {
    SampleRecord r;
    r.id = s.id;
    r.truth = s.label;
    r.base_predictions = model.BasePredictions(s.concepts);
    r.votes = CountVotes(r.base_predictions, model.class_count());
    r.prediction = r.votes.Winner();
    r.sigma = ComputeCertifiedSize(r.votes, r.prediction);
    records.push_back(std::move(r));
  }
  return records;
}

double IndependentCertifiedAccuracy(std::span<const SampleRecord> records, int64_t t) {
  if (records.empty()) throw std::invalid_argument("certified accuracy of an empty test set");
  if (t < 0) throw std::invalid_argument("trigger budget t must be non-negative");
  size_t hits = 0;
  for (const auto& r : records) hits += r.prediction == r.truth && r.sigma.Covers(t);
  return Ratio(hits, records.size());
}

double IndependentCertifiedAccuracy(const EnsembleModel& model, const ConceptDataset& test, int64_t t) {
  return IndependentCertifiedAccuracy(BuildRecords(model, test), t);
}

bool JointCondition(const SampleRecord& record, std::span<const int> corrupted, ClassLabel y) {
  const auto& counts = record.votes.counts;
  int corrupted_for_y = 0;
  for (int j : corrupted) corrupted_for_y += record.base_predictions.at(j) == y;
  const int kept = counts[y] - corrupted_for_y;
  const int total_corrupted = static_cast<int>(corrupted.size());
  for (size_t l = 0; l < counts.size(); ++l) {
    const auto label = static_cast<ClassLabel>(l);
    if (label == y) continue;
    int already_l = 0;
    for (int j : corrupted) already_l += record.base_predictions[j] == label;
    const int rival = counts[l] + (y > label ? 1 : 0) + (total_corrupted - already_l);
    if (kept < rival) return false;
  }
  return true;
}

uint64_t BinomialCoefficient(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  uint64_t result = 1;
  for (int i = 1; i <= k; ++i) {
    // result * (n - k + i) / i stays integral at every step.
    const uint64_t numerator = static_cast<uint64_t>(n - k + i);
    const uint64_t g = std::gcd(result, static_cast<uint64_t>(i));
    const uint64_t reduced = result / g;
    const uint64_t divisor = static_cast<uint64_t>(i) / g;
    if (reduced > std::numeric_limits<uint64_t>::max() / numerator) {
      return std::numeric_limits<uint64_t>::max();
    }
    result = reduced * numerator / divisor;
  }
  return result;
}

void ForEachCombination(int n, int k, const std::function<bool(std::span<const int>)>& visit) {
  if (k < 0 || k > n) return;
  std::vector<int> combo(k);
  std::iota(combo.begin(), combo.end(), 0);
  while (true) {
    if (!visit(combo)) return;
    int i = k - 1;
    while (i >= 0 && combo[i] == n - k + i) --i;
    if (i < 0) return;
    ++combo[i];
    for (int j = i + 1; j < k; ++j) combo[j] = combo[j - 1] + 1;
  }
}

double JointCertifiedAccuracy(std::span<const SampleRecord> records, int group_count, int t,
                              uint64_t budget) {
  if (records.empty()) throw std::invalid_argument("certified accuracy of an empty test set");
  if (t < 0 || t > group_count) {
    throw std::invalid_argument("joint certification needs 0 <= t <= m");
  }
  const uint64_t combinations = BinomialCoefficient(group_count, t);
  if (combinations > budget) throw BudgetExceeded("joint certification", combinations, budget);

  double accuracy = 1.0;
  ForEachCombination(group_count, t, [&](std::span<const int> corrupted) {
    size_t certified = 0;
    for (const auto& r : records) {
      certified += r.prediction == r.truth && JointCondition(r, corrupted, r.prediction);
    }
    accuracy = std::min(accuracy, Ratio(certified, records.size()));
    return true;
  });
  return accuracy;
}

double JointCertifiedAccuracy(const EnsembleModel& model, const ConceptDataset& test, int t,
                              uint64_t budget) {
  return JointCertifiedAccuracy(BuildRecords(model, test), model.group_count(), t, budget);
}

bool FlipOracle(const VoteCounts& votes, ClassLabel y, int k, uint64_t budget) {
  const int classes = static_cast<int>(votes.counts.size());
  const int total = votes.total();
  if (k < 0) throw std::invalid_argument("flip count must be non-negative");
  if (k > total) throw std::invalid_argument("cannot flip more votes than were cast");
  const uint64_t profiles = BinomialCoefficient(total + classes - 1, classes - 1);
  if (profiles > budget) throw BudgetExceeded("flip oracle", profiles, budget);

  // Depth-first over all count profiles with the same total. A profile is
  // reachable with at most k moved votes iff the votes it removes sum to <= k.
  std::vector<int> profile(classes, 0);
  bool robust = true;
  std::function<void(int, int, int)> visit = [&](int cls, int remaining, int removed) {
    if (!robust || removed > k) return;
    if (cls == classes - 1) {
      profile[cls] = remaining;
      const int moved = removed + std::max(0, votes.counts[cls] - remaining);
      if (moved <= k && VoteCounts{profile}.Winner() != y) robust = false;
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      profile[cls] = c;
      visit(cls + 1, remaining - c, removed + std::max(0, votes.counts[cls] - c));
    }
  };
  visit(0, total, 0);
  return robust;
}

void CertificationReport::WriteCsv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "id,y,y_test,sigma\n";
  for (const auto& r : records) {
    out << r.id << ',' << (r.prediction + 1) << ',' << (r.truth + 1) << ',' << r.sigma.ToString() << '\n';
  }
}

std::string CertificationReport::AggregateJson() const {
  nlohmann::ordered_json doc;
  doc["m"] = group_count;
  doc["samples"] = records.size();
  nlohmann::ordered_json table_json = nlohmann::ordered_json::object();
  for (const auto& row : this->table) {
    nlohmann::ordered_json entry;
    entry["independent"] = row.independent;
    entry["joint"] = row.joint ? nlohmann::ordered_json(*row.joint) : nlohmann::ordered_json(nullptr);
    table_json[std::to_string(row.t)] = std::move(entry);
  }
  doc["certified_accuracy"] = std::move(table_json);
  return doc.dump(2);
}

void CertificationReport::WriteJson(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << AggregateJson() << '\n';
}

CertificationReport Certify(const EnsembleModel& model, const ConceptDataset& test, uint64_t budget) {
  CertificationReport report;
  report.group_count = model.group_count();
  report.records = BuildRecords(model, test);
  for (int t = 0; t <= report.group_count; ++t) {
    CertifiedAccuracyRow row;
    row.t = t;
    row.independent = IndependentCertifiedAccuracy(report.records, t);
    if (BinomialCoefficient(report.group_count, t) <= budget) {
      row.joint = JointCertifiedAccuracy(report.records, report.group_count, t, budget);
    }
    report.table.push_back(row);
  }
  return report;
}

}  // namespace conceptguard
