#include "conceptguard/clustering.h"

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "conceptguard/error.h"
#include "conceptguard/rng.h"
#include "json.hpp"

namespace conceptguard {

std::vector<size_t> GroupAssignment::Members(int j) const {
  std::vector<size_t> members;
  for (size_t k = 0; k < group_of.size(); ++k) {
    if (group_of[k] == j) members.push_back(k);
  }
  return members;
}

void GroupAssignment::Validate() const {
  if (m < 1) throw std::invalid_argument("group count must be at least 1");
  std::vector<size_t> sizes(m, 0);
  for (size_t k = 0; k < group_of.size(); ++k) {
    if (group_of[k] < 0 || group_of[k] >= m) {
      throw std::invalid_argument("concept " + std::to_string(k + 1) + " maps outside 1.." +
                                  std::to_string(m));
    }
    ++sizes[group_of[k]];
  }
  for (int j = 0; j < m; ++j) {
    if (sizes[j] == 0) throw std::invalid_argument("group " + std::to_string(j + 1) + " is empty");
  }
}

std::string GroupAssignment::ToJson() const {
  nlohmann::json doc;
  doc["m"] = m;
  auto groups = nlohmann::json::array();
  for (int g : group_of) groups.push_back(g + 1);
  doc["group_of"] = std::move(groups);
  return doc.dump();
}

GroupAssignment GroupAssignment::FromJson(const std::string& text) {
  GroupAssignment a;
  try {
    auto doc = nlohmann::json::parse(text);
    a.m = doc.at("m").get<int>();
    for (const auto& g : doc.at("group_of")) a.group_of.push_back(g.get<int>() - 1);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed assignment JSON: ") + e.what());
  }
  try {
    a.Validate();
  } catch (const std::invalid_argument& e) {
    throw Error(std::string("invalid assignment: ") + e.what());
  }
  return a;
}

void GroupAssignment::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << ToJson() << '\n';
}

GroupAssignment GroupAssignment::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return FromJson(buffer.str());
}

GroupAssignment GroupAssignment::Single(size_t concept_count) {
  return GroupAssignment{1, std::vector<int>(concept_count, 0)};
}

ConceptVector Restrict(ConceptView concepts, std::span<const size_t> indices) {
  ConceptVector out(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) out[i] = concepts[indices[i]];
  return out;
}

std::vector<std::string> Tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    auto uch = static_cast<unsigned char>(ch);
    if (std::isalnum(uch)) {
      current.push_back(static_cast<char>(std::tolower(uch)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Eigen::MatrixXd EmbedConcepts(const ConceptVocabulary& vocab) {
  const size_t d = vocab.concept_count();
  std::vector<std::map<std::string, int>> term_counts(d);
  std::map<std::string, int> document_frequency;
  for (size_t k = 0; k < d; ++k) {
    for (auto& token : Tokenize(vocab.text(k))) ++term_counts[k][token];
    for (const auto& [token, count] : term_counts[k]) ++document_frequency[token];
  }
  std::map<std::string, Eigen::Index> column;
  for (const auto& [token, df] : document_frequency) {
    column.emplace(token, static_cast<Eigen::Index>(column.size()));
  }

  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d),
                                               static_cast<Eigen::Index>(column.size()));
  for (size_t k = 0; k < d; ++k) {
    for (const auto& [token, count] : term_counts[k]) {
      const double idf = std::log(static_cast<double>(d) / document_frequency[token]);
      rows(static_cast<Eigen::Index>(k), column[token]) = count * idf;
    }
    const double norm = rows.row(static_cast<Eigen::Index>(k)).norm();
    if (norm > 0.0) rows.row(static_cast<Eigen::Index>(k)) /= norm;
  }
  return rows;
}

namespace {

// Nearest centroid; lower index wins ties.
int Nearest(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& point, double* dist2) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double dist = (centroids.row(c) - point).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(c);
    }
  }
  if (dist2) *dist2 = best_dist;
  return best;
}

Eigen::MatrixXd SeedPlusPlus(const Eigen::MatrixXd& points, int m, Rng& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(m, points.cols());
  std::vector<bool> chosen(n, false);
  Eigen::Index first = static_cast<Eigen::Index>(rng.UniformInt(n));
  centroids.row(0) = points.row(first);
  chosen[first] = true;
  std::vector<double> dist2(n);
  for (Eigen::Index i = 0; i < n; ++i) dist2[i] = (points.row(i) - centroids.row(0)).squaredNorm();

  for (int c = 1; c < m; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += chosen[i] ? 0.0 : dist2[i];
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = rng.Uniform01() * total;
      double running = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (chosen[i] || dist2[i] <= 0.0) continue;
        running += dist2[i];
        pick = i;
        if (running > target) break;
      }
    } else {
      // Every remaining point coincides with a centroid.
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!chosen[i]) free.push_back(i);
      }
      pick = free[rng.UniformInt(free.size())];
    }
    chosen[pick] = true;
    centroids.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      dist2[i] = std::min(dist2[i], (points.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

KMeansResult LloydRun(const Eigen::MatrixXd& points, int m, uint64_t seed,
                      const KMeansOptions& options) {
  const Eigen::Index n = points.rows();
  Rng rng(seed);
  Eigen::MatrixXd centroids = SeedPlusPlus(points, m, rng);
  std::vector<int> label(n, 0);
  int iteration = 0;
  for (; iteration < options.max_iterations; ++iteration) {
    std::vector<double> dist2(n);
    std::vector<int> sizes(m, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      label[i] = Nearest(centroids, points.row(i), &dist2[i]);
      ++sizes[label[i]];
    }
    // Empty clusters take the point farthest from its own centroid, drawn
    // from clusters that can spare one.
    for (int c = 0; c < m; ++c) {
      if (sizes[c] > 0) continue;
      Eigen::Index victim = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (sizes[label[i]] < 2) continue;
        if (victim < 0 || dist2[i] > dist2[victim]) victim = i;
      }
      --sizes[label[victim]];
      label[victim] = c;
      ++sizes[c];
      dist2[victim] = 0.0;
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(m, points.cols());
    for (Eigen::Index i = 0; i < n; ++i) next.row(label[i]) += points.row(i);
    for (int c = 0; c < m; ++c) next.row(c) /= sizes[c];
    double shift = 0.0;
    for (int c = 0; c < m; ++c) shift = std::max(shift, (next.row(c) - centroids.row(c)).norm());
    centroids = std::move(next);
    if (shift < options.tolerance) {
      ++iteration;
      break;
    }
  }
  KMeansResult result;
  result.assignment = GroupAssignment{m, std::move(label)};
  result.centroids = std::move(centroids);
  result.inertia = ClusterInertia(points, result.assignment);
  result.iterations = iteration;
  return result;
}

}  // namespace

double ClusterInertia(const Eigen::MatrixXd& points, const GroupAssignment& assignment) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(assignment.m, points.cols());
  std::vector<int> sizes(assignment.m, 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    sums.row(assignment.group_of[i]) += points.row(i);
    ++sizes[assignment.group_of[i]];
  }
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int g = assignment.group_of[i];
    inertia += (points.row(i) - sums.row(g) / sizes[g]).squaredNorm();
  }
  return inertia;
}

KMeansResult KMeans(const Eigen::MatrixXd& points, int m, uint64_t seed,
                    const KMeansOptions& options) {
  if (m < 1) throw std::invalid_argument("k-means needs at least one cluster");
  if (m > points.rows()) {
    throw std::invalid_argument("k-means cannot form " + std::to_string(m) + " clusters from " +
                                std::to_string(points.rows()) + " points");
  }
  const int restarts = std::max(1, options.restarts);
  KMeansResult best;
  for (int r = 0; r < restarts; ++r) {
    KMeansResult run = LloydRun(points, m, MixSeed(seed, static_cast<uint64_t>(r)), options);
    if (r == 0 || run.inertia < best.inertia - 1e-12) best = std::move(run);
  }
  return best;
}

GroupAssignment KMeansCluster(const Eigen::MatrixXd& embeddings, int m, uint64_t seed,
                              const KMeansOptions& options) {
  return KMeans(embeddings, m, seed, options).assignment;
}

std::vector<SubDataset> PartitionDataset(const ConceptDataset& dataset,
                                         const GroupAssignment& assignment) {
  if (assignment.concept_count() != dataset.concept_count()) {
    throw std::invalid_argument("assignment covers " + std::to_string(assignment.concept_count()) +
                                " concepts but dataset has " +
                                std::to_string(dataset.concept_count()));
  }
  assignment.Validate();
  std::vector<SubDataset> subs(assignment.m);
  for (int j = 0; j < assignment.m; ++j) {
    SubDataset& sub = subs[j];
    sub.group_index = j;
    sub.concept_indices = assignment.Members(j);
    sub.class_count = dataset.class_count;
    sub.samples.reserve(dataset.size());
    for (const auto& s : dataset.samples) {
      sub.samples.push_back(Sample{s.id, Restrict(s.concepts, sub.concept_indices), s.label});
    }
  }
  return subs;
}

}  // namespace conceptguard
