#include "conceptguard/models.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "conceptguard/error.h"
#include "conceptguard/rng.h"
#include "json.hpp"

namespace conceptguard {
namespace {

using nlohmann::json;

json MatrixToJson(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd MatrixFromJson(const json& rows, Eigen::Index expected_rows, Eigen::Index expected_cols) {
  if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != expected_rows) {
    throw Error("parameter matrix has wrong row count");
  }
  Eigen::MatrixXd m(expected_rows, expected_cols);
  for (Eigen::Index r = 0; r < expected_rows; ++r) {
    const auto& row = rows[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != expected_cols) {
      throw Error("parameter matrix has wrong column count");
    }
    for (Eigen::Index c = 0; c < expected_cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

json VectorToJson(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd VectorFromJson(const json& values, Eigen::Index expected) {
  if (!values.is_array() || static_cast<Eigen::Index>(values.size()) != expected) {
    throw Error("parameter vector has wrong length");
  }
  Eigen::VectorXd v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v(i) = values[i].get<double>();
  return v;
}

json TrainingToJson(const TrainingConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
              {"weight_decay", c.weight_decay},   {"hidden_units", c.hidden_units},
              {"seed", c.seed}};
}

TrainingConfig TrainingFromJson(const json& j) {
  TrainingConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.hidden_units = j.at("hidden_units").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void WriteFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text << '\n';
}

// Row-wise softmax, in place.
void Softmax(Eigen::MatrixXd& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double peak = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - peak).exp().matrix();
    logits.row(r) /= logits.row(r).sum();
  }
}

double CrossEntropy(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  double loss = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    loss -= std::log(std::max(probs(r, labels[r]), 1e-300));
  }
  return probs.rows() > 0 ? loss / static_cast<double>(probs.rows()) : 0.0;
}

ClassLabel ArgMax(const Eigen::VectorXd& scores) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = i;
  }
  return static_cast<ClassLabel>(best);
}

}  // namespace

BaseClassifier::BaseClassifier(int group_index, int input_dim, int class_count, int hidden_units)
    : group_index_(group_index),
      input_dim_(input_dim),
      class_count_(class_count),
      hidden_units_(hidden_units) {
  if (input_dim < 1) throw std::invalid_argument("base classifier needs a non-empty input");
  if (class_count < 1) throw std::invalid_argument("base classifier needs at least one class");
  if (hidden_units < 0) throw std::invalid_argument("hidden_units must be non-negative");
  const int features = hidden_units > 0 ? hidden_units : input_dim;
  if (hidden_units > 0) {
    hidden_weights_ = Eigen::MatrixXd::Zero(hidden_units, input_dim);
    hidden_bias_ = Eigen::VectorXd::Zero(hidden_units);
  }
  output_weights_ = Eigen::MatrixXd::Zero(class_count, features);
  output_bias_ = Eigen::VectorXd::Zero(class_count);
}

Eigen::VectorXd BaseClassifier::Scores(ConceptView input) const {
  if (static_cast<int>(input.size()) != input_dim_) {
    throw std::invalid_argument("classifier for group " + std::to_string(group_index_ + 1) +
                                " expects " + std::to_string(input_dim_) + " inputs, got " +
                                std::to_string(input.size()));
  }
  Eigen::VectorXd x(input_dim_);
  for (int i = 0; i < input_dim_; ++i) x(i) = input[i];
  if (hidden_units_ > 0) {
    Eigen::VectorXd h = (hidden_weights_ * x + hidden_bias_).cwiseMax(0.0);
    return output_weights_ * h + output_bias_;
  }
  return output_weights_ * x + output_bias_;
}

ClassLabel BaseClassifier::Predict(ConceptView input) const { return ArgMax(Scores(input)); }

std::string BaseClassifier::ToJson() const {
  json doc{{"group", group_index_ + 1},
           {"input_dim", input_dim_},
           {"class_count", class_count_},
           {"hidden_units", hidden_units_},
           {"output_weights", MatrixToJson(output_weights_)},
           {"output_bias", VectorToJson(output_bias_)},
           {"final_loss", final_loss_},
           {"training", TrainingToJson(training_)}};
  if (hidden_units_ > 0) {
    doc["hidden_weights"] = MatrixToJson(hidden_weights_);
    doc["hidden_bias"] = VectorToJson(hidden_bias_);
  }
  return doc.dump();
}

BaseClassifier BaseClassifier::FromJson(const std::string& text) {
  try {
    auto doc = json::parse(text);
    BaseClassifier c(doc.at("group").get<int>() - 1, doc.at("input_dim").get<int>(),
                     doc.at("class_count").get<int>(), doc.at("hidden_units").get<int>());
    const Eigen::Index features = c.hidden_units_ > 0 ? c.hidden_units_ : c.input_dim_;
    c.output_weights_ = MatrixFromJson(doc.at("output_weights"), c.class_count_, features);
    c.output_bias_ = VectorFromJson(doc.at("output_bias"), c.class_count_);
    if (c.hidden_units_ > 0) {
      c.hidden_weights_ = MatrixFromJson(doc.at("hidden_weights"), c.hidden_units_, c.input_dim_);
      c.hidden_bias_ = VectorFromJson(doc.at("hidden_bias"), c.hidden_units_);
    }
    c.final_loss_ = doc.at("final_loss").get<double>();
    c.training_ = TrainingFromJson(doc.at("training"));
    return c;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed classifier JSON: ") + e.what());
  }
}

BaseClassifier TrainBase(const SubDataset& sub, const TrainingConfig& config) {
  if (sub.input_dim() == 0) throw std::invalid_argument("cannot train on a zero-dimension sub-dataset");
  if (sub.samples.empty()) throw std::invalid_argument("cannot train on an empty sub-dataset");
  if (config.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  const auto n = static_cast<Eigen::Index>(sub.samples.size());
  const auto dim = static_cast<Eigen::Index>(sub.input_dim());
  const int classes = sub.class_count;

  BaseClassifier model(sub.group_index, static_cast<int>(dim), classes, config.hidden_units);
  model.training_ = config;

  Eigen::MatrixXd x(n, dim);
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, classes);
  std::vector<int> labels(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& s = sub.samples[r];
    if (static_cast<Eigen::Index>(s.concepts.size()) != dim) {
      throw std::invalid_argument("sub-dataset sample has wrong dimension");
    }
    for (Eigen::Index c = 0; c < dim; ++c) x(r, c) = s.concepts[c];
    if (s.label < 0 || s.label >= classes) throw std::invalid_argument("label out of range");
    onehot(r, s.label) = 1.0;
    labels[r] = s.label;
  }

  const double lr = config.learning_rate;
  const double decay = config.weight_decay;
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd& w = model.output_weights_;
  Eigen::VectorXd& b = model.output_bias_;

  if (config.hidden_units == 0) {
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      Eigen::MatrixXd probs = (x * w.transpose()).rowwise() + b.transpose();
      Softmax(probs);
      const Eigen::MatrixXd delta = (probs - onehot) * inv_n;
      const Eigen::MatrixXd grad_w = delta.transpose() * x + decay * w;
      const Eigen::VectorXd grad_b = delta.colwise().sum().transpose();
      w -= lr * grad_w;
      b -= lr * grad_b;
    }
    Eigen::MatrixXd probs = (x * w.transpose()).rowwise() + b.transpose();
    Softmax(probs);
    model.final_loss_ = CrossEntropy(probs, labels) + 0.5 * decay * w.squaredNorm();
    return model;
  }

  Rng rng(config.seed);
  const int hidden = config.hidden_units;
  Eigen::MatrixXd& h_w = model.hidden_weights_;
  Eigen::VectorXd& h_b = model.hidden_bias_;
  const double h_scale = std::sqrt(2.0 / static_cast<double>(dim));
  for (Eigen::Index r = 0; r < h_w.rows(); ++r) {
    for (Eigen::Index c = 0; c < h_w.cols(); ++c) h_w(r, c) = rng.Normal() * h_scale;
  }
  const double o_scale = std::sqrt(1.0 / static_cast<double>(hidden));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.Normal() * o_scale;
  }

  auto forward = [&](Eigen::MatrixXd& pre, Eigen::MatrixXd& act) {
    pre = (x * h_w.transpose()).rowwise() + h_b.transpose();
    act = pre.cwiseMax(0.0);
    Eigen::MatrixXd probs = (act * w.transpose()).rowwise() + b.transpose();
    Softmax(probs);
    return probs;
  };

  Eigen::MatrixXd pre, act;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Eigen::MatrixXd probs = forward(pre, act);
    const Eigen::MatrixXd delta = (probs - onehot) * inv_n;
    const Eigen::MatrixXd grad_w = delta.transpose() * act + decay * w;
    const Eigen::VectorXd grad_b = delta.colwise().sum().transpose();
    Eigen::MatrixXd back = delta * w;
    back = back.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd grad_hw = back.transpose() * x + decay * h_w;
    const Eigen::VectorXd grad_hb = back.colwise().sum().transpose();
    w -= lr * grad_w;
    b -= lr * grad_b;
    h_w -= lr * grad_hw;
    h_b -= lr * grad_hb;
  }
  Eigen::MatrixXd probs = forward(pre, act);
  model.final_loss_ =
      CrossEntropy(probs, labels) + 0.5 * decay * (w.squaredNorm() + h_w.squaredNorm());
  return model;
}

int VoteCounts::total() const {
  int sum = 0;
  for (int c : counts) sum += c;
  return sum;
}

ClassLabel VoteCounts::Winner() const {
  if (counts.empty()) throw std::invalid_argument("vote counts are empty");
  ClassLabel best = 0;
  for (size_t l = 1; l < counts.size(); ++l) {
    if (counts[l] > counts[best]) best = static_cast<ClassLabel>(l);
  }
  return best;
}

VoteCounts CountVotes(std::span<const ClassLabel> predictions, int class_count) {
  VoteCounts votes{std::vector<int>(class_count, 0)};
  for (ClassLabel p : predictions) {
    if (p < 0 || p >= class_count) throw std::invalid_argument("prediction outside the class range");
    ++votes.counts[p];
  }
  return votes;
}

EnsembleModel::EnsembleModel(GroupAssignment assignment, std::vector<BaseClassifier> classifiers,
                             int class_count)
    : assignment_(std::move(assignment)), classifiers_(std::move(classifiers)), class_count_(class_count) {
  assignment_.Validate();
  if (static_cast<int>(classifiers_.size()) != assignment_.m) {
    throw std::invalid_argument("ensemble needs one classifier per group");
  }
  members_.resize(assignment_.m);
  for (int j = 0; j < assignment_.m; ++j) {
    members_[j] = assignment_.Members(j);
    const auto& c = classifiers_[j];
    if (c.group_index() != j) throw std::invalid_argument("classifier order does not match groups");
    if (c.class_count() != class_count_) throw std::invalid_argument("classifier class count mismatch");
    if (c.input_dim() != static_cast<int>(members_[j].size())) {
      throw std::invalid_argument("classifier input size does not match its group");
    }
  }
}

void EnsembleModel::CheckDimension(ConceptView concepts) const {
  if (concepts.size() != concept_count()) {
    throw std::invalid_argument("concept vector has " + std::to_string(concepts.size()) +
                                " entries, ensemble expects " + std::to_string(concept_count()));
  }
}

std::vector<ClassLabel> EnsembleModel::BasePredictions(ConceptView concepts) const {
  CheckDimension(concepts);
  std::vector<ClassLabel> predictions(classifiers_.size());
  for (size_t j = 0; j < classifiers_.size(); ++j) {
    predictions[j] = classifiers_[j].Predict(Restrict(concepts, members_[j]));
  }
  return predictions;
}

VoteCounts EnsembleModel::Votes(ConceptView concepts) const {
  return CountVotes(BasePredictions(concepts), class_count_);
}

ClassLabel EnsembleModel::Predict(ConceptView concepts) const { return Votes(concepts).Winner(); }

void EnsembleModel::Save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  assignment_.Save(dir / "assignment.json");
  json files = json::array();
  for (size_t j = 0; j < classifiers_.size(); ++j) {
    const std::string name = "classifier_" + std::to_string(j + 1) + ".json";
    WriteFile(dir / name, classifiers_[j].ToJson());
    files.push_back(name);
  }
  json manifest{{"m", assignment_.m},
                {"class_count", class_count_},
                {"concept_count", concept_count()},
                {"classifiers", files},
                {"parameter_layout",
                 "output_weights is class_count rows x (hidden_units or input_dim) columns; "
                 "hidden_weights is hidden_units rows x input_dim columns"}};
  if (!classifiers_.empty()) manifest["training"] = TrainingToJson(classifiers_.front().training());
  WriteFile(dir / "manifest.json", manifest.dump(2));
}

EnsembleModel EnsembleModel::Load(const std::filesystem::path& dir) {
  GroupAssignment assignment = GroupAssignment::Load(dir / "assignment.json");
  json manifest;
  try {
    manifest = json::parse(ReadFile(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  std::vector<BaseClassifier> classifiers;
  for (const auto& name : manifest.at("classifiers")) {
    classifiers.push_back(BaseClassifier::FromJson(ReadFile(dir / name.get<std::string>())));
  }
  try {
    return EnsembleModel(std::move(assignment), std::move(classifiers),
                         manifest.at("class_count").get<int>());
  } catch (const std::invalid_argument& e) {
    throw Error(std::string("inconsistent model bundle: ") + e.what());
  }
}

EnsembleModel TrainEnsemble(const ConceptDataset& dataset, const GroupAssignment& assignment,
                            const TrainingConfig& config, int threads) {
  auto subs = PartitionDataset(dataset, assignment);
  std::vector<BaseClassifier> classifiers(subs.size());
  auto train_one = [&](size_t j) {
    TrainingConfig local = config;
    local.seed = MixSeed(config.seed, j);
    classifiers[j] = TrainBase(subs[j], local);
  };
  const size_t workers = std::clamp<size_t>(threads, 1, subs.size());
  if (workers == 1) {
    for (size_t j = 0; j < subs.size(); ++j) train_one(j);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (size_t j = w; j < subs.size(); j += workers) train_one(j);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return EnsembleModel(assignment, std::move(classifiers), dataset.class_count);
}

EnsembleModel TrainDirect(const ConceptDataset& dataset, const TrainingConfig& config) {
  return TrainEnsemble(dataset, GroupAssignment::Single(dataset.concept_count()), config);
}

}  // namespace conceptguard
