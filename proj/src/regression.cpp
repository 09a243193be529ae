#include "slate_ope/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace slate_ope {

std::vector<double> FeatureEncoder::encode(std::span<const double> x,
                                           std::span<const int> prefix) const {
  std::vector<double> out(static_cast<std::size_t>(width()));
  encode_into(x, prefix, out);
  return out;
}

void FeatureEncoder::encode_into(std::span<const double> x, std::span<const int> prefix,
                                 std::span<double> out) const {
  if (x.size() != static_cast<std::size_t>(dim)) throw ValidationError("context dimension mismatch");
  if (prefix.size() != static_cast<std::size_t>(prefix_length)) {
    throw ValidationError("prefix length does not match the encoder");
  }
  if (out.size() != static_cast<std::size_t>(width())) throw ValidationError("feature buffer size");
  std::fill(out.begin(), out.end(), 0.0);
  std::copy(x.begin(), x.end(), out.begin());
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    const int a = prefix[k];
    if (a < 0 || a >= n_actions) throw ValidationError("action index out of range");
    out[static_cast<std::size_t>(dim) + k * static_cast<std::size_t>(n_actions) +
        static_cast<std::size_t>(a)] = 1.0;
  }
}

LearnerConfig::Kind parse_learner_kind(const std::string& name) {
  if (name == "tree") return LearnerConfig::Kind::kTree;
  if (name == "ridge") return LearnerConfig::Kind::kRidge;
  throw ValidationError("unknown learner: " + name);
}

std::string to_string(LearnerConfig::Kind kind) {
  return kind == LearnerConfig::Kind::kTree ? "tree" : "ridge";
}

namespace {

void check_training_data(const Eigen::MatrixXd& features, std::span<const double> targets,
                         std::span<const double> weights) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (n == 0) throw ValidationError("cannot fit on zero samples");
  if (targets.size() != n || weights.size() != n) {
    throw ValidationError("features, targets and weights differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(targets[i])) throw ValidationError("non-finite regression target");
    if (!std::isfinite(weights[i]) || weights[i] < 0.0) {
      throw ValidationError("sample weights must be finite and non-negative");
    }
  }
}

}  // namespace

RegressionTree::RegressionTree(int max_depth, int min_leaf)
    : max_depth_(max_depth), min_leaf_(min_leaf) {
  if (max_depth < 0 || min_leaf < 1) throw ValidationError("invalid tree configuration");
}

void RegressionTree::fit(const Eigen::MatrixXd& features, std::span<const double> targets,
                         std::span<const double> weights) {
  check_training_data(features, targets, weights);
  nodes_.clear();
  std::vector<int> rows(static_cast<std::size_t>(features.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  build(features, targets, weights, rows, 0);
}

int RegressionTree::build(const Eigen::MatrixXd& features, std::span<const double> targets,
                          std::span<const double> weights, std::vector<int>& rows, int depth) {
  double total_w = 0.0;
  double total_s = 0.0;
  for (int r : rows) {
    total_w += weights[static_cast<std::size_t>(r)];
    total_s += weights[static_cast<std::size_t>(r)] * targets[static_cast<std::size_t>(r)];
  }
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  if (total_w > 0.0) {
    nodes_[static_cast<std::size_t>(index)].value = total_s / total_w;
  } else {
    double plain = 0.0;
    for (int r : rows) plain += targets[static_cast<std::size_t>(r)];
    nodes_[static_cast<std::size_t>(index)].value = plain / static_cast<double>(rows.size());
  }
  const auto n = static_cast<int>(rows.size());
  if (depth >= max_depth_ || n < 2 * min_leaf_ || total_w <= 0.0) return index;

  // Weighted SSE reduction of a split is SL^2/WL + SR^2/WR - S^2/W.
  const double parent = total_s * total_s / total_w;
  const double tolerance = 1e-12 * (std::abs(parent) + 1.0);
  double best_gain = tolerance;
  int best_feature = -1;
  double best_threshold = 0.0;
  std::vector<int> order(rows);
  for (int f = 0; f < features.cols(); ++f) {
    order = rows;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return features(a, f) < features(b, f); });
    double left_w = 0.0;
    double left_s = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
      const auto r = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
      left_w += weights[r];
      left_s += weights[r] * targets[r];
      if (i + 1 < min_leaf_ || n - (i + 1) < min_leaf_) continue;
      const double here = features(order[static_cast<std::size_t>(i)], f);
      const double next = features(order[static_cast<std::size_t>(i) + 1], f);
      if (!(here < next)) continue;
      const double right_w = total_w - left_w;
      if (left_w <= 0.0 || right_w <= 0.0) continue;
      const double right_s = total_s - left_s;
      const double gain = left_s * left_s / left_w + right_s * right_s / right_w - parent;
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = f;
        best_threshold = 0.5 * (here + next);
      }
    }
  }
  if (best_feature < 0) return index;

  std::vector<int> left_rows;
  std::vector<int> right_rows;
  for (int r : rows) {
    (features(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
  }
  const int left = build(features, targets, weights, left_rows, depth + 1);
  const int right = build(features, targets, weights, right_rows, depth + 1);
  Node& node = nodes_[static_cast<std::size_t>(index)];
  node.feature = best_feature;
  node.threshold = best_threshold;
  node.left = left;
  node.right = right;
  return index;
}

double RegressionTree::predict(std::span<const double> features) const {
  if (nodes_.empty()) throw ValidationError("regression tree is not fitted");
  int at = 0;
  while (nodes_[static_cast<std::size_t>(at)].feature >= 0) {
    const Node& node = nodes_[static_cast<std::size_t>(at)];
    at = features[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return nodes_[static_cast<std::size_t>(at)].value;
}

int RegressionTree::depth() const {
  if (nodes_.empty()) return 0;
  int deepest = 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [at, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const Node& node = nodes_[static_cast<std::size_t>(at)];
    if (node.feature >= 0) {
      stack.push_back({node.left, d + 1});
      stack.push_back({node.right, d + 1});
    }
  }
  return deepest;
}

RidgeRegression::RidgeRegression(double penalty) : penalty_(penalty) {
  if (!(penalty >= 0.0) || !std::isfinite(penalty)) {
    throw ValidationError("ridge penalty must be finite and non-negative");
  }
}

void RidgeRegression::fit(const Eigen::MatrixXd& features, std::span<const double> targets,
                          std::span<const double> weights) {
  check_training_data(features, targets, weights);
  const Eigen::Map<const Eigen::VectorXd> y(targets.data(), static_cast<Eigen::Index>(targets.size()));
  const Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
  const double total_w = w.sum();
  if (!(total_w > 0.0)) throw ValidationError("sample weights sum to zero");

  const Eigen::RowVectorXd x_mean = (w.transpose() * features) / total_w;
  const double y_mean = w.dot(y) / total_w;
  const Eigen::MatrixXd centered = features.rowwise() - x_mean;
  const Eigen::MatrixXd weighted = centered.array().colwise() * w.array();
  Eigen::MatrixXd gram = centered.transpose() * weighted;
  gram.diagonal().array() += penalty_;
  const Eigen::VectorXd rhs = weighted.transpose() * (y.array() - y_mean).matrix();
  // Semi-definite when penalty is zero and columns are collinear; the
  // complete orthogonal decomposition returns the minimum-norm solution.
  coef_ = gram.completeOrthogonalDecomposition().solve(rhs);
  intercept_ = y_mean - x_mean.dot(coef_);
  fitted_ = true;
}

double RidgeRegression::predict(std::span<const double> features) const {
  if (!fitted_) throw ValidationError("ridge model is not fitted");
  if (features.size() != static_cast<std::size_t>(coef_.size())) {
    throw ValidationError("feature width mismatch");
  }
  const Eigen::Map<const Eigen::VectorXd> x(features.data(), coef_.size());
  return intercept_ + coef_.dot(x);
}

std::unique_ptr<RegressionLearner> make_learner(const LearnerConfig& config) {
  if (config.kind == LearnerConfig::Kind::kTree) {
    return std::make_unique<RegressionTree>(config.max_depth, config.min_leaf);
  }
  return std::make_unique<RidgeRegression>(config.ridge_penalty);
}

SlotModels::SlotModels(int dim, int n_actions, int slate_size)
    : slate_size_(slate_size), learners_(static_cast<std::size_t>(slate_size)) {
  if (dim < 0 || n_actions < 1 || slate_size < 1) throw ValidationError("invalid model layout");
  for (int l = 1; l <= slate_size; ++l) encoders_.push_back({dim, n_actions, l});
}

void SlotModels::set_learner(int slot, std::unique_ptr<RegressionLearner> learner) {
  learners_.at(static_cast<std::size_t>(slot)) = std::move(learner);
}

bool SlotModels::trained(int slot) const {
  const auto& learner = learners_.at(static_cast<std::size_t>(slot));
  return learner && learner->fitted();
}

double SlotModels::predict(std::span<const double> x, std::span<const int> prefix) const {
  const auto l = prefix.size();
  if (l == 0) throw ValidationError("baseline prefix must contain the slot action");
  if (l > static_cast<std::size_t>(slate_size_)) return 0.0;  // Q_hat_{L+1}
  const auto& learner = learners_[l - 1];
  if (!learner || !learner->fitted()) {
    throw ValidationError("baseline for slot " + std::to_string(l) + " is not trained");
  }
  const auto features = encoders_[l - 1].encode(x, prefix);
  return learner->predict(features);
}

QModel QModel::zeros(int slate_size) {
  if (slate_size < 1) throw ValidationError("slate size must be positive");
  QModel model;
  model.slate_size_ = slate_size;
  return model;
}

double QModel::predict(std::span<const double> x, std::span<const int> prefix) const {
  if (prefix.empty() || prefix.size() > static_cast<std::size_t>(slate_size_) + 1) {
    throw ValidationError("baseline prefix length out of range");
  }
  if (folds_.empty()) return 0.0;
  double total = 0.0;
  for (const auto& fold : folds_) total += fold->predict(x, prefix);
  return total / static_cast<double>(folds_.size());
}

const SlotBaseline& QModel::for_record(std::size_t record) const {
  if (folds_.size() <= 1) return *this;
  if (record >= record_fold_.size()) {
    throw ValidationError("record index outside the cross-fitted dataset");
  }
  return *folds_[static_cast<std::size_t>(record_fold_[record])];
}

std::vector<double> slot_targets(const LoggedDataset& data, std::span<const std::size_t> rows,
                                 const Policy& pi_e, int slot, const SlotBaseline* next) {
  std::vector<double> targets;
  targets.reserve(rows.size());
  const double alpha = data.alpha()[static_cast<std::size_t>(slot)];
  for (std::size_t i : rows) {
    const auto& rec = data[i];
    double t = alpha * rec.rewards[static_cast<std::size_t>(slot)];
    if (next != nullptr) {
      t += expected_q_under_policy(*next, pi_e, rec.context,
                                   std::span(rec.slate).first(static_cast<std::size_t>(slot) + 1));
    }
    targets.push_back(t);
  }
  return targets;
}

namespace {

std::shared_ptr<const SlotModels> fit_backward(const LoggedDataset& data,
                                               std::span<const std::size_t> rows,
                                               const std::vector<WeightProfile>& weights,
                                               const Policy& pi_e, const LearnerConfig& config) {
  const int L = data.slate_size();
  auto models = std::make_shared<SlotModels>(data.dim(), data.n_actions(), L);
  const auto n = static_cast<Eigen::Index>(rows.size());
  for (int slot = L - 1; slot >= 0; --slot) {
    const FeatureEncoder& enc = models->encoder(slot);
    Eigen::MatrixXd features(n, enc.width());
    std::vector<double> sample_weights(rows.size());
    std::vector<double> buffer(static_cast<std::size_t>(enc.width()));
    for (Eigen::Index k = 0; k < n; ++k) {
      const std::size_t i = rows[static_cast<std::size_t>(k)];
      const auto& rec = data[i];
      enc.encode_into(rec.context, std::span(rec.slate).first(static_cast<std::size_t>(slot) + 1),
                      buffer);
      for (Eigen::Index j = 0; j < enc.width(); ++j) features(k, j) = buffer[static_cast<std::size_t>(j)];
      const double w = weights[i].cumulative[static_cast<std::size_t>(slot)];
      if (!std::isfinite(w)) throw ValidationError("non-finite importance weight");
      sample_weights[static_cast<std::size_t>(k)] = w;
    }
    // Only the already fitted slot + 1 model is read here.
    const SlotBaseline* next = slot + 1 < L ? models.get() : nullptr;
    const auto targets = slot_targets(data, rows, pi_e, slot, next);
    auto learner = make_learner(config);
    learner->fit(features, targets, sample_weights);
    models->set_learner(slot, std::move(learner));
  }
  return models;
}

}  // namespace

QModel fit_q_model(const LoggedDataset& data, const Policy& pi_e, const BehaviorSource& behavior,
                   const LearnerConfig& config, CrossFit cross_fit) {
  if (pi_e.slate_size() != data.slate_size() || pi_e.n_actions() != data.n_actions()) {
    throw ValidationError("evaluation policy layout does not match the dataset");
  }
  std::vector<WeightProfile> weights;
  weights.reserve(data.size());
  for (const auto& rec : data.records()) {
    weights.push_back(importance_weights(pi_e, behavior, rec, false));
  }

  QModel model;
  model.slate_size_ = data.slate_size();
  if (cross_fit.folds == 0) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    model.folds_.push_back(fit_backward(data, all, weights, pi_e, config));
    return model;
  }
  const int k = cross_fit.folds;
  if (k < 2 || static_cast<std::size_t>(k) > data.size()) {
    throw ValidationError("cross-fitting needs 2 <= k <= n folds");
  }
  model.record_fold_.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) model.record_fold_[i] = static_cast<int>(i % k);
  for (int f = 0; f < k; ++f) {
    std::vector<std::size_t> training;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (model.record_fold_[i] != f) training.push_back(i);
    }
    if (training.empty()) throw ValidationError("cross-fitting fold leaves no training data");
    model.folds_.push_back(fit_backward(data, training, weights, pi_e, config));
  }
  return model;
}

}  // namespace slate_ope
