#pragma once

// Baseline Q_hat_l(x, a_{1:l}) for Cascade-DR, fitted slot by slot from the
// last slot backwards with importance-weighted least squares:
//
//   target_l = alpha_l r_l + E_{a' ~ pi_e(.|x, a_{1:l})}[Q_hat_{l+1}(x, a_{1:l}, a')]
//   weight_l = w_{1:l}
//
// with Q_hat_{L+1} = 0.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slate_ope/core.hpp"
#include "slate_ope/estimators.hpp"
#include "slate_ope/policy.hpp"

namespace slate_ope {

// Context values followed by one-hot codes of a_1..a_l:
// length d + l * |A|.
struct FeatureEncoder {
  int dim = 0;
  int n_actions = 0;
  int prefix_length = 0;

  int width() const { return dim + prefix_length * n_actions; }
  std::vector<double> encode(std::span<const double> x, std::span<const int> prefix) const;
  void encode_into(std::span<const double> x, std::span<const int> prefix,
                   std::span<double> out) const;
};

struct LearnerConfig {
  enum class Kind { kTree, kRidge };
  Kind kind = Kind::kTree;
  int max_depth = 3;
  int min_leaf = 5;
  double ridge_penalty = 1.0;
};

LearnerConfig::Kind parse_learner_kind(const std::string& name);
std::string to_string(LearnerConfig::Kind kind);

class RegressionLearner {
 public:
  virtual ~RegressionLearner() = default;
  // Rows of `features` are samples. Weights must be non-negative and finite.
  virtual void fit(const Eigen::MatrixXd& features, std::span<const double> targets,
                   std::span<const double> weights) = 0;
  virtual double predict(std::span<const double> features) const = 0;
  virtual bool fitted() const = 0;
};

// CART regression tree minimising weighted squared error.
class RegressionTree final : public RegressionLearner {
 public:
  RegressionTree(int max_depth, int min_leaf);

  void fit(const Eigen::MatrixXd& features, std::span<const double> targets,
           std::span<const double> weights) override;
  double predict(std::span<const double> features) const override;
  bool fitted() const override { return !nodes_.empty(); }

  std::size_t node_count() const { return nodes_.size(); }
  int depth() const;

 private:
  struct Node {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  int build(const Eigen::MatrixXd& features, std::span<const double> targets,
            std::span<const double> weights, std::vector<int>& rows, int depth);

  int max_depth_;
  int min_leaf_;
  std::vector<Node> nodes_;
};

// Weighted ridge regression with an unpenalised intercept.
class RidgeRegression final : public RegressionLearner {
 public:
  explicit RidgeRegression(double penalty);

  void fit(const Eigen::MatrixXd& features, std::span<const double> targets,
           std::span<const double> weights) override;
  double predict(std::span<const double> features) const override;
  bool fitted() const override { return fitted_; }

  const Eigen::VectorXd& coefficients() const { return coef_; }
  double intercept() const { return intercept_; }

 private:
  double penalty_;
  Eigen::VectorXd coef_;
  double intercept_ = 0.0;
  bool fitted_ = false;
};

std::unique_ptr<RegressionLearner> make_learner(const LearnerConfig& config);

// One learner per slot, trained on one set of records.
class SlotModels final : public SlotBaseline {
 public:
  SlotModels(int dim, int n_actions, int slate_size);

  double predict(std::span<const double> x, std::span<const int> prefix) const override;
  std::optional<int> slate_size() const override { return slate_size_; }

  void set_learner(int slot, std::unique_ptr<RegressionLearner> learner);
  bool trained(int slot) const;
  const FeatureEncoder& encoder(int slot) const { return encoders_[static_cast<std::size_t>(slot)]; }

 private:
  int slate_size_;
  std::vector<FeatureEncoder> encoders_;
  std::vector<std::unique_ptr<RegressionLearner>> learners_;
};

struct CrossFit {
  int folds = 0;  // 0 = fit on all records

  static CrossFit none() { return {}; }
  static CrossFit k_fold(int k) { return {k}; }
};

// Fitted baseline. With k-fold cross-fitting record i is served by the
// model trained without its fold; predictions for unseen inputs average
// the fold models.
class QModel final : public SlotBaseline {
 public:
  // Q_hat = 0 for every slot.
  static QModel zeros(int slate_size);

  double predict(std::span<const double> x, std::span<const int> prefix) const override;
  const SlotBaseline& for_record(std::size_t record) const override;
  std::optional<int> slate_size() const override { return slate_size_; }

  std::size_t fold_count() const { return folds_.size(); }
  const SlotModels& fold(std::size_t k) const { return *folds_[k]; }
  bool is_zero() const { return folds_.empty(); }

 private:
  friend QModel fit_q_model(const LoggedDataset&, const Policy&, const BehaviorSource&,
                            const LearnerConfig&, CrossFit);
  QModel() = default;

  int slate_size_ = 0;
  std::vector<std::shared_ptr<const SlotModels>> folds_;
  std::vector<int> record_fold_;
};

QModel fit_q_model(const LoggedDataset& data, const Policy& pi_e, const BehaviorSource& behavior,
                   const LearnerConfig& config, CrossFit cross_fit = CrossFit::none());

// Regression targets for `slot` (0-based) over the given records:
// alpha_l r_l plus the pi_e-expectation of `next` at slot + 1 (omitted when
// `next` is null, i.e. for the last slot).
std::vector<double> slot_targets(const LoggedDataset& data, std::span<const std::size_t> rows,
                                 const Policy& pi_e, int slot, const SlotBaseline* next);

}  // namespace slate_ope
