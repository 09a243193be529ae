#pragma once

// Ranking policies: distributions over slates given a context.
//
// Every policy is described by its per-slot conditionals
// pi(a_l | x, a_{1:l-1}); slate probabilities, marginals and sampling are
// derived from them. Factorizable policies ignore the prefix and may repeat
// items; Plackett-Luce never repeats an item.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "slate_ope/core.hpp"
#include "slate_ope/rng.hpp"

namespace slate_ope {

// f(x, a) = theta_a . x + b_a for every action a.
struct LinearScorer {
  std::vector<std::vector<double>> theta;  // |A| rows of d entries
  std::vector<double> bias;                // |A|

  int n_actions() const { return static_cast<int>(bias.size()); }
  int dim() const { return theta.empty() ? 0 : static_cast<int>(theta.front().size()); }

  double score(std::span<const double> x, int action) const;
  std::vector<double> scores(std::span<const double> x) const;
  void validate() const;
};

// Numerically stable softmax (max-logit subtraction).
std::vector<double> softmax(std::span<const double> logits);

class Policy {
 public:
  Policy(int n_actions, int slate_size);
  virtual ~Policy() = default;

  int n_actions() const { return n_actions_; }
  int slate_size() const { return slate_size_; }

  virtual bool factorizable() const = 0;
  virtual std::string kind() const = 0;

  // pi(. | x, prefix) over all |A| actions; prefix.size() < L.
  virtual std::vector<double> conditional_pmf(std::span<const double> x,
                                              std::span<const int> prefix) const = 0;

  // pi(a_l = . | x) marginalised over every other slot. `slot` is 0-based.
  virtual std::vector<double> marginal_slot_pmf(std::span<const double> x, int slot) const;

  // L x |A| matrix; row l is the marginal of slot l.
  std::vector<std::vector<double>> slot_pmf(std::span<const double> x) const;

  // Product of conditionals. Zero for slates outside the support (a
  // Plackett-Luce query with duplicate items).
  double slate_pmf(std::span<const double> x, std::span<const int> slate) const;

  Slate sample_slate(std::span<const double> x, Rng& rng) const;

  virtual nlohmann::json to_json() const = 0;

 protected:
  void check_prefix(std::span<const int> prefix) const;

 private:
  int n_actions_;
  int slate_size_;
};

using PolicyPtr = std::shared_ptr<const Policy>;

// Every slot drawn independently with probability 1/|A| per action.
class UniformPolicy final : public Policy {
 public:
  UniformPolicy(int n_actions, int slate_size) : Policy(n_actions, slate_size) {}

  bool factorizable() const override { return true; }
  std::string kind() const override { return "uniform"; }
  std::vector<double> conditional_pmf(std::span<const double> x,
                                      std::span<const int> prefix) const override;
  nlohmann::json to_json() const override;
};

// pi(a_l | x) = softmax_a(logit_scale * f(x, a) + logit_offset), the same
// distribution at every slot.
class FactorizableSoftmaxPolicy final : public Policy {
 public:
  FactorizableSoftmaxPolicy(LinearScorer scorer, int slate_size, double logit_scale = 1.0,
                            double logit_offset = 0.0);

  bool factorizable() const override { return true; }
  std::string kind() const override { return "factorizable_softmax"; }
  std::vector<double> conditional_pmf(std::span<const double> x,
                                      std::span<const int> prefix) const override;
  nlohmann::json to_json() const override;

  std::vector<double> logits(std::span<const double> x) const;

  const LinearScorer& scorer() const { return scorer_; }
  double logit_scale() const { return logit_scale_; }
  double logit_offset() const { return logit_offset_; }

 private:
  LinearScorer scorer_;
  double logit_scale_;
  double logit_offset_;
};

// Sequential sampling without replacement with weights exp(f(x, a)).
class PlackettLucePolicy final : public Policy {
 public:
  // Exact marginals are enumerated while |A|^L stays at or below this.
  static constexpr double kEnumerationLimit = 1e6;
  static constexpr int kMonteCarloSamples = 100000;

  struct Marginal {
    std::vector<double> probs;
    bool exact = true;
    double standard_error = 0.0;  // largest per-action MC standard error
  };

  PlackettLucePolicy(LinearScorer scorer, int slate_size);

  bool factorizable() const override { return false; }
  std::string kind() const override { return "plackett_luce"; }
  std::vector<double> conditional_pmf(std::span<const double> x,
                                      std::span<const int> prefix) const override;
  std::vector<double> marginal_slot_pmf(std::span<const double> x, int slot) const override;
  nlohmann::json to_json() const override;

  Marginal marginal_with_error(std::span<const double> x, int slot) const;

  const LinearScorer& scorer() const { return scorer_; }

 private:
  LinearScorer scorer_;
};

// Behavior policy: softmax of a linear scorer with theta and bias drawn i.i.d. U[0, 1).
std::shared_ptr<FactorizableSoftmaxPolicy> make_behavior_policy(int dim, int n_actions,
                                                                int slate_size, Rng& rng);

// Logits lambda * f_b(x, a) + (1 - |lambda|), reusing the behavior scorer.
// lambda must lie in [-1, 1). The additive term cannot change the softmax
// output; it is kept so the serialized policy matches its definition.
std::shared_ptr<FactorizableSoftmaxPolicy> make_evaluation_policy(
    const FactorizableSoftmaxPolicy& behavior, double lambda);

PolicyPtr policy_from_json(const nlohmann::json& doc);

}  // namespace slate_ope
