#pragma once

// Off-policy estimators for slate policies with observable slot rewards:
// IPS, IIPS, RIPS, Cascade-DR and the on-policy mean.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slate_ope/core.hpp"
#include "slate_ope/policy.hpp"

namespace slate_ope {

enum class EstimatorId { kIps, kIips, kRips, kCascadeDr, kOnPolicy };

std::string to_string(EstimatorId id);
// Accepts "ips", "iips", "rips", "cascade-dr" (also "cdr") and "on-policy".
EstimatorId parse_estimator_id(const std::string& name);

// Where behavior probabilities come from. kAuto uses a record's logged
// propensities when it has them and the policy otherwise.
class BehaviorSource {
 public:
  enum class Mode { kAuto, kPolicyOnly, kLoggedOnly };

  static BehaviorSource logged() { return BehaviorSource(nullptr, Mode::kLoggedOnly); }
  static BehaviorSource from_policy(PolicyPtr policy, Mode mode = Mode::kAuto) {
    return BehaviorSource(std::move(policy), mode);
  }

  // pi_b(a_l | x, a_{1:l-1}) of the logged slate.
  double conditional(const LoggedRecord& record, int slot) const;
  // pi_b(a_l | x) marginalised over the other slots.
  double marginal(const LoggedRecord& record, int slot) const;

  const Policy* policy() const { return policy_.get(); }
  Mode mode() const { return mode_; }

 private:
  BehaviorSource(PolicyPtr policy, Mode mode) : policy_(std::move(policy)), mode_(mode) {}
  bool use_logged(const LoggedRecord& record) const;

  PolicyPtr policy_;
  Mode mode_;
};

struct WeightProfile {
  std::vector<double> cumulative;     // w_{1:l} for l = 1..L
  std::vector<double> slot_marginal;  // w_l(x, a_l) for l = 1..L

  double full() const { return cumulative.back(); }
};

// Throws ValidationError when a behavior probability is zero or missing:
// the estimators require full support of pi_b over the logged slates.
WeightProfile importance_weights(const Policy& pi_e, const BehaviorSource& behavior,
                                 const LoggedRecord& record, bool with_marginals = true);

struct EstimateReport {
  double value = 0.0;
  std::vector<double> per_record;
  double weight_max = 0.0;
  double weight_mean = 0.0;
};

// Baseline Q_hat_l(x, a_{1:l}) used as a control variate by Cascade-DR.
// `prefix` always has length l >= 1; the last entry is the slot-l action.
class SlotBaseline {
 public:
  virtual ~SlotBaseline() = default;
  virtual double predict(std::span<const double> x, std::span<const int> prefix) const = 0;
  // Model responsible for record i; cross-fitted models override this.
  virtual const SlotBaseline& for_record(std::size_t /*record*/) const { return *this; }
  // Slate size the baseline was built for, when it is tied to one.
  virtual std::optional<int> slate_size() const { return std::nullopt; }
};

class ConstantBaseline final : public SlotBaseline {
 public:
  explicit ConstantBaseline(double value = 0.0) : value_(value) {}
  double predict(std::span<const double>, std::span<const int>) const override { return value_; }

 private:
  double value_;
};

// sum_{a'} pi_e(a' | x, prefix) * Q_hat(x, prefix ++ a'), by exact summation.
double expected_q_under_policy(const SlotBaseline& baseline, const Policy& pi_e,
                               std::span<const double> x, std::span<const int> prefix);

EstimateReport ips_estimate(const LoggedDataset& data, const Policy& pi_e,
                            const BehaviorSource& behavior);
EstimateReport iips_estimate(const LoggedDataset& data, const Policy& pi_e,
                             const BehaviorSource& behavior);
EstimateReport rips_estimate(const LoggedDataset& data, const Policy& pi_e,
                             const BehaviorSource& behavior);
// mean_i sum_l [ w_{1:l} (alpha_l r_l - Q_hat_l) + w_{1:l-1} E_{a'~pi_e}[Q_hat_l] ].
EstimateReport cascade_dr_estimate(const LoggedDataset& data, const Policy& pi_e,
                                   const BehaviorSource& behavior, const SlotBaseline& baseline);
EstimateReport on_policy_estimate(const LoggedDataset& data);

// Dispatch by id. `baseline` is only read by Cascade-DR; nullptr means Q_hat = 0.
EstimateReport run_estimator(EstimatorId id, const LoggedDataset& data, const Policy& pi_e,
                             const BehaviorSource& behavior, const SlotBaseline* baseline = nullptr);

}  // namespace slate_ope
