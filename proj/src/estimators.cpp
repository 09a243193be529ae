#include "slate_ope/estimators.hpp"

#include <algorithm>
#include <string>

namespace slate_ope {

std::string to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::kIps: return "ips";
    case EstimatorId::kIips: return "iips";
    case EstimatorId::kRips: return "rips";
    case EstimatorId::kCascadeDr: return "cascade-dr";
    case EstimatorId::kOnPolicy: return "on-policy";
  }
  return "ips";
}

EstimatorId parse_estimator_id(const std::string& name) {
  if (name == "ips") return EstimatorId::kIps;
  if (name == "iips") return EstimatorId::kIips;
  if (name == "rips") return EstimatorId::kRips;
  if (name == "cascade-dr" || name == "cdr") return EstimatorId::kCascadeDr;
  if (name == "on-policy") return EstimatorId::kOnPolicy;
  throw ValidationError("unknown estimator: " + name);
}

bool BehaviorSource::use_logged(const LoggedRecord& record) const {
  switch (mode_) {
    case Mode::kLoggedOnly: return true;
    case Mode::kPolicyOnly: return false;
    case Mode::kAuto: return record.has_propensities() || policy_ == nullptr;
  }
  return true;
}

namespace {

[[noreturn]] void missing_support(int slot) {
  throw ValidationError("behavior probability of the logged action at slot " +
                        std::to_string(slot + 1) +
                        " is zero or missing; the estimators require full support of the "
                        "behavior policy over logged slates");
}

double checked(double p, int slot) {
  if (!(p > 0.0)) missing_support(slot);
  return p;
}

}  // namespace

double BehaviorSource::conditional(const LoggedRecord& record, int slot) const {
  if (use_logged(record)) {
    if (!record.has_propensities()) missing_support(slot);
    return checked(record.propensities[static_cast<std::size_t>(slot)], slot);
  }
  const auto cond = policy_->conditional_pmf(record.context, std::span(record.slate).first(slot));
  return checked(cond[static_cast<std::size_t>(record.slate[static_cast<std::size_t>(slot)])], slot);
}

double BehaviorSource::marginal(const LoggedRecord& record, int slot) const {
  const bool policy_marginal =
      policy_ && mode_ != Mode::kLoggedOnly && !policy_->factorizable();
  if (use_logged(record) && !policy_marginal) {
    // Logged per-slot propensities are marginals when the logging policy is
    // factorizable, the only case in which they are usable for IIPS.
    if (!record.has_propensities()) missing_support(slot);
    return checked(record.propensities[static_cast<std::size_t>(slot)], slot);
  }
  const auto marg = policy_->marginal_slot_pmf(record.context, slot);
  return checked(marg[static_cast<std::size_t>(record.slate[static_cast<std::size_t>(slot)])], slot);
}

WeightProfile importance_weights(const Policy& pi_e, const BehaviorSource& behavior,
                                 const LoggedRecord& record, bool with_marginals) {
  const int L = static_cast<int>(record.slate.size());
  if (pi_e.slate_size() != L) throw ValidationError("evaluation policy slate size != L");
  WeightProfile out;
  out.cumulative.resize(static_cast<std::size_t>(L));
  std::vector<double> fixed_row;
  if (pi_e.factorizable()) fixed_row = pi_e.conditional_pmf(record.context, {});
  double running = 1.0;
  for (int l = 0; l < L; ++l) {
    const auto a = static_cast<std::size_t>(record.slate[static_cast<std::size_t>(l)]);
    const double p_e = pi_e.factorizable()
                           ? fixed_row[a]
                           : pi_e.conditional_pmf(record.context, std::span(record.slate).first(l))[a];
    running *= p_e / behavior.conditional(record, l);
    out.cumulative[static_cast<std::size_t>(l)] = running;
  }
  if (with_marginals) {
    out.slot_marginal.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      const auto a = static_cast<std::size_t>(record.slate[static_cast<std::size_t>(l)]);
      const double p_e = pi_e.factorizable() ? fixed_row[a]
                                             : pi_e.marginal_slot_pmf(record.context, l)[a];
      out.slot_marginal[static_cast<std::size_t>(l)] = p_e / behavior.marginal(record, l);
    }
  }
  return out;
}

namespace {

void check_layout(const LoggedDataset& data, const Policy& pi_e) {
  if (pi_e.slate_size() != data.slate_size() || pi_e.n_actions() != data.n_actions()) {
    throw ValidationError("evaluation policy layout does not match the dataset");
  }
}

// Fixed-order reduction so results do not depend on scheduling.
void finalize(EstimateReport& report, double weight_sum, std::size_t weight_count) {
  double total = 0.0;
  for (double v : report.per_record) total += v;
  report.value = total / static_cast<double>(report.per_record.size());
  report.weight_mean = weight_count ? weight_sum / static_cast<double>(weight_count) : 0.0;
}

}  // namespace

EstimateReport ips_estimate(const LoggedDataset& data, const Policy& pi_e,
                            const BehaviorSource& behavior) {
  check_layout(data, pi_e);
  EstimateReport report;
  report.per_record.reserve(data.size());
  double weight_sum = 0.0;
  for (const auto& rec : data.records()) {
    const double w = importance_weights(pi_e, behavior, rec, false).full();
    report.per_record.push_back(w * slate_reward(rec.rewards, data.alpha()));
    report.weight_max = std::max(report.weight_max, w);
    weight_sum += w;
  }
  finalize(report, weight_sum, data.size());
  return report;
}

EstimateReport iips_estimate(const LoggedDataset& data, const Policy& pi_e,
                             const BehaviorSource& behavior) {
  check_layout(data, pi_e);
  EstimateReport report;
  report.per_record.reserve(data.size());
  double weight_sum = 0.0;
  for (const auto& rec : data.records()) {
    const auto weights = importance_weights(pi_e, behavior, rec, true);
    double v = 0.0;
    for (std::size_t l = 0; l < rec.slate.size(); ++l) {
      const double w = weights.slot_marginal[l];
      v += w * data.alpha()[l] * rec.rewards[l];
      report.weight_max = std::max(report.weight_max, w);
      weight_sum += w;
    }
    report.per_record.push_back(v);
  }
  finalize(report, weight_sum, data.size() * static_cast<std::size_t>(data.slate_size()));
  return report;
}

EstimateReport rips_estimate(const LoggedDataset& data, const Policy& pi_e,
                             const BehaviorSource& behavior) {
  check_layout(data, pi_e);
  EstimateReport report;
  report.per_record.reserve(data.size());
  double weight_sum = 0.0;
  for (const auto& rec : data.records()) {
    const auto weights = importance_weights(pi_e, behavior, rec, false);
    double v = 0.0;
    for (std::size_t l = 0; l < rec.slate.size(); ++l) {
      const double w = weights.cumulative[l];
      v += w * data.alpha()[l] * rec.rewards[l];
      report.weight_max = std::max(report.weight_max, w);
      weight_sum += w;
    }
    report.per_record.push_back(v);
  }
  finalize(report, weight_sum, data.size() * static_cast<std::size_t>(data.slate_size()));
  return report;
}

double expected_q_under_policy(const SlotBaseline& baseline, const Policy& pi_e,
                               std::span<const double> x, std::span<const int> prefix) {
  const auto cond = pi_e.conditional_pmf(x, prefix);
  std::vector<int> extended(prefix.begin(), prefix.end());
  extended.push_back(0);
  double total = 0.0;
  for (int a = 0; a < pi_e.n_actions(); ++a) {
    const double p = cond[static_cast<std::size_t>(a)];
    if (p == 0.0) continue;
    extended.back() = a;
    total += p * baseline.predict(x, extended);
  }
  return total;
}

EstimateReport cascade_dr_estimate(const LoggedDataset& data, const Policy& pi_e,
                                   const BehaviorSource& behavior, const SlotBaseline& baseline) {
  check_layout(data, pi_e);
  if (const auto L = baseline.slate_size(); L && *L != data.slate_size()) {
    throw ValidationError("baseline model was built for a different slate size");
  }
  EstimateReport report;
  report.per_record.reserve(data.size());
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& rec = data[i];
    const SlotBaseline& q_hat = baseline.for_record(i);
    const auto weights = importance_weights(pi_e, behavior, rec, false);
    const std::span<const int> slate(rec.slate);
    double v = 0.0;
    double previous = 1.0;  // w_{1:0}
    for (std::size_t l = 0; l < slate.size(); ++l) {
      const double w = weights.cumulative[l];
      const double control = expected_q_under_policy(q_hat, pi_e, rec.context, slate.first(l));
      const double fitted = q_hat.predict(rec.context, slate.first(l + 1));
      v += w * (data.alpha()[l] * rec.rewards[l] - fitted) + previous * control;
      previous = w;
      report.weight_max = std::max(report.weight_max, w);
      weight_sum += w;
    }
    report.per_record.push_back(v);
  }
  finalize(report, weight_sum, data.size() * static_cast<std::size_t>(data.slate_size()));
  return report;
}

EstimateReport on_policy_estimate(const LoggedDataset& data) {
  EstimateReport report;
  report.per_record.reserve(data.size());
  for (const auto& rec : data.records()) {
    report.per_record.push_back(slate_reward(rec.rewards, data.alpha()));
  }
  finalize(report, static_cast<double>(data.size()), data.size());
  report.weight_max = 1.0;
  return report;
}

EstimateReport run_estimator(EstimatorId id, const LoggedDataset& data, const Policy& pi_e,
                             const BehaviorSource& behavior, const SlotBaseline* baseline) {
  switch (id) {
    case EstimatorId::kIps: return ips_estimate(data, pi_e, behavior);
    case EstimatorId::kIips: return iips_estimate(data, pi_e, behavior);
    case EstimatorId::kRips: return rips_estimate(data, pi_e, behavior);
    case EstimatorId::kCascadeDr: {
      const ConstantBaseline zero(0.0);
      return cascade_dr_estimate(data, pi_e, behavior, baseline ? *baseline : zero);
    }
    case EstimatorId::kOnPolicy: return on_policy_estimate(data);
  }
  throw ValidationError("unknown estimator");
}

}  // namespace slate_ope
