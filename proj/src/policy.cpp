#include "slate_ope/policy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace slate_ope {

double LinearScorer::score(std::span<const double> x, int action) const {
  const auto& row = theta[static_cast<std::size_t>(action)];
  if (x.size() != row.size()) throw ValidationError("context dimension does not match scorer");
  double s = bias[static_cast<std::size_t>(action)];
  for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * x[j];
  return s;
}

std::vector<double> LinearScorer::scores(std::span<const double> x) const {
  std::vector<double> out(bias.size());
  for (int a = 0; a < n_actions(); ++a) out[static_cast<std::size_t>(a)] = score(x, a);
  return out;
}

void LinearScorer::validate() const {
  if (bias.empty()) throw ValidationError("scorer needs at least one action");
  if (theta.size() != bias.size()) throw ValidationError("scorer theta/bias size mismatch");
  const std::size_t d = theta.front().size();
  for (const auto& row : theta) {
    if (row.size() != d) throw ValidationError("scorer rows differ in dimension");
    for (double v : row) {
      if (!std::isfinite(v)) throw ValidationError("non-finite scorer parameter");
    }
  }
  for (double v : bias) {
    if (!std::isfinite(v)) throw ValidationError("non-finite scorer bias");
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  const double top = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

Policy::Policy(int n_actions, int slate_size) : n_actions_(n_actions), slate_size_(slate_size) {
  if (n_actions < 1) throw ValidationError("policy needs at least one action");
  if (slate_size < 1) throw ValidationError("slate size must be positive");
}

void Policy::check_prefix(std::span<const int> prefix) const {
  if (prefix.size() >= static_cast<std::size_t>(slate_size_)) {
    throw ValidationError("prefix must be shorter than the slate");
  }
  for (int a : prefix) {
    if (a < 0 || a >= n_actions_) throw ValidationError("prefix action out of range");
  }
}

std::vector<double> Policy::marginal_slot_pmf(std::span<const double> x, int slot) const {
  if (slot < 0 || slot >= slate_size_) throw ValidationError("slot out of range");
  // Factorizable default: the conditional does not depend on the prefix.
  return conditional_pmf(x, {});
}

std::vector<std::vector<double>> Policy::slot_pmf(std::span<const double> x) const {
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(slate_size_));
  if (factorizable()) {
    rows.assign(static_cast<std::size_t>(slate_size_), conditional_pmf(x, {}));
    return rows;
  }
  for (int l = 0; l < slate_size_; ++l) rows.push_back(marginal_slot_pmf(x, l));
  return rows;
}

double Policy::slate_pmf(std::span<const double> x, std::span<const int> slate) const {
  if (slate.size() != static_cast<std::size_t>(slate_size_)) {
    throw ValidationError("slate length != L");
  }
  double p = 1.0;
  for (std::size_t l = 0; l < slate.size(); ++l) {
    const auto cond = conditional_pmf(x, slate.first(l));
    const int a = slate[l];
    if (a < 0 || a >= n_actions_) throw ValidationError("slate action out of range");
    p *= cond[static_cast<std::size_t>(a)];
    if (p == 0.0) break;
  }
  return p;
}

Slate Policy::sample_slate(std::span<const double> x, Rng& rng) const {
  Slate slate;
  slate.reserve(static_cast<std::size_t>(slate_size_));
  for (int l = 0; l < slate_size_; ++l) {
    const auto cond = conditional_pmf(x, slate);
    const double u = uniform01(rng);
    double cum = 0.0;
    int pick = -1;
    for (int a = 0; a < n_actions_; ++a) {
      const double p = cond[static_cast<std::size_t>(a)];
      if (p <= 0.0) continue;
      cum += p;
      pick = a;
      if (u < cum) break;
    }
    slate.push_back(pick);
  }
  return slate;
}

std::vector<double> UniformPolicy::conditional_pmf(std::span<const double>,
                                                   std::span<const int> prefix) const {
  check_prefix(prefix);
  return std::vector<double>(static_cast<std::size_t>(n_actions()), 1.0 / n_actions());
}

nlohmann::json UniformPolicy::to_json() const {
  return {{"kind", kind()}, {"n_actions", n_actions()}, {"slate_size", slate_size()}};
}

FactorizableSoftmaxPolicy::FactorizableSoftmaxPolicy(LinearScorer scorer, int slate_size,
                                                     double logit_scale, double logit_offset)
    : Policy(static_cast<int>(scorer.bias.size()), slate_size),
      scorer_(std::move(scorer)),
      logit_scale_(logit_scale),
      logit_offset_(logit_offset) {
  scorer_.validate();
  if (!std::isfinite(logit_scale_) || !std::isfinite(logit_offset_)) {
    throw ValidationError("logit scale and offset must be finite");
  }
}

std::vector<double> FactorizableSoftmaxPolicy::logits(std::span<const double> x) const {
  auto z = scorer_.scores(x);
  for (double& v : z) v = logit_scale_ * v + logit_offset_;
  return z;
}

std::vector<double> FactorizableSoftmaxPolicy::conditional_pmf(std::span<const double> x,
                                                               std::span<const int> prefix) const {
  check_prefix(prefix);
  return softmax(logits(x));
}

nlohmann::json FactorizableSoftmaxPolicy::to_json() const {
  return {{"kind", kind()},
          {"n_actions", n_actions()},
          {"slate_size", slate_size()},
          {"theta", scorer_.theta},
          {"bias", scorer_.bias},
          {"logit_scale", logit_scale_},
          {"logit_offset", logit_offset_}};
}

PlackettLucePolicy::PlackettLucePolicy(LinearScorer scorer, int slate_size)
    : Policy(static_cast<int>(scorer.bias.size()), slate_size), scorer_(std::move(scorer)) {
  scorer_.validate();
  if (slate_size > n_actions()) {
    throw ValidationError("Plackett-Luce slate cannot be longer than the action set");
  }
}

std::vector<double> PlackettLucePolicy::conditional_pmf(std::span<const double> x,
                                                        std::span<const int> prefix) const {
  check_prefix(prefix);
  auto f = scorer_.scores(x);
  std::vector<bool> used(f.size(), false);
  for (int a : prefix) used[static_cast<std::size_t>(a)] = true;
  double top = -INFINITY;
  for (std::size_t a = 0; a < f.size(); ++a) {
    if (!used[a]) top = std::max(top, f[a]);
  }
  std::vector<double> p(f.size(), 0.0);
  if (!std::isfinite(top)) return p;  // every action already placed
  double total = 0.0;
  for (std::size_t a = 0; a < f.size(); ++a) {
    if (used[a]) continue;
    p[a] = std::exp(f[a] - top);
    total += p[a];
  }
  for (double& v : p) v /= total;
  return p;
}

PlackettLucePolicy::Marginal PlackettLucePolicy::marginal_with_error(std::span<const double> x,
                                                                     int slot) const {
  if (slot < 0 || slot >= slate_size()) throw ValidationError("slot out of range");
  Marginal out;
  out.probs.assign(static_cast<std::size_t>(n_actions()), 0.0);
  if (std::pow(static_cast<double>(n_actions()), slate_size()) <= kEnumerationLimit) {
    Slate prefix;
    std::function<void(double)> descend = [&](double mass) {
      const auto cond = conditional_pmf(x, prefix);
      for (int a = 0; a < n_actions(); ++a) {
        const double p = cond[static_cast<std::size_t>(a)];
        if (p == 0.0) continue;
        if (static_cast<int>(prefix.size()) == slot) {
          out.probs[static_cast<std::size_t>(a)] += mass * p;
        } else {
          prefix.push_back(a);
          descend(mass * p);
          prefix.pop_back();
        }
      }
    };
    descend(1.0);
    return out;
  }
  Rng rng = make_rng(0x504c4d41, {static_cast<std::uint64_t>(slot)});
  Slate prefix;
  for (int s = 0; s < kMonteCarloSamples; ++s) {
    prefix.clear();
    for (int l = 0; l <= slot; ++l) {
      const auto cond = conditional_pmf(x, prefix);
      const double u = uniform01(rng);
      double cum = 0.0;
      int pick = -1;
      for (int a = 0; a < n_actions(); ++a) {
        if (cond[static_cast<std::size_t>(a)] <= 0.0) continue;
        cum += cond[static_cast<std::size_t>(a)];
        pick = a;
        if (u < cum) break;
      }
      prefix.push_back(pick);
    }
    out.probs[static_cast<std::size_t>(prefix.back())] += 1.0;
  }
  out.exact = false;
  for (double& p : out.probs) {
    p /= kMonteCarloSamples;
    out.standard_error = std::max(out.standard_error, std::sqrt(p * (1.0 - p) / kMonteCarloSamples));
  }
  return out;
}

std::vector<double> PlackettLucePolicy::marginal_slot_pmf(std::span<const double> x,
                                                          int slot) const {
  return marginal_with_error(x, slot).probs;
}

nlohmann::json PlackettLucePolicy::to_json() const {
  return {{"kind", kind()},
          {"n_actions", n_actions()},
          {"slate_size", slate_size()},
          {"theta", scorer_.theta},
          {"bias", scorer_.bias}};
}

std::shared_ptr<FactorizableSoftmaxPolicy> make_behavior_policy(int dim, int n_actions,
                                                                int slate_size, Rng& rng) {
  if (dim < 1 || n_actions < 1 || slate_size < 1) {
    throw ValidationError("behavior policy dimensions must be positive");
  }
  LinearScorer scorer;
  scorer.theta.assign(static_cast<std::size_t>(n_actions),
                      std::vector<double>(static_cast<std::size_t>(dim)));
  scorer.bias.resize(static_cast<std::size_t>(n_actions));
  for (auto& row : scorer.theta) {
    for (double& v : row) v = uniform01(rng);
  }
  for (double& v : scorer.bias) v = uniform01(rng);
  return std::make_shared<FactorizableSoftmaxPolicy>(std::move(scorer), slate_size, 1.0, 0.0);
}

std::shared_ptr<FactorizableSoftmaxPolicy> make_evaluation_policy(
    const FactorizableSoftmaxPolicy& behavior, double lambda) {
  if (!(lambda >= -1.0 && lambda < 1.0)) throw ValidationError("lambda must lie in [-1, 1)");
  return std::make_shared<FactorizableSoftmaxPolicy>(behavior.scorer(), behavior.slate_size(),
                                                     lambda, 1.0 - std::abs(lambda));
}

namespace {

LinearScorer scorer_from_json(const nlohmann::json& doc) {
  LinearScorer s;
  s.theta = doc.at("theta").get<std::vector<std::vector<double>>>();
  s.bias = doc.at("bias").get<std::vector<double>>();
  return s;
}

}  // namespace

PolicyPtr policy_from_json(const nlohmann::json& doc) {
  try {
    const auto kind = doc.at("kind").get<std::string>();
    const int slate_size = doc.at("slate_size").get<int>();
    if (kind == "uniform") {
      return std::make_shared<UniformPolicy>(doc.at("n_actions").get<int>(), slate_size);
    }
    if (kind == "factorizable_softmax") {
      return std::make_shared<FactorizableSoftmaxPolicy>(scorer_from_json(doc), slate_size,
                                                         doc.value("logit_scale", 1.0),
                                                         doc.value("logit_offset", 0.0));
    }
    if (kind == "plackett_luce") {
      return std::make_shared<PlackettLucePolicy>(scorer_from_json(doc), slate_size);
    }
    throw ValidationError("unknown policy kind: " + kind);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed policy document: ") + e.what());
  }
}

}  // namespace slate_ope
