#include "slate_ope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

namespace slate_ope {

RewardStructure parse_reward_structure(const std::string& name) {
  if (name == "standard") return RewardStructure::kStandard;
  if (name == "cascade") return RewardStructure::kCascade;
  if (name == "independence") return RewardStructure::kIndependence;
  throw ValidationError("unknown reward structure: " + name);
}

InteractionKind parse_interaction_kind(const std::string& name) {
  if (name == "additive") return InteractionKind::kAdditive;
  if (name == "decay") return InteractionKind::kDecay;
  throw ValidationError("unknown interaction kind: " + name);
}

std::string to_string(RewardStructure s) {
  switch (s) {
    case RewardStructure::kStandard: return "standard";
    case RewardStructure::kCascade: return "cascade";
    case RewardStructure::kIndependence: return "independence";
  }
  return "standard";
}

std::string to_string(InteractionKind g) {
  return g == InteractionKind::kAdditive ? "additive" : "decay";
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

SyntheticEnv::SyntheticEnv(int slate_size, AlphaWeights alpha,
                           std::vector<std::vector<double>> base_theta,
                           std::vector<double> base_bias, RewardStructure structure,
                           InteractionKind interaction,
                           std::vector<std::vector<double>> interaction_matrix,
                           double interaction_scale)
    : dim_(base_theta.empty() ? 0 : static_cast<int>(base_theta.front().size())),
      slate_size_(slate_size),
      alpha_(std::move(alpha)),
      base_theta_(std::move(base_theta)),
      base_bias_(std::move(base_bias)),
      structure_(structure),
      interaction_(interaction),
      w_(std::move(interaction_matrix)),
      interaction_scale_(interaction_scale) {
  if (slate_size_ < 1) throw ValidationError("slate size must be positive");
  if (alpha_.size() != static_cast<std::size_t>(slate_size_)) {
    throw ValidationError("alpha weights must have length L");
  }
  const std::size_t n = base_bias_.size();
  if (n == 0 || base_theta_.size() != n) throw ValidationError("theta/bias size mismatch");
  for (const auto& row : base_theta_) {
    if (row.size() != static_cast<std::size_t>(dim_)) throw ValidationError("ragged theta");
  }
  if (w_.size() != n) throw ValidationError("interaction matrix must be |A| x |A|");
  for (std::size_t i = 0; i < n; ++i) {
    if (w_[i].size() != n) throw ValidationError("interaction matrix must be |A| x |A|");
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(w_[i][j] - w_[j][i]) > 1e-12) {
        throw ValidationError("interaction matrix must be symmetric");
      }
    }
  }
  if (!std::isfinite(interaction_scale_)) throw ValidationError("interaction scale must be finite");
}

SyntheticEnv SyntheticEnv::generate(const EnvConfig& config, Rng& rng) {
  if (config.dim < 1 || config.n_actions < 1) {
    throw ValidationError("environment dimensions must be positive");
  }
  const auto n = static_cast<std::size_t>(config.n_actions);
  std::vector<std::vector<double>> theta(n, std::vector<double>(static_cast<std::size_t>(config.dim)));
  for (auto& row : theta) {
    for (double& v : row) v = standard_normal(rng);
  }
  std::vector<double> bias(n);
  for (double& v : bias) v = standard_normal(rng);
  std::vector<std::vector<double>> raw(n, std::vector<double>(n));
  for (auto& row : raw) {
    for (double& v : row) v = uniform(rng, -1.0, 1.0);
  }
  std::vector<std::vector<double>> w(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) w[i][j] = 0.5 * (raw[i][j] + raw[j][i]);
  }
  return SyntheticEnv(config.slate_size, make_alpha_weights(config.alpha_kind, config.slate_size),
                      std::move(theta), std::move(bias), config.reward_structure,
                      config.interaction, std::move(w), config.interaction_scale);
}

SyntheticEnv SyntheticEnv::with_layout(int slate_size, AlphaWeights alpha,
                                       RewardStructure structure,
                                       InteractionKind interaction) const {
  return SyntheticEnv(slate_size, std::move(alpha), base_theta_, base_bias_, structure,
                      interaction, w_, interaction_scale_);
}

double SyntheticEnv::base_reward(std::span<const double> x, int action) const {
  if (action < 0 || action >= n_actions()) throw ValidationError("action index out of range");
  if (x.size() != static_cast<std::size_t>(dim_)) throw ValidationError("context dimension mismatch");
  const auto& row = base_theta_[static_cast<std::size_t>(action)];
  double s = base_bias_[static_cast<std::size_t>(action)];
  for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * x[j];
  return s;
}

std::vector<double> SyntheticEnv::base_rewards(std::span<const double> x) const {
  std::vector<double> out(base_bias_.size());
  for (int a = 0; a < n_actions(); ++a) out[static_cast<std::size_t>(a)] = base_reward(x, a);
  return out;
}

void SyntheticEnv::check_slate(std::span<const int> slate) const {
  if (slate.size() != static_cast<std::size_t>(slate_size_)) {
    throw ValidationError("slate length != L");
  }
  for (int a : slate) {
    if (a < 0 || a >= n_actions()) throw ValidationError("action index out of range");
  }
}

double SyntheticEnv::interaction_from_base(std::span<const double> base,
                                           std::span<const int> slate, int slot) const {
  if (structure_ == RewardStructure::kIndependence) return 0.0;
  const int upper = structure_ == RewardStructure::kCascade ? slot
                                                            : static_cast<int>(slate.size());
  const int target = slate[static_cast<std::size_t>(slot)];
  double total = 0.0;
  for (int k = 0; k < upper; ++k) {
    if (k == slot) continue;
    const int other = slate[static_cast<std::size_t>(k)];
    if (interaction_ == InteractionKind::kAdditive) {
      total += w_[static_cast<std::size_t>(other)][static_cast<std::size_t>(target)];
    } else {
      total -= base[static_cast<std::size_t>(other)] / (std::abs(k - slot) + 1.0);
    }
  }
  return total;
}

double SyntheticEnv::interaction_term(std::span<const double> x, std::span<const int> slate,
                                      int slot) const {
  check_slate(slate);
  if (slot < 0 || slot >= slate_size_) throw ValidationError("slot out of range");
  const auto base = base_rewards(x);
  return interaction_from_base(base, slate, slot);
}

double SyntheticEnv::slot_logit_from_base(std::span<const double> base,
                                          std::span<const int> slate, int slot) const {
  return base[static_cast<std::size_t>(slate[static_cast<std::size_t>(slot)])] +
         interaction_scale_ * interaction_from_base(base, slate, slot);
}

double SyntheticEnv::slot_mean_reward(std::span<const double> x, std::span<const int> slate,
                                      int slot) const {
  check_slate(slate);
  if (slot < 0 || slot >= slate_size_) throw ValidationError("slot out of range");
  const auto base = base_rewards(x);
  return sigmoid(slot_logit_from_base(base, slate, slot));
}

std::vector<double> SyntheticEnv::slot_mean_rewards(std::span<const double> x,
                                                    std::span<const int> slate) const {
  check_slate(slate);
  const auto base = base_rewards(x);
  std::vector<double> q(static_cast<std::size_t>(slate_size_));
  for (int l = 0; l < slate_size_; ++l) {
    q[static_cast<std::size_t>(l)] = sigmoid(slot_logit_from_base(base, slate, l));
  }
  return q;
}

RewardVector SyntheticEnv::sample_rewards(std::span<const double> x, std::span<const int> slate,
                                          Rng& rng) const {
  const auto q = slot_mean_rewards(x, slate);
  RewardVector r(q.size());
  for (std::size_t l = 0; l < q.size(); ++l) r[l] = bernoulli(rng, q[l]) ? 1.0 : 0.0;
  return r;
}

std::vector<Context> SyntheticEnv::sample_contexts(std::size_t n, Rng& rng) const {
  if (n == 0) throw ValidationError("context count must be positive");
  std::vector<Context> out(n, Context(static_cast<std::size_t>(dim_)));
  for (auto& x : out) {
    for (double& v : x) v = standard_normal(rng);
  }
  return out;
}

LoggedDataset generate_dataset(const SyntheticEnv& env, const Policy& behavior, std::size_t n,
                               std::uint64_t seed) {
  if (n == 0) throw ValidationError("dataset size must be positive");
  if (behavior.slate_size() != env.slate_size() || behavior.n_actions() != env.n_actions()) {
    throw ValidationError("policy layout does not match the environment");
  }
  std::vector<LoggedRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, {i});
    LoggedRecord& rec = records[i];
    rec.context.resize(static_cast<std::size_t>(env.dim()));
    for (double& v : rec.context) v = standard_normal(rng);
    rec.slate = behavior.sample_slate(rec.context, rng);
    rec.rewards = env.sample_rewards(rec.context, rec.slate, rng);
    rec.propensities.resize(rec.slate.size());
    for (std::size_t l = 0; l < rec.slate.size(); ++l) {
      const auto cond = behavior.conditional_pmf(rec.context, std::span(rec.slate).first(l));
      rec.propensities[l] = cond[static_cast<std::size_t>(rec.slate[l])];
    }
  }
  return LoggedDataset(std::move(records), env.slate_size(), env.n_actions(), env.alpha());
}

namespace {

double slate_count(const Policy& policy) {
  const double n = policy.n_actions();
  const int L = policy.slate_size();
  if (policy.factorizable()) return std::pow(n, L);
  double count = 1.0;
  for (int l = 0; l < L; ++l) count *= (n - l);
  return count;
}

// All multisets of size m over the actions, as count vectors with their
// multinomial probability under i.i.d. draws from pmf.
struct Multisets {
  int n_actions = 0;
  std::vector<int> counts;  // row-major, n_actions per multiset
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }

  // (sum_a c_a value[a], probability) for every multiset.
  std::vector<std::pair<double, double>> sums(const std::vector<double>& value) const {
    std::vector<std::pair<double, double>> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
      double s = 0.0;
      const int* c = &counts[i * static_cast<std::size_t>(n_actions)];
      for (int a = 0; a < n_actions; ++a) {
        if (c[a] != 0) s += c[a] * value[static_cast<std::size_t>(a)];
      }
      out[i] = {s, probs[i]};
    }
    return out;
  }
};

Multisets enumerate_multisets(const std::vector<double>& pmf, int m) {
  Multisets out;
  out.n_actions = static_cast<int>(pmf.size());
  std::vector<double> log_fact(static_cast<std::size_t>(m) + 1, 0.0);
  for (int i = 1; i <= m; ++i) log_fact[i] = log_fact[i - 1] + std::log(static_cast<double>(i));
  std::vector<int> current(pmf.size(), 0);
  std::function<void(int, int, double)> rec = [&](int a, int left, double log_p) {
    const double p = pmf[static_cast<std::size_t>(a)];
    if (a == out.n_actions - 1 || left == 0) {
      if (left > 0) {
        if (p == 0.0) return;
        log_p += left * std::log(p) - log_fact[static_cast<std::size_t>(left)];
      }
      current[static_cast<std::size_t>(a)] = left;
      out.counts.insert(out.counts.end(), current.begin(), current.end());
      out.probs.push_back(std::exp(log_fact[static_cast<std::size_t>(m)] + log_p));
      current[static_cast<std::size_t>(a)] = 0;
      return;
    }
    for (int c = 0; c <= left; ++c) {
      if (c > 0 && p == 0.0) break;
      const double lp = c == 0 ? 0.0 : c * std::log(p) - log_fact[static_cast<std::size_t>(c)];
      current[static_cast<std::size_t>(a)] = c;
      rec(a + 1, left - c, log_p + lp);
    }
    current[static_cast<std::size_t>(a)] = 0;
  };
  rec(0, m, 0.0);
  return out;
}

// Every slot of a factorizable policy draws from the same pmf, so the
// interaction sum at slot l only depends on how many times each action
// occupies each group of equally weighted partner slots.
double factorized_slate_value(const SyntheticEnv& env, const std::vector<double>& pmf,
                              const std::vector<double>& base) {
  const int L = env.slate_size();
  const int n_actions = env.n_actions();
  const double scale = env.interaction_scale();
  const auto& w = env.interaction_matrix();
  std::vector<std::optional<Multisets>> by_size(static_cast<std::size_t>(L));
  auto multisets = [&](int m) -> const Multisets& {
    auto& slot = by_size[static_cast<std::size_t>(m)];
    if (!slot) slot = enumerate_multisets(pmf, m);
    return *slot;
  };
  double total = 0.0;
  for (int l = 0; l < L; ++l) {
    std::vector<int> partners;
    if (env.reward_structure() == RewardStructure::kStandard) {
      for (int k = 0; k < L; ++k) {
        if (k != l) partners.push_back(k);
      }
    } else if (env.reward_structure() == RewardStructure::kCascade) {
      for (int k = 0; k < l; ++k) partners.push_back(k);
    }
    // Decay groups partners by distance; its sums do not depend on a_l.
    std::vector<std::pair<double, double>> decay_sums{{0.0, 1.0}};
    if (env.interaction() == InteractionKind::kDecay) {
      std::vector<int> per_distance(static_cast<std::size_t>(L), 0);
      for (int k : partners) ++per_distance[static_cast<std::size_t>(std::abs(k - l))];
      for (int d = 1; d < L; ++d) {
        const int m = per_distance[static_cast<std::size_t>(d)];
        if (m == 0) continue;
        std::vector<double> value(base.size());
        for (std::size_t a = 0; a < base.size(); ++a) value[a] = -base[a] / (d + 1.0);
        const auto group = multisets(m).sums(value);
        std::vector<std::pair<double, double>> next;
        next.reserve(decay_sums.size() * group.size());
        for (const auto& [s, p] : decay_sums) {
          for (const auto& [gs, gp] : group) next.emplace_back(s + gs, p * gp);
        }
        decay_sums = std::move(next);
      }
    }
    double slot_value = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const double pa = pmf[static_cast<std::size_t>(a)];
      if (pa == 0.0) continue;
      const double b = base[static_cast<std::size_t>(a)];
      double expected = 0.0;
      if (env.interaction() == InteractionKind::kAdditive && !partners.empty()) {
        std::vector<double> value(base.size());
        for (std::size_t o = 0; o < base.size(); ++o) value[o] = w[o][static_cast<std::size_t>(a)];
        for (const auto& [s, p] : multisets(static_cast<int>(partners.size())).sums(value)) {
          expected += p * sigmoid(b + scale * s);
        }
      } else {
        for (const auto& [s, p] : decay_sums) expected += p * sigmoid(b + scale * s);
      }
      slot_value += pa * expected;
    }
    total += env.alpha()[static_cast<std::size_t>(l)] * slot_value;
  }
  return total;
}

}  // namespace

double exact_slate_value(const SyntheticEnv& env, const Policy& policy,
                         std::span<const double> x) {
  if (policy.slate_size() != env.slate_size() || policy.n_actions() != env.n_actions()) {
    throw ValidationError("policy layout does not match the environment");
  }
  if (slate_count(policy) > kExactSlateLimit) {
    throw ValidationError("exact policy value requested above the enumeration limit");
  }
  const int L = env.slate_size();
  const int n_actions = env.n_actions();
  const auto base = env.base_rewards(x);
  const AlphaWeights& alpha = env.alpha();
  const bool per_node = env.reward_structure() != RewardStructure::kStandard;
  if (policy.factorizable()) return factorized_slate_value(env, policy.conditional_pmf(x, {}), base);

  Slate slate;
  slate.reserve(static_cast<std::size_t>(L));
  // Cascade and independence: q_l is settled once a_{1:l} is known, so the
  // contribution is added at depth l. Standard: only at full slates.
  std::function<double(double)> descend = [&](double mass) -> double {
    const int depth = static_cast<int>(slate.size());
    const std::vector<double> row = policy.conditional_pmf(x, slate);
    double total = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const double p = row[static_cast<std::size_t>(a)];
      if (p == 0.0) continue;
      slate.push_back(a);
      const double m = mass * p;
      if (per_node) {
        total += m * alpha[static_cast<std::size_t>(depth)] *
                 sigmoid(env.slot_logit_from_base(base, slate, depth));
      }
      if (depth + 1 < L) {
        total += descend(m);
      } else if (!per_node) {
        double v = 0.0;
        for (int l = 0; l < L; ++l) {
          v += alpha[static_cast<std::size_t>(l)] * sigmoid(env.slot_logit_from_base(base, slate, l));
        }
        total += m * v;
      }
      slate.pop_back();
    }
    return total;
  };
  return descend(1.0);
}

PolicyValue true_policy_value(const SyntheticEnv& env, const Policy& policy,
                              std::span<const Context> contexts, GroundTruthMode mode) {
  if (contexts.empty()) throw ValidationError("context sample must not be empty");
  PolicyValue out;
  if (mode.kind == GroundTruthMode::Kind::kExact) {
    double total = 0.0;
    for (const auto& x : contexts) total += exact_slate_value(env, policy, x);
    out.value = total / static_cast<double>(contexts.size());
    return out;
  }
  if (mode.samples_per_context == 0) throw ValidationError("monte carlo mode needs samples");
  Rng rng = make_rng(mode.seed, {0x7472757468});
  const auto m = static_cast<double>(mode.samples_per_context);
  // Per-context sample means are independent; combine their variances.
  double total = 0.0;
  double var_total = 0.0;
  for (const auto& x : contexts) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t s = 0; s < mode.samples_per_context; ++s) {
      const Slate a = policy.sample_slate(x, rng);
      const double v = slate_reward(env.slot_mean_rewards(x, a), env.alpha());
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / m;
    total += mean;
    if (m > 1) var_total += (sum_sq - m * mean * mean) / (m - 1) / m;
  }
  const auto c = static_cast<double>(contexts.size());
  out.value = total / c;
  out.standard_error = std::sqrt(std::max(var_total, 0.0)) / c;
  return out;
}

}  // namespace slate_ope
