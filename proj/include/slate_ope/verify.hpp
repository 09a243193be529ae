#pragma once

// Exact oracles for small instances. Everything here enumerates the full
// outcome space (slates x binary reward vectors) instead of sampling, so
// estimator moments and the recursive variance formulas can be compared to
// machine precision.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "slate_ope/estimators.hpp"
#include "slate_ope/policy.hpp"
#include "slate_ope/synth.hpp"

namespace slate_ope {

// |A|^L * 2^L outcomes per context at most.
inline constexpr double kOracleOutcomeLimit = 1048576.0;  // 2^20

struct TinyInstance {
  SyntheticEnv env;
  std::vector<Context> contexts;
  PolicyPtr behavior;
  PolicyPtr evaluation;

  void validate() const;
};

struct TinyInstanceSpec {
  int n_actions = 2;
  int slate_size = 2;
  int dim = 3;
  int n_contexts = 3;
  RewardStructure structure = RewardStructure::kCascade;
  InteractionKind interaction = InteractionKind::kAdditive;
  double lambda = -0.4;
  AlphaWeights::Kind alpha_kind = AlphaWeights::Kind::kUniform;
  double interaction_scale = 1.0;
};

// Random environment, random behavior policy and lambda evaluation policy,
// all drawn from `seed`.
TinyInstance make_tiny_instance(const TinyInstanceSpec& spec, std::uint64_t seed);

// Prefix tables indexed by (context, a_{1:l}); prefixes are encoded in base
// |A| with a_1 as the least significant digit.
class TrueValues {
 public:
  TrueValues(int n_actions, int slate_size, std::size_t n_contexts);

  // q_l(x, a_{1:l}) with l = prefix.size() >= 1.
  double q(std::size_t context, std::span<const int> prefix) const;
  // Q_l(x, a_{1:l}) = alpha_l q_l + V^{L-l}(x, a_{1:l}).
  double big_q(std::size_t context, std::span<const int> prefix) const;
  // Expected remaining reward under pi_e after a_{1:m}: V^{L-m}(x, a_{1:m}).
  double tail(std::size_t context, std::span<const int> prefix) const;
  // Average over contexts of V^L(x).
  double policy_value() const { return policy_value_; }

  int n_actions() const { return n_actions_; }
  int slate_size() const { return slate_size_; }
  std::size_t prefix_count(int length) const;

 private:
  friend TrueValues true_q_values(const TinyInstance&);
  std::size_t code(std::span<const int> prefix) const;

  int n_actions_;
  int slate_size_;
  std::vector<std::vector<std::vector<double>>> q_;     // [context][length][code]
  std::vector<std::vector<std::vector<double>>> big_q_;
  std::vector<std::vector<std::vector<double>>> tail_;  // length 0..L
  double policy_value_ = 0.0;
};

// Backward dynamic program over prefixes. Requires a cascade or
// independence structure, where q_l depends on a_{1:l} only.
TrueValues true_q_values(const TinyInstance& instance);

// Explicit lookup table Q_hat_l(x, a_{1:l}) keyed by the instance contexts.
class TableBaseline final : public SlotBaseline {
 public:
  TableBaseline(std::vector<Context> contexts, int n_actions, int slate_size);

  double predict(std::span<const double> x, std::span<const int> prefix) const override;
  std::optional<int> slate_size() const override { return slate_size_; }

  void set(std::size_t context, std::span<const int> prefix, double value);
  double get(std::size_t context, std::span<const int> prefix) const;

 private:
  std::size_t context_index(std::span<const double> x) const;
  std::size_t code(std::span<const int> prefix) const;

  std::vector<Context> contexts_;
  int n_actions_;
  int slate_size_;
  std::vector<std::vector<std::vector<double>>> table_;  // [context][length-1][code]
};

// Entries i.i.d. uniform on [lo, hi).
TableBaseline random_table(const TinyInstance& instance, double lo, double hi, Rng& rng);
// Q_hat = u * Q with u i.i.d. uniform on the open interval (0, 2).
TableBaseline random_table_within(const TinyInstance& instance, const TrueValues& truth, Rng& rng);
// Q_hat = c * Q with one c uniform on (0, 2) per (context, slot).
TableBaseline random_table_scaled(const TinyInstance& instance, const TrueValues& truth, Rng& rng);
// Q_hat = Q exactly.
TableBaseline exact_table(const TinyInstance& instance, const TrueValues& truth);

struct ExactMoments {
  double mean = 0.0;      // average over contexts of E[V_hat | x]
  double variance = 0.0;  // average over contexts of Var[V_hat | x]
};

// Single-record (n = 1) estimator moments by enumerating every slate under
// pi_b and every binary reward vector.
ExactMoments exact_estimator_moments(const TinyInstance& instance, EstimatorId id,
                                     const SlotBaseline* baseline = nullptr);
double exact_estimator_expectation(const TinyInstance& instance, EstimatorId id,
                                   const SlotBaseline* baseline = nullptr);
double exact_estimator_variance(const TinyInstance& instance, EstimatorId id,
                                const SlotBaseline* baseline = nullptr);

// Exact V(pi_e) averaged over the instance contexts (any structure).
double exact_policy_value(const TinyInstance& instance);

// Bottom-up evaluation of the conditional-variance recursion for
// Cascade-DR (RIPS when baseline is null). Cascade or independence only.
double recursive_variance(const TinyInstance& instance, const SlotBaseline* baseline = nullptr);

struct MonteCarloMoments {
  double mean = 0.0;
  double variance = 0.0;
  double mean_standard_error = 0.0;
  double variance_standard_error = 0.0;
};

// Moments of the estimator over `replications` datasets of size n drawn
// from the instance (contexts uniformly from the instance list).
MonteCarloMoments monte_carlo_moments(const TinyInstance& instance, EstimatorId id,
                                      const SlotBaseline* baseline, std::size_t n,
                                      std::size_t replications, std::uint64_t seed);

struct OracleCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

// The default oracle suite behind `slate-ope verify`.
std::vector<OracleCheck> run_oracle_suite();

}  // namespace slate_ope
