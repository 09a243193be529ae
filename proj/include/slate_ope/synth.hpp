#pragma once

// Synthetic slate environment with slot-level click probabilities
//
//   q_l(x, a) = sigmoid( qt(x, a_l) + scale * F(x, a) ),
//   qt(x, a)  = theta_a . x + b_a,
//
// where F sums pairwise interactions G(k, l) over k != l (standard), k < l
// (cascade) or nothing (independence). G is W[a_k][a_l] (additive) or
// -qt(x, a_k) / (|k - l| + 1) (decay).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slate_ope/core.hpp"
#include "slate_ope/policy.hpp"
#include "slate_ope/rng.hpp"

namespace slate_ope {

enum class RewardStructure { kStandard, kCascade, kIndependence };
enum class InteractionKind { kAdditive, kDecay };

RewardStructure parse_reward_structure(const std::string& name);
InteractionKind parse_interaction_kind(const std::string& name);
std::string to_string(RewardStructure s);
std::string to_string(InteractionKind g);

double sigmoid(double z);

struct EnvConfig {
  int dim = 5;
  int n_actions = 5;
  int slate_size = 5;
  AlphaWeights::Kind alpha_kind = AlphaWeights::Kind::kUniform;
  RewardStructure reward_structure = RewardStructure::kCascade;
  InteractionKind interaction = InteractionKind::kAdditive;
  double interaction_scale = 1.0;
};

class SyntheticEnv {
 public:
  SyntheticEnv(int slate_size, AlphaWeights alpha, std::vector<std::vector<double>> base_theta,
               std::vector<double> base_bias, RewardStructure structure,
               InteractionKind interaction, std::vector<std::vector<double>> interaction_matrix,
               double interaction_scale = 1.0);

  // theta, bias ~ N(0, 1); W ~ U[-1, 1] then symmetrised as (W + W^T) / 2.
  static SyntheticEnv generate(const EnvConfig& config, Rng& rng);

  int dim() const { return dim_; }
  int n_actions() const { return static_cast<int>(base_bias_.size()); }
  int slate_size() const { return slate_size_; }
  const AlphaWeights& alpha() const { return alpha_; }
  RewardStructure reward_structure() const { return structure_; }
  InteractionKind interaction() const { return interaction_; }
  double interaction_scale() const { return interaction_scale_; }
  const std::vector<std::vector<double>>& base_theta() const { return base_theta_; }
  const std::vector<double>& base_bias() const { return base_bias_; }
  const std::vector<std::vector<double>>& interaction_matrix() const { return w_; }

  // Same parameters, different slate size / structure / interaction.
  SyntheticEnv with_layout(int slate_size, AlphaWeights alpha, RewardStructure structure,
                           InteractionKind interaction) const;

  double base_reward(std::span<const double> x, int action) const;
  // qt(x, a) for every action.
  std::vector<double> base_rewards(std::span<const double> x) const;

  // F(x, a) contribution at `slot` (0-based), before interaction_scale.
  double interaction_term(std::span<const double> x, std::span<const int> slate, int slot) const;
  double slot_mean_reward(std::span<const double> x, std::span<const int> slate, int slot) const;
  std::vector<double> slot_mean_rewards(std::span<const double> x, std::span<const int> slate) const;

  // Same as above with qt(x, .) precomputed; `slate` may be a prefix of
  // length > slot when the structure is cascade or independence.
  double slot_logit_from_base(std::span<const double> base, std::span<const int> slate,
                              int slot) const;

  RewardVector sample_rewards(std::span<const double> x, std::span<const int> slate,
                              Rng& rng) const;
  std::vector<Context> sample_contexts(std::size_t n, Rng& rng) const;

 private:
  double interaction_from_base(std::span<const double> base, std::span<const int> slate,
                               int slot) const;
  void check_slate(std::span<const int> slate) const;

  int dim_;
  int slate_size_;
  AlphaWeights alpha_;
  std::vector<std::vector<double>> base_theta_;
  std::vector<double> base_bias_;
  RewardStructure structure_;
  InteractionKind interaction_;
  std::vector<std::vector<double>> w_;
  double interaction_scale_;
};

// n records with x ~ N(0, I), a ~ policy(. | x), r_l ~ Bern(q_l(x, a)).
// Record i draws from its own stream derived from (seed, i). Propensities
// hold the per-slot conditionals of `behavior` at the logged slate.
LoggedDataset generate_dataset(const SyntheticEnv& env, const Policy& behavior, std::size_t n,
                               std::uint64_t seed);

struct GroundTruthMode {
  enum class Kind { kExact, kMonteCarlo };
  Kind kind = Kind::kExact;
  std::size_t samples_per_context = 0;  // monte carlo only
  std::uint64_t seed = 0;               // monte carlo only

  static GroundTruthMode exact() { return {}; }
  static GroundTruthMode monte_carlo(std::size_t m, std::uint64_t seed = 0) {
    return {Kind::kMonteCarlo, m, seed};
  }
};

struct PolicyValue {
  double value = 0.0;
  double standard_error = 0.0;  // zero in exact mode
};

// Largest slate count the exact mode will enumerate per context.
inline constexpr double kExactSlateLimit = 1e6;

// Average over `contexts` of E_{a ~ policy}[sum_l alpha_l q_l(x, a)].
PolicyValue true_policy_value(const SyntheticEnv& env, const Policy& policy,
                              std::span<const Context> contexts,
                              GroundTruthMode mode = GroundTruthMode::exact());

// Exact value for a single context.
double exact_slate_value(const SyntheticEnv& env, const Policy& policy, std::span<const double> x);

}  // namespace slate_ope
