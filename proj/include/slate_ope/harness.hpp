#pragma once

// Experiment orchestration: randomized-configuration synthetic runs, MSE
// aggregation, bootstrap evaluation of logged data and CSV output.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "slate_ope/estimators.hpp"
#include "slate_ope/regression.hpp"
#include "slate_ope/synth.hpp"

namespace slate_ope {

enum class SweepMode { kDataSize, kSlateSize, kLambda, kFullRandom };

// Accepts the CLI spellings "n", "slate", "lambda" and "random".
SweepMode parse_sweep_mode(const std::string& name);
std::string to_string(SweepMode mode);

struct ExperimentConfig {
  std::vector<std::size_t> n_values{250, 500, 1000, 2000, 4000};
  std::vector<int> slate_sizes{3, 4, 5, 6, 7};
  std::vector<RewardStructure> reward_structures{
      RewardStructure::kStandard, RewardStructure::kCascade, RewardStructure::kIndependence};
  std::vector<InteractionKind> interactions{InteractionKind::kAdditive, InteractionKind::kDecay};
  std::vector<double> lambdas{-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8};
  int n_actions = 5;
  int dim = 5;
  AlphaWeights::Kind alpha_kind = AlphaWeights::Kind::kUniform;
  double interaction_scale = 1.0;
  // "ips", "iips", "rips", "cascade-dr"; "oracle" reports the ground truth.
  std::vector<std::string> estimators{"ips", "iips", "rips", "cascade-dr"};
  LearnerConfig learner;
  int cross_fit_folds = 0;
  std::vector<std::uint64_t> seeds = default_seeds(1000);
  // Companions held fixed by the sweeps.
  int sweep_slate_size = 5;
  std::size_t sweep_n = 1000;
  GroundTruthMode::Kind ground_truth = GroundTruthMode::Kind::kExact;
  std::size_t truth_contexts = 10000;
  std::size_t truth_samples_per_context = 1000;  // monte carlo only
  int threads = 0;  // 0: SLATE_OPE_THREADS or hardware concurrency

  static std::vector<std::uint64_t> default_seeds(std::size_t count);
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);

struct ResultRow {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  int slate_size = 0;
  RewardStructure reward_structure = RewardStructure::kStandard;
  InteractionKind interaction = InteractionKind::kAdditive;
  double lambda = 0.0;
  std::string estimator;
  double estimate = 0.0;
  double ground_truth = 0.0;
  double squared_error = 0.0;
};

// The configuration a seed draws: one uniform pick from every set.
struct SampledConfig {
  std::size_t n = 0;
  int slate_size = 0;
  RewardStructure reward_structure = RewardStructure::kStandard;
  InteractionKind interaction = InteractionKind::kAdditive;
  double lambda = 0.0;
};

SampledConfig sample_config(const ExperimentConfig& config, std::uint64_t seed);

// Rows of one seed, in grid order then estimator order.
std::vector<ResultRow> run_seed(const ExperimentConfig& config, SweepMode mode, std::uint64_t seed);

// All seeds, ordered by position in config.seeds regardless of scheduling.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config, SweepMode mode,
                                      const std::function<void(std::size_t done)>& progress = {});

int resolve_thread_count(int configured);

struct MseRow {
  std::map<std::string, std::string> group;
  std::string estimator;
  double mse = 0.0;
  std::optional<double> relative_mse;  // MSE / MSE(cascade-dr) in the same group
  std::size_t count = 0;
};

// Keys: any of "n", "L", "reward_structure", "interaction", "lambda".
std::vector<MseRow> aggregate_mse(const std::vector<ResultRow>& rows,
                                  const std::vector<std::string>& group_by, bool relative = true);

struct BootstrapRow {
  std::size_t replicate = 0;
  std::string estimator;
  double estimate = 0.0;
  double ground_truth = 0.0;
  double squared_error = 0.0;
};

std::vector<BootstrapRow> bootstrap_evaluate(const LoggedDataset& data, const Policy& pi_e,
                                             const BehaviorSource& behavior, double ground_truth,
                                             std::size_t n_boot, std::uint64_t seed,
                                             const std::vector<std::string>& estimators,
                                             const LearnerConfig& learner, int cross_fit_folds = 0);

// Every requested estimator on one dataset; Q_hat is fitted once when
// cascade-dr is requested.
std::vector<std::pair<std::string, EstimateReport>> evaluate_dataset(
    const LoggedDataset& data, const Policy& pi_e, const BehaviorSource& behavior,
    const std::vector<std::string>& estimators, const LearnerConfig& learner,
    int cross_fit_folds = 0);

// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
void write_bootstrap_csv(std::ostream& out, const std::vector<BootstrapRow>& rows);
nlohmann::json mse_summary_json(const std::vector<MseRow>& table);

// Grouping used for summaries of each sweep: the swept variable and the
// reward structure.
std::vector<std::string> summary_keys(SweepMode mode);

}  // namespace slate_ope
