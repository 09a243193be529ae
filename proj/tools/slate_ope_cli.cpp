// slate-ope: command line front end for the experiment harness.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "slate_ope/dataset_io.hpp"
#include "slate_ope/harness.hpp"
#include "slate_ope/verify.hpp"

namespace {

using namespace slate_ope;

constexpr int kValidationExit = 1;
constexpr int kIoExit = 2;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw ValidationError("empty estimator list");
  return out;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

void close_output(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw IoError("failed writing " + path);
}

BehaviorSource behavior_source(const std::string& behavior_path) {
  if (behavior_path.empty()) return BehaviorSource::logged();
  return BehaviorSource::from_policy(load_policy(behavior_path));
}

LearnerConfig learner_from(const std::string& kind) {
  LearnerConfig config;
  config.kind = parse_learner_kind(kind);
  return config;
}

struct ExperimentArgs {
  std::string sweep = "n";
  int seeds = 0;
  std::string config;
  std::string out;
  bool progress = false;
};

void run_synth_experiment(const ExperimentArgs& args) {
  ExperimentConfig config;
  if (!args.config.empty()) config = config_from_json(load_json_file(args.config));
  if (args.seeds > 0) config.seeds = ExperimentConfig::default_seeds(static_cast<std::size_t>(args.seeds));
  const SweepMode mode = parse_sweep_mode(args.sweep);
  config.validate();

  std::function<void(std::size_t)> progress;
  if (args.progress) {
    const std::size_t total = config.seeds.size();
    progress = [total](std::size_t done) {
      std::cerr << "\r" << done << "/" << total << " seeds" << std::flush;
      if (done == total) std::cerr << "\n";
    };
  }
  const auto rows = run_experiment(config, mode, progress);

  auto out = open_output(args.out);
  write_results_csv(out, rows);
  close_output(out, args.out);

  const std::string summary_path = args.out + ".summary.json";
  nlohmann::json summary = mse_summary_json(aggregate_mse(rows, summary_keys(mode), true));
  summary["sweep"] = to_string(mode);
  summary["group_by"] = summary_keys(mode);
  auto sout = open_output(summary_path);
  sout << summary.dump(2) << '\n';
  close_output(sout, summary_path);
}

struct EvaluateArgs {
  std::string dataset;
  std::string policy;
  std::string behavior;
  std::string estimators = "ips,iips,rips,cascade-dr";
  std::string learner = "tree";
  int folds = 0;
};

void run_evaluate(const EvaluateArgs& args) {
  const LoggedDataset data = load_dataset(args.dataset);
  const PolicyPtr pi_e = load_policy(args.policy);
  const auto reports = evaluate_dataset(data, *pi_e, behavior_source(args.behavior),
                                        split_list(args.estimators), learner_from(args.learner),
                                        args.folds);
  std::cout << "estimator,estimate,weight_max,weight_mean\n";
  for (const auto& [name, report] : reports) {
    std::cout << name << ',' << format_double(report.value) << ','
              << format_double(report.weight_max) << ',' << format_double(report.weight_mean)
              << '\n';
  }
}

struct BootstrapArgs {
  std::string dataset_a;
  std::string dataset_b;
  std::string policy;
  std::string behavior;
  std::string estimators = "ips,iips,rips,cascade-dr";
  std::string learner = "tree";
  int folds = 0;
  std::size_t n_boot = 20;
  std::uint64_t seed = 0;
  std::string out;
};

void run_bootstrap(const BootstrapArgs& args) {
  const LoggedDataset a = load_dataset(args.dataset_a);
  const LoggedDataset b = load_dataset(args.dataset_b);
  const PolicyPtr pi_e = load_policy(args.policy);
  // Dataset B was collected by the evaluation policy itself; its mean
  // slate reward is the reference value.
  const double truth = on_policy_estimate(b).value;
  const auto rows = bootstrap_evaluate(a, *pi_e, behavior_source(args.behavior), truth,
                                       args.n_boot, args.seed, split_list(args.estimators),
                                       learner_from(args.learner), args.folds);
  auto out = open_output(args.out);
  write_bootstrap_csv(out, rows);
  close_output(out, args.out);
}

int run_verify() {
  bool all = true;
  for (const auto& check : run_oracle_suite()) {
    std::cout << (check.passed ? "PASS " : "FAIL ") << check.name;
    if (!check.detail.empty()) std::cout << ": " << check.detail;
    std::cout << '\n';
    all = all && check.passed;
  }
  return all ? 0 : kValidationExit;
}

struct GenerateArgs {
  std::size_t n = 1000;
  int slate_size = 5;
  int n_actions = 5;
  int dim = 5;
  std::string structure = "cascade";
  std::string interaction = "additive";
  std::string alpha = "uniform";
  double lambda = -0.4;
  std::uint64_t seed = 0;
  std::string dataset;
  std::string on_policy_dataset;
  std::string policy;
  std::string behavior;
  std::size_t truth_contexts = 0;
};

void run_generate(const GenerateArgs& args) {
  EnvConfig env_config;
  env_config.dim = args.dim;
  env_config.n_actions = args.n_actions;
  env_config.slate_size = args.slate_size;
  env_config.alpha_kind = parse_alpha_kind(args.alpha);
  env_config.reward_structure = parse_reward_structure(args.structure);
  env_config.interaction = parse_interaction_kind(args.interaction);
  Rng env_rng = make_rng(args.seed, {1});
  const SyntheticEnv env = SyntheticEnv::generate(env_config, env_rng);
  Rng policy_rng = make_rng(args.seed, {2});
  const auto behavior = make_behavior_policy(args.dim, args.n_actions, args.slate_size, policy_rng);
  const auto evaluation = make_evaluation_policy(*behavior, args.lambda);

  save_dataset(generate_dataset(env, *behavior, args.n, mix_seed(args.seed, 3)), args.dataset);
  if (!args.on_policy_dataset.empty()) {
    save_dataset(generate_dataset(env, *evaluation, args.n, mix_seed(args.seed, 4)),
                 args.on_policy_dataset);
  }
  if (!args.policy.empty()) save_policy(*evaluation, args.policy);
  if (!args.behavior.empty()) save_policy(*behavior, args.behavior);
  if (args.truth_contexts > 0) {
    Rng truth_rng = make_rng(args.seed, {5});
    const auto contexts = env.sample_contexts(args.truth_contexts, truth_rng);
    std::cout << "policy_value," << format_double(true_policy_value(env, *evaluation, contexts).value)
              << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Off-policy evaluation for slate bandit policies"};
  app.require_subcommand(1);

  ExperimentArgs exp;
  auto* synth = app.add_subcommand("synth-experiment", "Run a synthetic experiment sweep");
  synth->add_option("--sweep", exp.sweep, "n, slate, lambda or random")
      ->check(CLI::IsMember({"n", "slate", "lambda", "random"}));
  synth->add_option("--seeds", exp.seeds, "Use seeds 0..N-1")->check(CLI::PositiveNumber);
  synth->add_option("--config", exp.config, "Experiment config (JSON)");
  synth->add_option("--out", exp.out, "Output CSV")->required();
  synth->add_flag("--progress", exp.progress, "Report progress on stderr");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Estimate a policy value from logged data");
  evaluate->add_option("--dataset", ev.dataset, "Logged dataset (JSON lines)")->required();
  evaluate->add_option("--policy", ev.policy, "Evaluation policy (JSON)")->required();
  evaluate->add_option("--behavior-policy", ev.behavior,
                       "Behavior policy (JSON); defaults to logged propensities");
  evaluate->add_option("--estimators", ev.estimators, "Comma-separated estimator names");
  evaluate->add_option("--q-learner", ev.learner, "tree or ridge")
      ->check(CLI::IsMember({"tree", "ridge"}));
  evaluate->add_option("--cross-fit", ev.folds, "Cross-fitting folds (0 = none)");

  BootstrapArgs bs;
  auto* bootstrap = app.add_subcommand("bootstrap", "Bootstrap squared errors against on-policy data");
  bootstrap->add_option("--dataset-a", bs.dataset_a, "Data logged by the behavior policy")->required();
  bootstrap->add_option("--dataset-b", bs.dataset_b, "Data logged by the evaluation policy")->required();
  bootstrap->add_option("--policy", bs.policy, "Evaluation policy (JSON)")->required();
  bootstrap->add_option("--behavior-policy", bs.behavior, "Behavior policy (JSON)");
  bootstrap->add_option("--estimators", bs.estimators, "Comma-separated estimator names");
  bootstrap->add_option("--q-learner", bs.learner, "tree or ridge")
      ->check(CLI::IsMember({"tree", "ridge"}));
  bootstrap->add_option("--cross-fit", bs.folds, "Cross-fitting folds (0 = none)");
  bootstrap->add_option("--n-boot", bs.n_boot, "Bootstrap replicates")->check(CLI::PositiveNumber);
  bootstrap->add_option("--seed", bs.seed, "Resampling seed");
  bootstrap->add_option("--out", bs.out, "Output CSV")->required();

  auto* verify = app.add_subcommand("verify", "Run the exact oracle checks");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset and policies");
  generate->add_option("--n", gen.n, "Records")->check(CLI::PositiveNumber);
  generate->add_option("--slate-size", gen.slate_size, "Slots per slate")->check(CLI::PositiveNumber);
  generate->add_option("--n-actions", gen.n_actions, "Candidate actions")->check(CLI::PositiveNumber);
  generate->add_option("--dim", gen.dim, "Context dimension")->check(CLI::PositiveNumber);
  generate->add_option("--reward-structure", gen.structure, "standard, cascade or independence");
  generate->add_option("--interaction", gen.interaction, "additive or decay");
  generate->add_option("--alpha", gen.alpha, "uniform or dcg");
  generate->add_option("--lambda", gen.lambda, "Evaluation policy similarity in [-1, 1)");
  generate->add_option("--seed", gen.seed, "Seed");
  generate->add_option("--dataset", gen.dataset, "Output dataset logged by the behavior policy")
      ->required();
  generate->add_option("--on-policy-dataset", gen.on_policy_dataset,
                       "Output dataset logged by the evaluation policy");
  generate->add_option("--policy", gen.policy, "Output evaluation policy");
  generate->add_option("--behavior-policy", gen.behavior, "Output behavior policy");
  generate->add_option("--truth-contexts", gen.truth_contexts,
                       "Print the exact evaluation policy value over this many contexts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationExit;
  }

  try {
    if (*synth) run_synth_experiment(exp);
    if (*evaluate) run_evaluate(ev);
    if (*bootstrap) run_bootstrap(bs);
    if (*verify) return run_verify();
    if (*generate) run_generate(gen);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoExit;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationExit;
  }
  return 0;
}
