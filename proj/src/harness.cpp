#include "slate_ope/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>
#include <tuple>

#include "slate_ope/rng.hpp"

namespace slate_ope {

namespace {

constexpr std::uint64_t kConfigStream = 1;
constexpr std::uint64_t kEnvStream = 2;
constexpr std::uint64_t kPolicyStream = 3;
constexpr std::uint64_t kDataStream = 4;
constexpr std::uint64_t kTruthStream = 5;
constexpr std::uint64_t kBootstrapStream = 6;

const std::string kOracle = "oracle";

template <typename T>
const T& pick(const std::vector<T>& values, Rng& rng) {
  return values[static_cast<std::size_t>(uniform_index(rng, values.size()))];
}

template <typename T>
void require_non_empty(const std::vector<T>& values, const char* name) {
  if (values.empty()) throw ValidationError(std::string(name) + " must not be empty");
}

std::string format_size(std::size_t v) { return std::to_string(v); }

}  // namespace

SweepMode parse_sweep_mode(const std::string& name) {
  if (name == "n") return SweepMode::kDataSize;
  if (name == "slate" || name == "L") return SweepMode::kSlateSize;
  if (name == "lambda") return SweepMode::kLambda;
  if (name == "random") return SweepMode::kFullRandom;
  throw ValidationError("unknown sweep mode: " + name);
}

std::string to_string(SweepMode mode) {
  switch (mode) {
    case SweepMode::kDataSize: return "n";
    case SweepMode::kSlateSize: return "slate";
    case SweepMode::kLambda: return "lambda";
    case SweepMode::kFullRandom: return "random";
  }
  return "n";
}

std::vector<std::uint64_t> ExperimentConfig::default_seeds(std::size_t count) {
  std::vector<std::uint64_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = i;
  return out;
}

void ExperimentConfig::validate() const {
  require_non_empty(n_values, "n_values");
  require_non_empty(slate_sizes, "slate_sizes");
  require_non_empty(reward_structures, "reward_structures");
  require_non_empty(interactions, "interactions");
  require_non_empty(lambdas, "lambdas");
  require_non_empty(estimators, "estimators");
  require_non_empty(seeds, "seeds");
  if (n_actions < 1 || dim < 1) throw ValidationError("n_actions and dim must be positive");
  if (alpha_kind == AlphaWeights::Kind::kCustom) {
    throw ValidationError("experiments support uniform or dcg alpha weights");
  }
  if (!std::isfinite(interaction_scale)) throw ValidationError("interaction_scale must be finite");
  const std::size_t min_n = cross_fit_folds >= 2 ? static_cast<std::size_t>(cross_fit_folds) : 1;
  std::vector<std::size_t> all_n = n_values;
  all_n.push_back(sweep_n);
  for (std::size_t n : all_n) {
    if (n < min_n) throw ValidationError("data size " + format_size(n) + " is too small");
  }
  std::vector<int> all_l = slate_sizes;
  all_l.push_back(sweep_slate_size);
  for (int l : all_l) {
    if (l < 1) throw ValidationError("slate sizes must be positive");
    if (ground_truth == GroundTruthMode::Kind::kExact &&
        std::pow(static_cast<double>(n_actions), l) > kExactSlateLimit) {
      throw ValidationError("exact ground truth needs |A|^L <= 1e6");
    }
  }
  for (double lambda : lambdas) {
    if (!(lambda >= -1.0 && lambda < 1.0)) throw ValidationError("lambda must lie in [-1, 1)");
  }
  std::set<std::string> seen;
  for (const auto& e : estimators) {
    if (e != kOracle) parse_estimator_id(e);
    if (!seen.insert(e).second) throw ValidationError("duplicate estimator: " + e);
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ValidationError("duplicate seeds");
  }
  if (cross_fit_folds == 1 || cross_fit_folds < 0) {
    throw ValidationError("cross_fit_folds must be 0 or at least 2");
  }
  if (learner.max_depth < 0 || learner.min_leaf < 1 || !(learner.ridge_penalty >= 0.0)) {
    throw ValidationError("invalid learner settings");
  }
  if (truth_contexts == 0) throw ValidationError("truth contexts must be positive");
  if (ground_truth == GroundTruthMode::Kind::kMonteCarlo && truth_samples_per_context == 0) {
    throw ValidationError("monte carlo ground truth needs samples per context");
  }
  if (threads < 0) throw ValidationError("threads must be non-negative");
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known{
      "n_values",  "slate_sizes",       "reward_structures", "interactions",
      "lambdas",   "n_actions",         "dim",               "alpha_kind",
      "interaction_scale", "estimators", "learner",          "cross_fit_folds",
      "seeds",     "sweep_slate_size",  "sweep_n",           "ground_truth",
      "threads"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw ValidationError("unknown config field: " + key);
  }
  ExperimentConfig c;
  try {
    if (doc.contains("n_values")) c.n_values = doc["n_values"].get<std::vector<std::size_t>>();
    if (doc.contains("slate_sizes")) c.slate_sizes = doc["slate_sizes"].get<std::vector<int>>();
    if (doc.contains("reward_structures")) {
      c.reward_structures.clear();
      for (const auto& s : doc["reward_structures"]) {
        c.reward_structures.push_back(parse_reward_structure(s.get<std::string>()));
      }
    }
    if (doc.contains("interactions")) {
      c.interactions.clear();
      for (const auto& s : doc["interactions"]) {
        c.interactions.push_back(parse_interaction_kind(s.get<std::string>()));
      }
    }
    if (doc.contains("lambdas")) c.lambdas = doc["lambdas"].get<std::vector<double>>();
    if (doc.contains("n_actions")) c.n_actions = doc["n_actions"].get<int>();
    if (doc.contains("dim")) c.dim = doc["dim"].get<int>();
    if (doc.contains("alpha_kind")) c.alpha_kind = parse_alpha_kind(doc["alpha_kind"].get<std::string>());
    if (doc.contains("interaction_scale")) c.interaction_scale = doc["interaction_scale"].get<double>();
    if (doc.contains("estimators")) c.estimators = doc["estimators"].get<std::vector<std::string>>();
    if (doc.contains("learner")) {
      const auto& l = doc["learner"];
      if (!l.is_object()) throw ValidationError("learner must be an object");
      for (const auto& [key, _] : l.items()) {
        if (key != "kind" && key != "max_depth" && key != "min_leaf" && key != "ridge_penalty") {
          throw ValidationError("unknown learner field: " + key);
        }
      }
      if (l.contains("kind")) c.learner.kind = parse_learner_kind(l["kind"].get<std::string>());
      if (l.contains("max_depth")) c.learner.max_depth = l["max_depth"].get<int>();
      if (l.contains("min_leaf")) c.learner.min_leaf = l["min_leaf"].get<int>();
      if (l.contains("ridge_penalty")) c.learner.ridge_penalty = l["ridge_penalty"].get<double>();
    }
    if (doc.contains("cross_fit_folds")) c.cross_fit_folds = doc["cross_fit_folds"].get<int>();
    if (doc.contains("seeds")) {
      const auto& s = doc["seeds"];
      if (s.is_number_integer()) {
        const auto count = s.get<long long>();
        if (count < 1) throw ValidationError("seed count must be positive");
        c.seeds = ExperimentConfig::default_seeds(static_cast<std::size_t>(count));
      } else {
        c.seeds = s.get<std::vector<std::uint64_t>>();
      }
    }
    if (doc.contains("sweep_slate_size")) c.sweep_slate_size = doc["sweep_slate_size"].get<int>();
    if (doc.contains("sweep_n")) c.sweep_n = doc["sweep_n"].get<std::size_t>();
    if (doc.contains("ground_truth")) {
      const auto& g = doc["ground_truth"];
      if (!g.is_object()) throw ValidationError("ground_truth must be an object");
      for (const auto& [key, _] : g.items()) {
        if (key != "mode" && key != "contexts" && key != "samples_per_context") {
          throw ValidationError("unknown ground_truth field: " + key);
        }
      }
      if (g.contains("mode")) {
        const auto mode = g["mode"].get<std::string>();
        if (mode == "exact") {
          c.ground_truth = GroundTruthMode::Kind::kExact;
        } else if (mode == "monte_carlo") {
          c.ground_truth = GroundTruthMode::Kind::kMonteCarlo;
        } else {
          throw ValidationError("unknown ground truth mode: " + mode);
        }
      }
      if (g.contains("contexts")) c.truth_contexts = g["contexts"].get<std::size_t>();
      if (g.contains("samples_per_context")) {
        c.truth_samples_per_context = g["samples_per_context"].get<std::size_t>();
      }
    }
    if (doc.contains("threads")) c.threads = doc["threads"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json doc;
  doc["n_values"] = c.n_values;
  doc["slate_sizes"] = c.slate_sizes;
  auto& rs = doc["reward_structures"] = nlohmann::json::array();
  for (auto s : c.reward_structures) rs.push_back(to_string(s));
  auto& gs = doc["interactions"] = nlohmann::json::array();
  for (auto g : c.interactions) gs.push_back(to_string(g));
  doc["lambdas"] = c.lambdas;
  doc["n_actions"] = c.n_actions;
  doc["dim"] = c.dim;
  doc["alpha_kind"] = to_string(c.alpha_kind);
  doc["interaction_scale"] = c.interaction_scale;
  doc["estimators"] = c.estimators;
  doc["learner"] = {{"kind", to_string(c.learner.kind)},
                    {"max_depth", c.learner.max_depth},
                    {"min_leaf", c.learner.min_leaf},
                    {"ridge_penalty", c.learner.ridge_penalty}};
  doc["cross_fit_folds"] = c.cross_fit_folds;
  doc["seeds"] = c.seeds;
  doc["sweep_slate_size"] = c.sweep_slate_size;
  doc["sweep_n"] = c.sweep_n;
  doc["ground_truth"] = {
      {"mode", c.ground_truth == GroundTruthMode::Kind::kExact ? "exact" : "monte_carlo"},
      {"contexts", c.truth_contexts},
      {"samples_per_context", c.truth_samples_per_context}};
  doc["threads"] = c.threads;
  return doc;
}

SampledConfig sample_config(const ExperimentConfig& config, std::uint64_t seed) {
  Rng rng = make_rng(seed, {kConfigStream});
  SampledConfig s;
  s.n = pick(config.n_values, rng);
  s.slate_size = pick(config.slate_sizes, rng);
  s.reward_structure = pick(config.reward_structures, rng);
  s.interaction = pick(config.interactions, rng);
  s.lambda = pick(config.lambdas, rng);
  return s;
}

std::vector<std::pair<std::string, EstimateReport>> evaluate_dataset(
    const LoggedDataset& data, const Policy& pi_e, const BehaviorSource& behavior,
    const std::vector<std::string>& estimators, const LearnerConfig& learner,
    int cross_fit_folds) {
  std::vector<EstimatorId> ids;
  bool needs_q = false;
  for (const auto& name : estimators) {
    ids.push_back(parse_estimator_id(name));
    needs_q = needs_q || ids.back() == EstimatorId::kCascadeDr;
  }
  std::optional<QModel> q;
  if (needs_q) {
    const CrossFit cf = cross_fit_folds >= 2 ? CrossFit::k_fold(cross_fit_folds) : CrossFit::none();
    q.emplace(fit_q_model(data, pi_e, behavior, learner, cf));
  }
  std::vector<std::pair<std::string, EstimateReport>> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.emplace_back(to_string(ids[i]),
                     run_estimator(ids[i], data, pi_e, behavior, q ? &*q : nullptr));
  }
  return out;
}

std::vector<ResultRow> run_seed(const ExperimentConfig& config, SweepMode mode,
                                std::uint64_t seed) {
  const SampledConfig sampled = sample_config(config, seed);
  std::vector<SampledConfig> grid;
  switch (mode) {
    case SweepMode::kDataSize:
      for (std::size_t n : config.n_values) {
        SampledConfig c = sampled;
        c.n = n;
        c.slate_size = config.sweep_slate_size;
        grid.push_back(c);
      }
      break;
    case SweepMode::kSlateSize:
      for (int l : config.slate_sizes) {
        SampledConfig c = sampled;
        c.n = config.sweep_n;
        c.slate_size = l;
        grid.push_back(c);
      }
      break;
    case SweepMode::kLambda:
      for (double lambda : config.lambdas) {
        SampledConfig c = sampled;
        c.n = config.sweep_n;
        c.lambda = lambda;
        grid.push_back(c);
      }
      break;
    case SweepMode::kFullRandom:
      grid.push_back(sampled);
      break;
  }

  // Environment and behavior parameters depend on the seed only, so every
  // grid point of a seed shares them.
  EnvConfig env_config;
  env_config.dim = config.dim;
  env_config.n_actions = config.n_actions;
  env_config.slate_size = grid.front().slate_size;
  env_config.alpha_kind = config.alpha_kind;
  env_config.reward_structure = sampled.reward_structure;
  env_config.interaction = sampled.interaction;
  env_config.interaction_scale = config.interaction_scale;
  Rng env_rng = make_rng(seed, {kEnvStream});
  const SyntheticEnv base_env = SyntheticEnv::generate(env_config, env_rng);
  Rng truth_rng = make_rng(seed, {kTruthStream});
  const auto truth_contexts = base_env.sample_contexts(config.truth_contexts, truth_rng);

  struct TruthKey {
    int slate_size;
    double lambda;
    auto operator<=>(const TruthKey&) const = default;
  };
  std::map<TruthKey, double> truth_cache;

  std::vector<ResultRow> rows;
  for (const SampledConfig& c : grid) {
    const SyntheticEnv env = base_env.with_layout(
        c.slate_size, make_alpha_weights(config.alpha_kind, c.slate_size), c.reward_structure,
        c.interaction);
    Rng policy_rng = make_rng(seed, {kPolicyStream});
    const auto behavior = make_behavior_policy(config.dim, config.n_actions, c.slate_size, policy_rng);
    const auto evaluation = make_evaluation_policy(*behavior, c.lambda);

    const TruthKey key{c.slate_size, c.lambda};
    auto it = truth_cache.find(key);
    if (it == truth_cache.end()) {
      const GroundTruthMode gt =
          config.ground_truth == GroundTruthMode::Kind::kExact
              ? GroundTruthMode::exact()
              : GroundTruthMode::monte_carlo(config.truth_samples_per_context,
                                             mix_seed(seed, kTruthStream));
      it = truth_cache.emplace(key, true_policy_value(env, *evaluation, truth_contexts, gt).value)
               .first;
    }
    const double truth = it->second;

    const std::uint64_t data_seed =
        mix_seed(mix_seed(mix_seed(seed, kDataStream), c.n), static_cast<std::uint64_t>(c.slate_size));
    const LoggedDataset data = generate_dataset(env, *behavior, c.n, data_seed);
    const BehaviorSource source = BehaviorSource::from_policy(behavior);

    std::vector<std::string> names;
    for (const auto& e : config.estimators) {
      if (e != kOracle) names.push_back(e);
    }
    const auto reports =
        evaluate_dataset(data, *evaluation, source, names, config.learner, config.cross_fit_folds);
    std::size_t next = 0;
    for (const auto& e : config.estimators) {
      ResultRow row;
      row.seed = seed;
      row.n = c.n;
      row.slate_size = c.slate_size;
      row.reward_structure = c.reward_structure;
      row.interaction = c.interaction;
      row.lambda = c.lambda;
      row.ground_truth = truth;
      if (e == kOracle) {
        row.estimator = kOracle;
        row.estimate = truth;
      } else {
        row.estimator = reports[next].first;
        row.estimate = reports[next].second.value;
        ++next;
      }
      const double err = truth - row.estimate;
      row.squared_error = err * err;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

int resolve_thread_count(int configured) {
  if (const char* env = std::getenv("SLATE_OPE_THREADS")) {
    int value = 0;
    const std::string_view text(env);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || value < 1) {
      throw ValidationError("SLATE_OPE_THREADS must be a positive integer");
    }
    return value;
  }
  if (configured > 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config, SweepMode mode,
                                      const std::function<void(std::size_t)>& progress) {
  config.validate();
  const std::size_t count = config.seeds.size();
  const int workers =
      std::max(1, std::min(resolve_thread_count(config.threads), static_cast<int>(count)));
  std::vector<std::vector<ResultRow>> per_seed(count);
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mutex;
  std::exception_ptr failure;

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      {
        std::lock_guard lock(mutex);
        if (failure) return;
      }
      try {
        per_seed[i] = run_seed(config, mode, config.seeds[i]);
        std::lock_guard lock(mutex);
        ++done;
        if (progress) progress(done);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<ResultRow> rows;
  for (auto& block : per_seed) {
    rows.insert(rows.end(), std::make_move_iterator(block.begin()),
                std::make_move_iterator(block.end()));
  }
  return rows;
}

namespace {

// Group keys sort numerically where the column is numeric.
struct GroupValue {
  double number = 0.0;
  std::string text;
  auto operator<=>(const GroupValue&) const = default;
};

GroupValue group_value(const ResultRow& row, const std::string& key) {
  if (key == "n") return {static_cast<double>(row.n), format_size(row.n)};
  if (key == "L") return {static_cast<double>(row.slate_size), std::to_string(row.slate_size)};
  if (key == "lambda") return {row.lambda, format_double(row.lambda)};
  if (key == "reward_structure") return {0.0, to_string(row.reward_structure)};
  if (key == "interaction") return {0.0, to_string(row.interaction)};
  throw ValidationError("unknown group key: " + key);
}

}  // namespace

std::vector<MseRow> aggregate_mse(const std::vector<ResultRow>& rows,
                                  const std::vector<std::string>& group_by, bool relative) {
  if (rows.empty()) throw ValidationError("no result rows to aggregate");
  std::vector<std::string> estimator_order;
  for (const auto& row : rows) {
    if (std::find(estimator_order.begin(), estimator_order.end(), row.estimator) ==
        estimator_order.end()) {
      estimator_order.push_back(row.estimator);
    }
  }
  using Key = std::vector<GroupValue>;
  struct Acc {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::map<Key, std::map<std::string, Acc>> groups;
  for (const auto& row : rows) {
    Key key;
    for (const auto& k : group_by) key.push_back(group_value(row, k));
    Acc& acc = groups[key][row.estimator];
    acc.sum += row.squared_error;
    ++acc.count;
  }
  const std::string cdr = to_string(EstimatorId::kCascadeDr);
  std::vector<MseRow> out;
  for (const auto& [key, by_estimator] : groups) {
    std::optional<double> cdr_mse;
    if (auto it = by_estimator.find(cdr); it != by_estimator.end()) {
      cdr_mse = it->second.sum / static_cast<double>(it->second.count);
    } else if (relative) {
      throw ValidationError("group without cascade-dr rows; relative MSE is undefined");
    }
    for (const auto& name : estimator_order) {
      auto it = by_estimator.find(name);
      if (it == by_estimator.end()) continue;
      MseRow r;
      for (std::size_t k = 0; k < group_by.size(); ++k) r.group[group_by[k]] = key[k].text;
      r.estimator = name;
      r.count = it->second.count;
      r.mse = it->second.sum / static_cast<double>(r.count);
      if (relative) r.relative_mse = name == cdr ? 1.0 : r.mse / *cdr_mse;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<BootstrapRow> bootstrap_evaluate(const LoggedDataset& data, const Policy& pi_e,
                                             const BehaviorSource& behavior, double ground_truth,
                                             std::size_t n_boot, std::uint64_t seed,
                                             const std::vector<std::string>& estimators,
                                             const LearnerConfig& learner, int cross_fit_folds) {
  if (data.size() == 0) throw ValidationError("bootstrap needs a non-empty dataset");
  if (n_boot == 0) throw ValidationError("n_boot must be positive");
  if (estimators.empty()) throw ValidationError("no estimators requested");
  if (!std::isfinite(ground_truth)) throw ValidationError("ground truth must be finite");
  std::vector<BootstrapRow> out;
  for (std::size_t b = 0; b < n_boot; ++b) {
    Rng rng = make_rng(seed, {kBootstrapStream, b});
    std::vector<std::size_t> idx(data.size());
    for (auto& i : idx) i = static_cast<std::size_t>(uniform_index(rng, data.size()));
    const LoggedDataset sample = data.subset(idx);
    for (auto& [name, report] :
         evaluate_dataset(sample, pi_e, behavior, estimators, learner, cross_fit_folds)) {
      BootstrapRow row;
      row.replicate = b;
      row.estimator = name;
      row.estimate = report.value;
      row.ground_truth = ground_truth;
      const double err = ground_truth - report.value;
      row.squared_error = err * err;
      out.push_back(std::move(row));
    }
  }
  return out;
}

std::string format_double(double value) {
  if (value == 0.0) return "0";  // also folds -0
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "seed,n,L,reward_structure,interaction,lambda,estimator,estimate,ground_truth,"
         "squared_error\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << r.n << ',' << r.slate_size << ',' << to_string(r.reward_structure)
        << ',' << to_string(r.interaction) << ',' << format_double(r.lambda) << ','
        << r.estimator << ',' << format_double(r.estimate) << ','
        << format_double(r.ground_truth) << ',' << format_double(r.squared_error) << '\n';
  }
}

void write_bootstrap_csv(std::ostream& out, const std::vector<BootstrapRow>& rows) {
  out << "replicate,estimator,estimate,ground_truth,squared_error\n";
  for (const auto& r : rows) {
    out << r.replicate << ',' << r.estimator << ',' << format_double(r.estimate) << ','
        << format_double(r.ground_truth) << ',' << format_double(r.squared_error) << '\n';
  }
}

nlohmann::json mse_summary_json(const std::vector<MseRow>& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table) {
    nlohmann::json item;
    item["group"] = r.group;
    item["estimator"] = r.estimator;
    item["mse"] = r.mse;
    item["relative_mse"] = r.relative_mse ? nlohmann::json(*r.relative_mse) : nlohmann::json();
    item["count"] = r.count;
    rows.push_back(std::move(item));
  }
  return {{"rows", rows}};
}

std::vector<std::string> summary_keys(SweepMode mode) {
  switch (mode) {
    case SweepMode::kDataSize: return {"reward_structure", "n"};
    case SweepMode::kSlateSize: return {"reward_structure", "L"};
    case SweepMode::kLambda: return {"reward_structure", "lambda"};
    case SweepMode::kFullRandom: return {"reward_structure"};
  }
  return {"reward_structure"};
}

}  // namespace slate_ope
