// Acceptance checks: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "slate_ope/harness.hpp"
#include "slate_ope/regression.hpp"
#include "slate_ope/verify.hpp"

using namespace slate_ope;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

const std::pair<int, int> kGrid[] = {{2, 2}, {3, 2}, {2, 3}};
const double kLambdas[] = {-0.8, -0.4, 0.0, 0.4, 0.8};

TinyInstance grid_instance(int A, int L, RewardStructure st, std::uint64_t seed) {
  TinyInstanceSpec spec;
  spec.n_actions = A;
  spec.slate_size = L;
  spec.structure = st;
  spec.interaction = seed % 2 == 0 ? InteractionKind::kAdditive : InteractionKind::kDecay;
  spec.lambda = kLambdas[seed % 5];
  return make_tiny_instance(spec, 100 + seed);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

Outcome criterion_1() {
  EnvConfig c;
  c.reward_structure = RewardStructure::kCascade;
  Rng rng = make_rng(1);
  const auto env = SyntheticEnv::generate(c, rng);
  auto pi_b = make_behavior_policy(5, 5, 5, rng);
  auto pi_e = make_evaluation_policy(*pi_b, -0.4);
  const auto data = generate_dataset(env, *pi_b, 100, 2);
  const auto src = BehaviorSource::from_policy(pi_b);
  const QModel zero = QModel::zeros(5);
  const auto cdr = cascade_dr_estimate(data, *pi_e, src, zero);
  const auto rips = rips_estimate(data, *pi_e, src);
  double worst = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    worst = std::max(worst, std::abs(cdr.per_record[i] - rips.per_record[i]));
  }
  return {worst <= 1e-12, "max |CDR(Q_hat=0) - RIPS| per record = " + fmt(worst) + " (tol 1e-12)"};
}

Outcome criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checks = 0;
  std::string where;
  auto check = [&](const TinyInstance& inst, double truth, EstimatorId id, const SlotBaseline* b,
                   const std::string& label) {
    const double gap = std::abs(exact_estimator_expectation(inst, id, b) - truth);
    ++checks;
    if (gap > worst) {
      worst = gap;
      where = label;
    }
  };
  for (auto [A, L] : kGrid) {
    for (auto st : {RewardStructure::kStandard, RewardStructure::kCascade, RewardStructure::kIndependence}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto inst = grid_instance(A, L, st, seed);
        const double truth = exact_policy_value(inst);
        // second, independent route to V(pi_e)
        const double synth_truth = true_policy_value(inst.env, *inst.evaluation, inst.contexts).value;
        worst = std::max(worst, std::abs(truth - synth_truth));
        const std::string label = to_string(st) + " |A|=" + std::to_string(A) + " L=" + std::to_string(L);
        check(inst, truth, EstimatorId::kIps, nullptr, "ips " + label);
        if (st == RewardStructure::kStandard) continue;
        check(inst, truth, EstimatorId::kRips, nullptr, "rips " + label);
        if (st == RewardStructure::kIndependence) check(inst, truth, EstimatorId::kIips, nullptr, "iips " + label);
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(A), static_cast<std::uint64_t>(L), 7});
        for (int t = 0; t < 5; ++t) {
          const auto table = random_table(inst, -1.0, 3.0, rng);
          check(inst, truth, EstimatorId::kCascadeDr, &table, "cascade-dr " + label);
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 10.0,
          std::to_string(checks) + " exact expectations, max |E[V_hat] - V| = " + fmt(worst) +
              (where.empty() ? "" : " at " + where) + " (tol 1e-10), " + fmt(secs) + " s (limit 10 s)"};
}

Outcome criterion_3() {
  auto witness = [](RewardStructure st, EstimatorId id) {
    double best = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      TinyInstanceSpec spec;
      spec.n_actions = 3;
      spec.slate_size = 2;
      spec.structure = st;
      spec.lambda = -0.8;
      const auto inst = make_tiny_instance(spec, 500 + seed);
      best = std::max(best, std::abs(exact_estimator_expectation(inst, id) - exact_policy_value(inst)));
    }
    return best;
  };
  const double iips = witness(RewardStructure::kCascade, EstimatorId::kIips);
  const double rips = witness(RewardStructure::kStandard, EstimatorId::kRips);
  return {iips > 1e-4 && rips > 1e-4,
          "|bias| IIPS under cascade = " + fmt(iips) + ", RIPS under standard = " + fmt(rips) +
              " (need > 1e-4)"};
}

Outcome criterion_4() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checks = 0;
  for (auto [A, L] : kGrid) {
    for (auto st : {RewardStructure::kCascade, RewardStructure::kIndependence}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto inst = grid_instance(A, L, st, seed);
        worst = std::max(worst, std::abs(recursive_variance(inst) -
                                         exact_estimator_variance(inst, EstimatorId::kRips)));
        ++checks;
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(A), static_cast<std::uint64_t>(L), 8});
        for (int t = 0; t < 5; ++t) {
          const auto table = random_table(inst, -1.0, 3.0, rng);
          worst = std::max(worst, std::abs(recursive_variance(inst, &table) -
                                           exact_estimator_variance(inst, EstimatorId::kCascadeDr, &table)));
          ++checks;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 30.0,
          std::to_string(checks) + " comparisons, max |recursive - enumerated| = " + fmt(worst) +
              " (tol 1e-10), " + fmt(secs) + " s (limit 30 s)"};
}

Outcome criterion_5() {
  std::size_t tables = 0;
  std::size_t violations = 0;
  double worst_ratio = 1.0;
  for (auto [A, L] : kGrid) {
    for (auto st : {RewardStructure::kCascade, RewardStructure::kIndependence}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto inst = grid_instance(A, L, st, seed);
        const auto tv = true_q_values(inst);
        const double rips = recursive_variance(inst);
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(A), static_cast<std::uint64_t>(L), 9});
        for (int t = 0; t < 5; ++t) {
          const auto table = random_table_within(inst, tv, rng);
          const double v = recursive_variance(inst, &table);
          ++tables;
          if (v > rips + 1e-12) {
            ++violations;
            worst_ratio = std::max(worst_ratio, v / rips);
          }
        }
      }
    }
  }
  std::string detail = std::to_string(violations) + "/" + std::to_string(tables) +
                       " random tables with 0 < Q_hat < 2Q have Var(Cascade-DR) > Var(RIPS)";
  if (violations > 0) {
    detail += " (worst ratio " + fmt(worst_ratio) +
              "); the entrywise bound controls E[w^2 (Q - Q_hat)^2] but not the subtracted "
              "squared mean, e.g. pi_e = pi_b, L = 1, q = 1/2, Q_hat = (1/4, 3/4) gives 5/16 > 1/4";
  }
  return {violations == 0, detail};
}

Outcome criterion_6() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c;
  c.n_values = {250, 1000, 4000};
  c.reward_structures = {RewardStructure::kCascade};
  c.lambdas = {-0.4};
  c.sweep_slate_size = 5;
  c.n_actions = 5;
  c.seeds = ExperimentConfig::default_seeds(500);
  const auto rows = run_experiment(c, SweepMode::kDataSize);
  std::map<std::pair<std::size_t, std::string>, double> mse;
  for (const auto& r : aggregate_mse(rows, {"n"})) {
    mse[{static_cast<std::size_t>(std::stoul(r.group.at("n"))), r.estimator}] = r.mse;
  }
  const double cdr = mse[{1000, "cascade-dr"}];
  const double rips = mse[{1000, "rips"}];
  const double ips = mse[{1000, "ips"}];
  const double iips = mse[{1000, "iips"}];
  const double iips_small = mse[{250, "iips"}];
  const double iips_large = mse[{4000, "iips"}];
  std::map<std::pair<std::string, std::string>, double> by_g;
  for (const auto& r : aggregate_mse(rows, {"interaction", "n"})) {
    if (r.estimator == "iips") by_g[{r.group.at("interaction"), r.group.at("n")}] = r.mse;
  }
  std::string split;
  for (const char* g : {"additive", "decay"}) {
    split += std::string(", ") + g + " " + fmt(by_g[{g, "4000"}] / by_g[{g, "250"}]);
  }
  const double secs = seconds_since(t0);
  const bool ok = cdr < rips && rips < ips && iips > cdr && iips_large >= 0.5 * iips_small && secs < 600.0;
  return {ok, "n=1000 MSE: cascade-dr " + fmt(cdr) + ", rips " + fmt(rips) + ", ips " + fmt(ips) +
                  ", iips " + fmt(iips) + "; iips n=4000/n=250 = " + fmt(iips_large / iips_small) +
                  " (need >= 0.5; by interaction" + split + "); 500 seeds, " + fmt(secs) +
                  " s (limit 600 s)"};
}

Outcome criterion_7() {
  double worst = 0.0;
  for (auto st : {RewardStructure::kStandard, RewardStructure::kCascade}) {
    EnvConfig c;
    c.reward_structure = st;
    c.alpha_kind = AlphaWeights::Kind::kDcg;
    Rng rng = make_rng(7);
    const auto env = SyntheticEnv::generate(c, rng);
    auto pi = make_behavior_policy(5, 5, 5, rng);
    const auto data = generate_dataset(env, *pi, 500, 8);
    const auto src = BehaviorSource::from_policy(pi);
    const auto on = on_policy_estimate(data);
    for (auto id : {EstimatorId::kIps, EstimatorId::kIips, EstimatorId::kRips}) {
      const auto rep = run_estimator(id, data, *pi, src);
      for (std::size_t i = 0; i < data.size(); ++i) {
        worst = std::max(worst, std::abs(rep.per_record[i] - on.per_record[i]));
      }
    }
  }
  return {worst <= 1e-12, "max per-record |estimate - on-policy| = " + fmt(worst) + " (tol 1e-12)"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SLATE_OPE_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_8() {
  const auto dir = std::filesystem::temp_directory_path() / "slate_ope_acceptance";
  std::filesystem::create_directories(dir);
  const auto a = dir / "run_a.csv";
  const auto b = dir / "run_b.csv";
  const auto t0 = std::chrono::steady_clock::now();
  const int ra = run_cli("synth-experiment --sweep n --seeds 50 --out " + a.string());
  const int rb = run_cli("synth-experiment --sweep n --seeds 50 --out " + b.string());
  const double secs = seconds_since(t0);
  const std::string ca = slurp(a);
  const bool identical = ra == 0 && rb == 0 && !ca.empty() && ca == slurp(b);
  std::size_t rows = 0;
  for (char ch : ca) rows += ch == '\n';
  return {identical && secs < 120.0,
          std::string(identical ? "byte-identical" : "different") + " CSVs (" + std::to_string(rows) +
              " lines each), two runs in " + fmt(secs) + " s (limit 120 s)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"Cascade-DR with zero baseline equals RIPS", criterion_1}},
      {2, {"exact unbiasedness on tiny instances", criterion_2}},
      {3, {"bias witnesses for IIPS and RIPS", criterion_3}},
      {4, {"recursive variance equals exact variance", criterion_4}},
      {5, {"variance reduction for 0 < Q_hat < 2Q", criterion_5}},
      {6, {"MSE ordering and IIPS bias floor", criterion_6}},
      {7, {"identical policies reduce to on-policy", criterion_7}},
      {8, {"deterministic synth-experiment output", criterion_8}},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  bool all = true;
  for (const auto& [id, entry] : criteria) {
    if (!selected.empty() && !selected.contains(id)) continue;
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << id << " (" << entry.first
              << "): " << o.detail << std::endl;
    all = all && o.passed;
  }
  return all ? 0 : 1;
}
