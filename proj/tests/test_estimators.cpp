#include <cmath>

#include "doctest.h"
#include "slate_ope/estimators.hpp"
#include "slate_ope/synth.hpp"

using namespace slate_ope;

namespace {

// Two hand-worked records, L = 2, |A| = 2, uniform evaluation policy.
LoggedDataset hand_dataset() {
  std::vector<LoggedRecord> recs{
      {{0.0}, {0, 1}, {1.0, 0.0}, {0.25, 0.25}},
      {{0.0}, {1, 1}, {0.0, 1.0}, {0.75, 0.5}},
  };
  return LoggedDataset(std::move(recs), 2, 2, make_alpha_weights(AlphaWeights::Kind::kUniform, 2));
}

// Baseline that depends on the prefix so the expectation term matters.
class PrefixBaseline final : public SlotBaseline {
 public:
  double predict(std::span<const double>, std::span<const int> prefix) const override {
    double v = 0.1 * static_cast<double>(prefix.size());
    for (int a : prefix) v += 0.3 * a;
    return v;
  }
};

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("names") {
  for (auto id : {EstimatorId::kIps, EstimatorId::kIips, EstimatorId::kRips, EstimatorId::kCascadeDr,
                  EstimatorId::kOnPolicy}) {
    CHECK(parse_estimator_id(to_string(id)) == id);
  }
  CHECK(parse_estimator_id("cdr") == EstimatorId::kCascadeDr);
  CHECK_THROWS_AS(parse_estimator_id("pi"), ValidationError);
}

TEST_CASE("hand-worked weights and estimates") {
  const auto data = hand_dataset();
  UniformPolicy pi_e(2, 2);
  const auto src = BehaviorSource::logged();
  const auto w = importance_weights(pi_e, src, data[0]);
  CHECK(w.cumulative == std::vector<double>{2.0, 4.0});
  CHECK(w.slot_marginal == std::vector<double>{2.0, 2.0});

  CHECK(ips_estimate(data, pi_e, src).value == doctest::Approx(7.0 / 3.0));
  CHECK(rips_estimate(data, pi_e, src).value == doctest::Approx(4.0 / 3.0));
  CHECK(iips_estimate(data, pi_e, src).value == doctest::Approx(1.5));
  CHECK(on_policy_estimate(data).value == doctest::Approx(1.0));
  const auto ips = ips_estimate(data, pi_e, src);
  CHECK(ips.per_record[0] == doctest::Approx(4.0));
  CHECK(ips.per_record[1] == doctest::Approx(2.0 / 3.0));
  CHECK(ips.weight_max == doctest::Approx(4.0));
}

TEST_CASE("cascade-dr with a constant baseline") {
  // per record: sum_l w_{1:l}(r_l - c) + w_{1:l-1} c, which averages to 4/3 - 4c/3 here
  const auto data = hand_dataset();
  UniformPolicy pi_e(2, 2);
  const auto src = BehaviorSource::logged();
  for (double c : {0.0, 0.5, 2.0}) {
    ConstantBaseline q(c);
    CHECK(cascade_dr_estimate(data, pi_e, src, q).value == doctest::Approx(4.0 / 3.0 - 4.0 * c / 3.0));
  }
}

TEST_CASE("cascade-dr with a prefix baseline") {
  const auto data = hand_dataset();
  UniformPolicy pi_e(2, 2);
  PrefixBaseline q;
  // record 0, slate (0, 1): Q1(0) = 0.1, E[Q1] = 0.25, Q2(0,1) = 0.5, E[Q2 | 0] = 0.35
  const double r0 = 2.0 * (1.0 - 0.1) + 0.25 + 4.0 * (0.0 - 0.5) + 2.0 * 0.35;
  // record 1, slate (1, 1): Q1(1) = 0.4, Q2(1,1) = 0.8, E[Q2 | 1] = 0.65
  const double w1 = 2.0 / 3.0;
  const double r1 = w1 * (0.0 - 0.4) + 0.25 + w1 * (1.0 - 0.8) + w1 * 0.65;
  const auto rep = cascade_dr_estimate(data, pi_e, BehaviorSource::logged(), q);
  CHECK(rep.per_record[0] == doctest::Approx(r0));
  CHECK(rep.per_record[1] == doctest::Approx(r1));
  const Slate prefix{1};
  CHECK(expected_q_under_policy(q, pi_e, std::vector<double>{0.0}, prefix) == doctest::Approx(0.65));
}

TEST_CASE("zero baseline reduces cascade-dr to rips record by record") {
  EnvConfig c;
  c.slate_size = 4;
  c.n_actions = 4;
  Rng rng = make_rng(1);
  const auto env = SyntheticEnv::generate(c, rng);
  auto pi_b = make_behavior_policy(5, 4, 4, rng);
  auto pi_e = make_evaluation_policy(*pi_b, -0.4);
  const auto data = generate_dataset(env, *pi_b, 200, 3);
  const auto src = BehaviorSource::from_policy(pi_b);
  const auto rips = rips_estimate(data, *pi_e, src);
  const auto cdr = run_estimator(EstimatorId::kCascadeDr, data, *pi_e, src, nullptr);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(cdr.per_record[i] == rips.per_record[i]);
}

TEST_CASE("identical policies make the weighted estimators on-policy") {
  EnvConfig c;
  c.slate_size = 3;
  Rng rng = make_rng(2);
  const auto env = SyntheticEnv::generate(c, rng);
  auto pi_b = make_behavior_policy(5, 5, 3, rng);
  const auto data = generate_dataset(env, *pi_b, 100, 9);
  const auto src = BehaviorSource::from_policy(pi_b);
  const auto on = on_policy_estimate(data);
  for (auto id : {EstimatorId::kIps, EstimatorId::kIips, EstimatorId::kRips}) {
    const auto rep = run_estimator(id, data, *pi_b, src);
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(rep.per_record[i] == doctest::Approx(on.per_record[i]).epsilon(1e-14));
  }
}

TEST_CASE("behavior source modes") {
  LinearScorer scorer{{{0.2}, {-0.5}, {1.0}}, {0.0, 0.3, -0.1}};
  auto pl = std::make_shared<PlackettLucePolicy>(scorer, 2);
  const std::vector<double> x{0.7};
  const Slate s{2, 0};
  const double cond0 = pl->conditional_pmf(x, {})[2];
  const double cond1 = pl->conditional_pmf(x, std::span(s).first(1))[0];
  LoggedDataset data({{x, s, {1.0, 1.0}, {cond0, cond1}}}, 2, 3,
                     make_alpha_weights(AlphaWeights::Kind::kUniform, 2));
  const auto src = BehaviorSource::from_policy(pl);
  CHECK(src.conditional(data[0], 1) == cond1);
  // Plackett-Luce marginals differ from the logged conditionals
  CHECK(src.marginal(data[0], 1) == doctest::Approx(pl->marginal_slot_pmf(x, 1)[0]));
  CHECK(src.marginal(data[0], 1) != doctest::Approx(cond1));

  LoggedDataset bare({{x, s, {1.0, 1.0}, {}}}, 2, 3, make_alpha_weights(AlphaWeights::Kind::kUniform, 2));
  UniformPolicy pi_e(3, 2);
  CHECK_THROWS_AS(ips_estimate(bare, pi_e, BehaviorSource::logged()), ValidationError);
  CHECK(ips_estimate(bare, pi_e, src).value > 0.0);
}

TEST_CASE("zero behavior probability is a support violation") {
  LinearScorer scorer{{{0.0}, {0.0}}, {0.0, 0.0}};
  auto pl = std::make_shared<PlackettLucePolicy>(scorer, 2);
  // a slate repeating an item has zero probability under Plackett-Luce
  LoggedDataset data({{{0.0}, {1, 1}, {1.0, 0.0}, {}}}, 2, 2,
                     make_alpha_weights(AlphaWeights::Kind::kUniform, 2));
  UniformPolicy pi_e(2, 2);
  try {
    ips_estimate(data, pi_e, BehaviorSource::from_policy(pl));
    FAIL("expected a support error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("support") != std::string::npos);
  }
}

TEST_CASE("layout mismatch") {
  const auto data = hand_dataset();
  UniformPolicy wrong(3, 2);
  CHECK_THROWS_AS(ips_estimate(data, wrong, BehaviorSource::logged()), ValidationError);
  UniformPolicy wrong_l(2, 3);
  CHECK_THROWS_AS(rips_estimate(data, wrong_l, BehaviorSource::logged()), ValidationError);
}

}
