#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "slate_ope/policy.hpp"

using namespace slate_ope;

namespace {

LinearScorer scorer_3x2() {
  return LinearScorer{{{0.5, -1.0}, {1.5, 0.2}, {-0.3, 0.7}}, {0.1, -0.4, 0.25}};
}

// All slates of length L over n actions, a_1 varying fastest.
std::vector<Slate> all_slates(int n, int L) {
  std::vector<Slate> out;
  Slate s(static_cast<std::size_t>(L), 0);
  for (;;) {
    out.push_back(s);
    int k = 0;
    while (k < L && ++s[static_cast<std::size_t>(k)] == n) s[static_cast<std::size_t>(k++)] = 0;
    if (k == L) break;
  }
  return out;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("softmax is stable and normalised") {
  const std::vector<double> logits{1000.0, 1001.0, 999.0};
  const auto p = softmax(logits);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
  const double e = std::exp(1.0);
  CHECK(p[1] == doctest::Approx(e / (1.0 + e + 1.0 / e)));
}

TEST_CASE("uniform policy") {
  UniformPolicy pi(4, 3);
  const std::vector<double> x{0.0};
  for (double p : pi.conditional_pmf(x, {})) CHECK(p == 0.25);
  const Slate s{0, 3, 3};
  CHECK(pi.slate_pmf(x, s) == doctest::Approx(1.0 / 64.0));
}

TEST_CASE("factorizable softmax matches its definition") {
  FactorizableSoftmaxPolicy pi(scorer_3x2(), 2, -0.4, 0.6);
  const std::vector<double> x{0.3, -0.2};
  const auto sc = scorer_3x2().scores(x);
  double z = 0.0;
  for (double s : sc) z += std::exp(-0.4 * s + 0.6);
  const auto p = pi.conditional_pmf(x, {});
  for (std::size_t a = 0; a < 3; ++a) CHECK(p[a] == doctest::Approx(std::exp(-0.4 * sc[a] + 0.6) / z));
  const Slate prefix{2};
  CHECK(pi.conditional_pmf(x, prefix) == p);
  double total = 0.0;
  for (const auto& s : all_slates(3, 2)) total += pi.slate_pmf(x, s);
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("Plackett-Luce never repeats items") {
  PlackettLucePolicy pi(scorer_3x2(), 2);
  const std::vector<double> x{1.0, 0.5};
  const Slate dup{1, 1};
  CHECK(pi.slate_pmf(x, dup) == 0.0);
  const Slate prefix{1};
  const auto cond = pi.conditional_pmf(x, prefix);
  CHECK(cond[1] == 0.0);
  CHECK(cond[0] + cond[2] == doctest::Approx(1.0));
  double total = 0.0;
  for (const auto& s : all_slates(3, 2)) total += pi.slate_pmf(x, s);
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("Plackett-Luce exact marginals agree with slate enumeration") {
  PlackettLucePolicy pi(scorer_3x2(), 3);
  const std::vector<double> x{-0.2, 0.9};
  for (int slot = 0; slot < 3; ++slot) {
    std::vector<double> oracle(3, 0.0);
    for (const auto& s : all_slates(3, 3)) oracle[static_cast<std::size_t>(s[slot])] += pi.slate_pmf(x, s);
    const auto m = pi.marginal_with_error(x, slot);
    CHECK(m.exact);
    for (std::size_t a = 0; a < 3; ++a) CHECK(m.probs[a] == doctest::Approx(oracle[a]).epsilon(1e-12));
  }
}

TEST_CASE("Plackett-Luce rejects slates longer than the action set") {
  CHECK_THROWS_AS(PlackettLucePolicy(scorer_3x2(), 4), ValidationError);
}

TEST_CASE("sampled slates follow the slate pmf") {
  PlackettLucePolicy pl(scorer_3x2(), 2);
  FactorizableSoftmaxPolicy fs(scorer_3x2(), 2);
  const std::vector<double> x{0.4, -0.6};
  for (const Policy* pi : {static_cast<const Policy*>(&pl), static_cast<const Policy*>(&fs)}) {
    Rng rng = make_rng(11);
    std::map<Slate, int> counts;
    const int n = 60000;
    for (int i = 0; i < n; ++i) ++counts[pi->sample_slate(x, rng)];
    for (const auto& s : all_slates(3, 2)) {
      const double p = pi->slate_pmf(x, s);
      const double sd = std::sqrt(p * (1 - p) / n);
      CHECK(std::abs(counts[s] / static_cast<double>(n) - p) <= 5 * sd + 1e-12);
    }
  }
}

TEST_CASE("evaluation policy similarity") {
  Rng rng = make_rng(2);
  const auto behavior = make_behavior_policy(5, 5, 3, rng);
  for (const auto& row : behavior->scorer().theta) {
    for (double v : row) CHECK((v >= 0.0 && v < 1.0));
  }
  const std::vector<double> x{0.1, 0.2, -0.3, 1.0, 0.0};
  // lambda = 0 gives the uniform distribution
  for (double p : make_evaluation_policy(*behavior, 0.0)->conditional_pmf(x, {})) {
    CHECK(p == doctest::Approx(0.2));
  }
  const auto e = make_evaluation_policy(*behavior, -0.6);
  CHECK(e->logit_scale() == -0.6);
  CHECK(e->logit_offset() == doctest::Approx(0.4));
  // negative lambda reverses the preference order
  const auto pb = behavior->conditional_pmf(x, {});
  const auto pe = e->conditional_pmf(x, {});
  const auto best_b = std::max_element(pb.begin(), pb.end()) - pb.begin();
  const auto worst_e = std::min_element(pe.begin(), pe.end()) - pe.begin();
  CHECK(best_b == worst_e);
  CHECK_THROWS_AS(make_evaluation_policy(*behavior, 1.0), ValidationError);
  CHECK_THROWS_AS(make_evaluation_policy(*behavior, -1.2), ValidationError);
  CHECK_NOTHROW(make_evaluation_policy(*behavior, -1.0));
}

TEST_CASE("policies round trip through JSON") {
  FactorizableSoftmaxPolicy fs(scorer_3x2(), 2, 0.3, 0.7);
  PlackettLucePolicy pl(scorer_3x2(), 2);
  UniformPolicy un(3, 2);
  const std::vector<double> x{0.25, -1.5};
  for (const Policy* pi : {static_cast<const Policy*>(&fs), static_cast<const Policy*>(&pl),
                           static_cast<const Policy*>(&un)}) {
    const auto back = policy_from_json(pi->to_json());
    CHECK(back->kind() == pi->kind());
    for (const auto& s : all_slates(3, 2)) CHECK(back->slate_pmf(x, s) == pi->slate_pmf(x, s));
  }
  CHECK_THROWS_AS(policy_from_json(nlohmann::json{{"kind", "mystery"}}), ValidationError);
  CHECK_THROWS_AS(policy_from_json(nlohmann::json::array()), ValidationError);
}

TEST_CASE("input validation") {
  FactorizableSoftmaxPolicy pi(scorer_3x2(), 2);
  const std::vector<double> wrong_dim{1.0};
  CHECK_THROWS_AS(pi.conditional_pmf(wrong_dim, {}), ValidationError);
  const std::vector<double> x{0.0, 0.0};
  const Slate too_long{0, 1};
  CHECK_THROWS_AS(pi.conditional_pmf(x, too_long), ValidationError);
  const Slate bad{0, 3};
  CHECK_THROWS_AS(pi.slate_pmf(x, bad), ValidationError);
  CHECK_THROWS_AS(LinearScorer({{1.0}, {1.0, 2.0}}, {0.0, 0.0}).validate(), ValidationError);
}

}
