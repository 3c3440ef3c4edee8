#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "csi/env.hpp"
#include "oracles.hpp"

using namespace csi;

namespace {

Environment with_weights(std::vector<double> w) {
  return Environment(0, {}, std::vector<double>(kNumContexts, 0.0), std::move(w));
}

}  // namespace

TEST_CASE("generate_environment is deterministic per seed") {
  const Environment a = generate_environment(0);
  const Environment b = generate_environment(0);
  CHECK(a.oracle_weights() == b.oracle_weights());
  CHECK(a.context_logits() == b.context_logits());

  const Environment c = generate_environment(1);
  CHECK(a.oracle_weights() != c.oracle_weights());
}

TEST_CASE("reward probabilities lie strictly inside (0,1)") {
  const Environment env = generate_environment(42);
  for (int x = 0; x < kNumContexts; ++x) {
    for (int a = 0; a < kNumActions; ++a) {
      const double p = true_reward_prob(env, Context(x), Action(a));
      REQUIRE(p > 0.0);
      REQUIRE(p < 1.0);
    }
  }
}

TEST_CASE("context probabilities sum to one") {
  const Environment env = generate_environment(3);
  double s = 0.0;
  for (double p : env.context_probs()) s += p;
  CHECK(std::abs(s - 1.0) < 1e-12);
}

TEST_CASE("true_reward_prob matches an independent dot product") {
  const Environment env = generate_environment(42);
  CHECK(true_reward_prob(env, Context::parse("0000000"), Action::parse("00000")) ==
        doctest::Approx(testing::ref_sigmoid(env.oracle_weights().back())).epsilon(1e-15));
  for (int x = 0; x < kNumContexts; x += 5) {
    for (int a = 0; a < kNumActions; a += 3) {
      const double expected = testing::ref_sigmoid(testing::ref_oracle_logit(env, x, a));
      CHECK(std::abs(true_reward_prob(env, Context(x), Action(a)) - expected) < 1e-14);
    }
  }
}

TEST_CASE("true_reward_prob saturation and zero weights") {
  const Environment zero = with_weights(std::vector<double>(kOracleDim, 0.0));
  CHECK(true_reward_prob(zero, Context(17), Action(9)) == 0.5);

  std::vector<double> w(kOracleDim, 0.0);
  w.back() = 50.0;
  const Environment high = with_weights(w);
  CHECK(std::abs(true_reward_prob(high, Context(5), Action(2)) - 1.0) < 1e-15);
}

TEST_CASE("inert context bits have zero oracle coefficients") {
  EnvConfig cfg;
  cfg.inert_context_bits[1] = true;
  const Environment env = generate_environment(9, cfg);
  for (int x = 0; x < kNumContexts; ++x) {
    const Context flipped(x ^ 0b10);
    for (int a = 0; a < kNumActions; ++a) {
      CHECK(env.reward_prob(Context(x), Action(a)) == env.reward_prob(flipped, Action(a)));
    }
  }
}

TEST_CASE("centered environments have mean logit equal to the bias draw") {
  EnvConfig raw_cfg;
  raw_cfg.center_logits = false;
  constexpr int bias = kOracleDim - 1;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const Environment centered = generate_environment(seed);
    const Environment raw = generate_environment(seed, raw_cfg);
    double mean = 0.0;
    for (const auto& row : centered.oracle_logits())
      for (double v : row) mean += v;
    mean /= kNumContexts * kNumActions;
    CHECK(std::abs(mean - raw.oracle_weights()[bias]) < 1e-9);
    for (int k = 0; k < bias; ++k)
      CHECK(raw.oracle_weights()[k] == centered.oracle_weights()[k]);
  }
}

TEST_CASE("invalid environment configs are rejected") {
  EnvConfig cfg;
  cfg.context_scale = 0.0;
  CHECK_THROWS_AS(generate_environment(0, cfg), ConfigError);
  cfg = {};
  cfg.action_scale = -1.0;
  CHECK_THROWS_AS(generate_environment(0, cfg), ConfigError);
  cfg = {};
  cfg.context_pair_scale = -0.5;
  CHECK_THROWS_AS(generate_environment(0, cfg), ConfigError);
  CHECK_THROWS_AS(with_weights(std::vector<double>(3, 0.0)), ConfigError);
}

TEST_CASE("sample_context frequencies follow the context distribution") {
  SUBCASE("uniform logits, 5 sigma binomial band") {
    const Environment env = with_weights(std::vector<double>(kOracleDim, 0.0));
    const int n = 128000;
    std::vector<int> counts(kNumContexts, 0);
    Rng rng(11);
    for (int i = 0; i < n; ++i) ++counts[sample_context(env, rng).index()];
    const double p = 1.0 / kNumContexts;
    const double sigma = std::sqrt(n * p * (1 - p));
    for (int c : counts) CHECK(std::abs(c - n * p) <= 5.0 * sigma);
  }
  SUBCASE("one dominant logit") {
    std::vector<double> logits(kNumContexts, 0.0);
    logits[77] = 50.0;
    const Environment env(0, {}, logits, std::vector<double>(kOracleDim, 0.0));
    Rng rng(5);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) hits += sample_context(env, rng).index() == 77;
    CHECK(hits >= 9990);
  }
  SUBCASE("fixed seed reproduces the draw sequence") {
    const Environment env = generate_environment(2);
    Rng r1(99), r2(99);
    for (int i = 0; i < 1000; ++i) REQUIRE(sample_context(env, r1) == sample_context(env, r2));
  }
}

TEST_CASE("policy_value by exact enumeration") {
  const Environment env = generate_environment(42);
  const std::vector<double> px = testing::ref_context_probs(env);

  SUBCASE("uniform policy equals an independent double loop") {
    double expected = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      double v = 0.0;
      for (int x = 0; x < kNumContexts; ++x)
        v += px[x] * testing::ref_sigmoid(testing::ref_oracle_logit(env, x, a));
      expected += v / kNumActions;
    }
    CHECK(std::abs(policy_value(env, Policy::uniform()) - expected) < 1e-13);
  }

  SUBCASE("greedy on the oracle attains the best value") {
    CHECK(policy_value(env, oracle_greedy_policy(env)) == best_policy_value(env));
  }

  SUBCASE("linearity over mixtures") {
    Rng rng(4);
    std::vector<ActionDistribution> table(kNumContexts);
    for (auto& row : table) {
      double z = 0.0;
      for (double& v : row) z += (v = uniform01(rng));
      for (double& v : row) v /= z;
    }
    const Policy parts[] = {Policy::tabular(table), oracle_greedy_policy(env)};
    const double w[] = {0.5, 0.5};
    const Policy mix = Policy::mixture(w, parts);
    CHECK(std::abs(policy_value(env, mix) - 0.5 * policy_value(env, parts[0]) -
                   0.5 * policy_value(env, parts[1])) < 1e-12);
  }

  SUBCASE("non-normalized policies are rejected") {
    std::vector<ActionDistribution> table(kNumContexts);
    for (auto& row : table) row.fill(1.0 / kNumActions);
    table[3][0] += 1e-6;
    CHECK_THROWS_AS(policy_value(env, Policy::tabular(table)), PolicyError);
  }
}

TEST_CASE("normalized_value endpoints") {
  const Environment env = generate_environment(42);
  CHECK(std::abs(normalized_value(env, oracle_greedy_policy(env)) - 1.0) < 1e-12);
  CHECK(std::abs(normalized_value(env, oracle_anti_greedy_policy(env))) < 1e-12);

  const std::vector<double> px = testing::ref_context_probs(env);
  double best = 0.0, worst = 0.0, uni = 0.0;
  for (int x = 0; x < kNumContexts; ++x) {
    double hi = 0.0, lo = 1.0, mean = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      const double p = testing::ref_sigmoid(testing::ref_oracle_logit(env, x, a));
      hi = std::max(hi, p);
      lo = std::min(lo, p);
      mean += p / kNumActions;
    }
    best += px[x] * hi;
    worst += px[x] * lo;
    uni += px[x] * mean;
  }
  const double v = normalized_value(env, Policy::uniform());
  CHECK(v > 0.0);
  CHECK(v < 1.0);
  CHECK(std::abs(v - (uni - worst) / (best - worst)) < 1e-12);
}

TEST_CASE("normalized_value reports degenerate environments") {
  const Environment flat = with_weights(std::vector<double>(kOracleDim, 0.0));
  CHECK_THROWS_AS(normalized_value(flat, Policy::uniform()), DegenerateEnvironmentError);
}

TEST_CASE("policy_value agrees with a Monte-Carlo rollout") {
  const Environment env = generate_environment(8);
  const Policy pi = Policy::uniform();
  Rng rng(123);
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Context x = sample_context(env, rng);
    const Action a = pi.sample_action(x, rng).first;
    sum += uniform01(rng) < env.reward_prob(x, a) ? 1.0 : 0.0;
  }
  const double mean = sum / n;
  const double se = std::sqrt(mean * (1 - mean) / n);
  CHECK(std::abs(mean - policy_value(env, pi)) <= 4.0 * se);
}

TEST_CASE("environment JSON round trip") {
  EnvConfig cfg;
  cfg.bias_shift = -3.5;
  cfg.inert_context_bits[6] = true;
  const Environment env = generate_environment(1234567, cfg);
  const nlohmann::json j = to_json(env);
  for (const char* key : {"schema_version", "seed", "context_logits", "oracle_weights"}) {
    CHECK(j.contains(key));
  }
  const Environment back = environment_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.seed() == env.seed());
  CHECK(back.oracle_weights() == env.oracle_weights());
  CHECK(back.context_logits() == env.context_logits());
  CHECK(back.config().inert_context_bits[6]);

  nlohmann::json bad = j;
  bad["schema_version"] = 99;
  CHECK_THROWS_AS(environment_from_json(bad), ParseError);
  bad = j;
  bad.erase("oracle_weights");
  CHECK_THROWS_AS(environment_from_json(bad), ParseError);
}
