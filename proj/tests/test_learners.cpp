#include <doctest.h>

#include <cmath>
#include <memory>

#include "csi/learners.hpp"
#include "oracles.hpp"

using namespace csi;

namespace {

// Calibrated once on the default environment generator and frozen.
constexpr double kCsiArgmaxAgreement = 0.5;
constexpr double kCsiGreedyValue = 0.95;
constexpr double kRestrictedOracleValue = 0.99;

constexpr int kActionPairBegin = kContextBits + kActionBits + kContextBits * kActionBits;
constexpr int kContextPairBegin = kActionPairBegin + kActionPairs;

/// Environment whose oracle lies inside the learners' feature class.
Environment representable_env(std::uint64_t seed) {
  const Environment base = generate_environment(seed);
  std::vector<double> w = base.oracle_weights();
  REQUIRE(w.size() == kOracleDim);
  std::fill(w.begin() + kActionPairBegin, w.begin() + kContextPairBegin + kContextPairs, 0.0);
  return Environment(seed, base.config(), base.context_logits(), w);
}

std::vector<LoggedSample> uniform_log(const Environment& env, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return collect_dataset(env, Policy::uniform(), n, rng);
}

LearnerSpec spec_of(LearnerKind k) {
  LearnerSpec s;
  s.kind = k;
  return s;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST_CASE("DM recovers a reward driven by one action bit") {
  std::vector<double> w(kOracleDim, 0.0);
  w[kContextBits + 0] = 3.0;
  w.back() = -1.5;
  const Environment env(0, {}, std::vector<double>(kNumContexts, 0.0), w);
  const auto data = uniform_log(env, 20000, 1);
  const LinearModel m = train_dm(data, spec_of(LearnerKind::Dm));
  const Policy g = greedy_policy(m);
  for (int x = 0; x < kNumContexts; ++x) {
    int chosen = 0;
    for (int a = 0; a < kNumActions; ++a)
      if (g.probs(Context(x))[a] == 1.0) chosen = a;
    REQUIRE(Action(chosen).bit(0) == 1);
  }
  CHECK(normalized_value(env, g) == 1.0);
}

TEST_CASE("DM edge cases") {
  CHECK_THROWS_AS(train_dm(std::vector<LoggedSample>{}, spec_of(LearnerKind::Dm)),
                  PreconditionError);
  std::vector<LoggedSample> negatives;
  for (int i = 0; i < 200; ++i) negatives.push_back({Context(i % 128), Action(i % 32), 1.0 / 32, 0});
  const LinearModel m = train_dm(negatives, spec_of(LearnerKind::Dm));
  for (int x = 0; x < kNumContexts; x += 7)
    for (int a = 0; a < kNumActions; a += 5) REQUIRE(m.predict_prob(Context(x), Action(a)) < 0.05);
}

TEST_CASE("CSI under a deterministic logging policy predicts one half") {
  const Environment env = generate_environment(3);
  const Policy pi0 = oracle_greedy_policy(env);
  Rng rng(4);
  const auto data = collect_dataset(env, pi0, 20000, rng);
  for (CsiVariant v : {CsiVariant::Sampling, CsiVariant::Expect}) {
    const LinearModel m = train_csi(data, pi0, v, spec_of(LearnerKind::CsiSampling), rng);
    for (const auto& s : data) {
      const double p = m.predict_prob(s.x, s.a);
      REQUIRE(p >= 0.48);
      REQUIRE(p <= 0.52);
    }
  }
}

TEST_CASE("CSI errors and determinism") {
  const Environment env = generate_environment(5);
  Rng rng(6);
  std::vector<LoggedSample> negatives(50, LoggedSample{Context(1), Action(2), 1.0 / 32, 0});
  CHECK_THROWS_AS(
      train_csi(negatives, Policy::uniform(), CsiVariant::Sampling, spec_of(LearnerKind::CsiSampling), rng),
      PreconditionError);
  CHECK_THROWS_AS(train_learner(negatives, nullptr, spec_of(LearnerKind::CsiExpect), rng),
                  PreconditionError);

  const auto data = uniform_log(env, 5000, 7);
  Rng r1(1), r2(2);
  const LinearModel a = train_csi(data, Policy::uniform(), CsiVariant::Expect,
                                  spec_of(LearnerKind::CsiExpect), r1);
  const LinearModel b = train_csi(data, Policy::uniform(), CsiVariant::Expect,
                                  spec_of(LearnerKind::CsiExpect), r2);
  CHECK(a.weights == b.weights);
}

TEST_CASE("an all-zero model picks action 0 everywhere") {
  const Policy g = greedy_policy(LinearModel());
  for (int x = 0; x < kNumContexts; ++x) REQUIRE(g.probs(Context(x))[0] == 1.0);
}

TEST_CASE("learners approach the optimum on a representable oracle") {
  const Environment env = representable_env(8);
  const auto data = uniform_log(env, 200000, 9);
  const Policy pi0 = Policy::uniform();
  Rng rng(10);
  for (LearnerKind k : {LearnerKind::Dm, LearnerKind::CsiExpect}) {
    const LearnedModel m = train_learner(data, &pi0, spec_of(k), rng);
    const std::string name = to_string(k);
    CAPTURE(name);
    CHECK(normalized_value(env, m.greedy()) > 0.97);
  }
}

TEST_CASE("CSI recovers the reward argmax from a large uniform log") {
  const Environment env = generate_environment(42);
  const auto data = uniform_log(env, 500000, 21);
  Rng rng(22);
  const LinearModel m = train_csi(data, Policy::uniform(), CsiVariant::Sampling,
                                  spec_of(LearnerKind::CsiSampling), rng);
  const ScoreTable scores = score_table(m);
  double agree = 0.0;
  for (int x = 0; x < kNumContexts; ++x)
    if (argmax_action(scores[x]) == argmax_action(env.oracle_logits()[x]))
      agree += env.context_probs()[x];
  CHECK(agree >= kCsiArgmaxAgreement);
  CHECK(normalized_value(env, greedy_policy(m)) >= kCsiGreedyValue);
}

TEST_CASE("oracle weights restricted to the learner features are near optimal") {
  const Environment env = generate_environment(42);
  const FeatureMap fm;
  const auto& w = env.oracle_weights();
  std::vector<double> restricted(w.begin(), w.begin() + fm.dim() - 1);
  restricted.push_back(w.back());
  const double v = normalized_value(env, greedy_policy(LinearModel(fm, restricted)));
  CHECK(v >= kRestrictedOracleValue);
}

TEST_CASE("LS-IPS objective") {
  const Environment env = generate_environment(11);
  const auto data = uniform_log(env, 3000, 12);
  const FeatureMap fm;

  SUBCASE("gradient agrees with finite differences") {
    const LsIpsObjective obj(data, fm, 0.1);
    Rng rng(13);
    std::normal_distribution<double> g(0.0, 0.5);
    for (int t = 0; t < 5; ++t) {
      std::vector<double> th(obj.dim());
      for (double& v : th) v = g(rng);
      const Eigen::VectorXd grad = obj.gradient(to_eigen(th));
      const auto fd = testing::central_difference(
          [&](const std::vector<double>& v) { return obj.value(to_eigen(v)); }, th);
      CHECK(testing::relative_error(std::vector<double>(grad.data(), grad.data() + grad.size()),
                                    fd) < 1e-5);
    }
  }

  SUBCASE("value matches a direct sum over samples") {
    const double lambda = 0.3;
    const LsIpsObjective obj(data, fm, lambda);
    std::vector<double> th(fm.dim(), 0.0);
    for (int k = 0; k < fm.dim(); ++k) th[k] = 0.1 * std::sin(k + 1.0);
    const Policy pi = Policy::softmax(std::make_shared<const LinearModel>(fm, th), 1.0,
                                      SoftmaxLink::Logit);
    double expected = 0.0;
    for (const auto& s : data)
      expected += std::log1p(lambda * s.reward * pi.probs(s.x)[s.a.index()] / s.propensity) / lambda;
    expected /= data.size();
    CHECK(std::abs(obj.value(to_eigen(th)) - expected) < 1e-12);
  }

  SUBCASE("small lambda approaches the IPS estimate") {
    const LsIpsObjective obj(data, fm, 1e-9);
    std::vector<double> th(fm.dim(), 0.05);
    const Policy pi = Policy::softmax(std::make_shared<const LinearModel>(fm, th), 1.0,
                                      SoftmaxLink::Logit);
    const double ips = ips_estimate(data, pi);
    CHECK(std::abs(obj.value(to_eigen(th)) - ips) < 1e-6 * ips);
  }

  SUBCASE("larger lambda shrinks the objective") {
    std::vector<double> th(fm.dim(), 0.05);
    double prev = INFINITY;
    for (double lambda : {0.001, 0.01, 0.1, 1.0}) {
      const double v = LsIpsObjective(data, fm, lambda).value(to_eigen(th));
      REQUIRE(v < prev);
      prev = v;
    }
  }

  SUBCASE("the smoothing is concave in the importance weight") {
    // One positive with propensity (1/32)/w gives J(0) = log(1 + lambda*w)/lambda.
    const double lambda = 0.5;
    auto value_at = [&](double w) {
      const std::vector<LoggedSample> one{{Context(3), Action(4), (1.0 / 32) / w, 1}};
      return LsIpsObjective(one, fm, lambda).value(Eigen::VectorXd::Zero(fm.dim()));
    };
    for (double w = 0.1; w < 20.0; w *= 1.3) {
      const double h = 0.05 * w;
      REQUIRE(value_at(w + h) - 2 * value_at(w) + value_at(w - h) <= 0.0);
      REQUIRE(value_at(w) <= w);
    }
  }

  SUBCASE("input validation") {
    auto bad = data;
    bad[0].propensity = 0.0;
    CHECK_THROWS_AS(LsIpsObjective(bad, fm, 0.1), CoverageError);
    CHECK_THROWS_AS(LsIpsObjective(data, fm, 0.0), ConfigError);
    CHECK_THROWS_AS(LsIpsObjective(std::vector<LoggedSample>{}, fm, 0.1), PreconditionError);
  }
}

TEST_CASE("LS-IPS training") {
  const Environment env = generate_environment(14);
  const auto data = uniform_log(env, 20000, 15);
  LearnerSpec spec = spec_of(LearnerKind::LsIps);
  spec.train_cfg = {0.0, 500, 1e-8, StepRule::Backtracking, 1.0};

  const Policy pi = train_ls_ips(data, spec);
  CHECK(pi.kind() == Policy::Kind::Softmax);
  CHECK(pi.link() == SoftmaxLink::Logit);
  CHECK(-pi.model()->meta.final_loss > LsIpsObjective(data, spec.feature_map, spec.ls_lambda)
                                           .value(Eigen::VectorXd::Zero(spec.feature_map.dim())));
  CHECK(normalized_value(env, pi) > normalized_value(env, Policy::uniform()));

  // Heavy smoothing keeps the policy closer to uniform.
  auto mean_kl_to_uniform = [](const Policy& p) {
    double kl = 0.0;
    for (int x = 0; x < kNumContexts; ++x)
      for (double q : p.probs(Context(x)))
        if (q > 0.0) kl += q * std::log(q * kNumActions) / kNumContexts;
    return kl;
  };
  LearnerSpec sharp = spec, smooth = spec;
  sharp.ls_lambda = 0.01;
  smooth.ls_lambda = 1e6;
  CHECK(mean_kl_to_uniform(train_ls_ips(data, smooth)) <
        mean_kl_to_uniform(train_ls_ips(data, sharp)));

  auto zeros = data;
  for (auto& s : zeros) s.reward = 0;
  const Policy flat = train_ls_ips(zeros, spec);
  for (int x = 0; x < kNumContexts; ++x)
    for (double p : flat.probs(Context(x))) REQUIRE(std::abs(p - 1.0 / 32) < 1e-15);
}

TEST_CASE("ips_estimate") {
  const Environment env = generate_environment(16);
  const auto data = uniform_log(env, 1000, 17);
  CHECK(std::abs(ips_estimate(data, Policy::uniform()) -
                 double(count_positives(data)) / data.size()) < 1e-12);
  auto bad = data;
  bad[3].propensity = 0.0;
  CHECK_THROWS_AS(ips_estimate(bad, Policy::uniform()), CoverageError);
}

TEST_CASE("learned model JSON round trip") {
  const Environment env = generate_environment(18);
  const auto data = uniform_log(env, 5000, 19);
  Rng rng(20);
  LearnerSpec spec = spec_of(LearnerKind::LsIps);
  spec.ls_lambda = 0.1;
  spec.train_cfg.max_iters = 50;
  const LearnedModel m = train_learner(data, nullptr, spec, rng);
  const nlohmann::json j = to_json(m);
  CHECK(j["learner_kind"] == "ls_ips");
  CHECK(j["ls_lambda"] == 0.1);
  const LearnedModel back = learned_model_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.kind == LearnerKind::LsIps);
  CHECK(back.model.weights == m.model.weights);
  CHECK(back.softmax().link() == SoftmaxLink::Logit);

  nlohmann::json bad = j;
  bad["learner_kind"] = "nope";
  CHECK_THROWS(learned_model_from_json(bad));
  CHECK(parse_learner_kind("csi_sampling") == LearnerKind::CsiSampling);
  CHECK_THROWS_AS(parse_learner_kind("ips"), ConfigError);
}
