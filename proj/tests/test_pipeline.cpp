#include <doctest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "csi/pipeline.hpp"
#include "oracles.hpp"

using namespace csi;

namespace {

std::vector<LoggedSample> uniform_log(const Environment& env, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return collect_dataset(env, Policy::uniform(), n, rng);
}

Policy random_softmax(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> w(FeatureMap().dim());
  for (double& v : w) v = g(rng);
  return Policy::softmax(std::make_shared<const LinearModel>(FeatureMap(), w), 1.0,
                         SoftmaxLink::Logit);
}

}  // namespace

TEST_CASE("collect_dataset basics") {
  const Environment env = generate_environment(42);
  Rng rng(1);
  CHECK_THROWS_AS(collect_dataset(env, Policy::uniform(), 0, rng), PreconditionError);

  const auto data = uniform_log(env, 100000, 2);
  REQUIRE(data.size() == 100000);
  double mean = 0.0;
  for (const auto& s : data) {
    REQUIRE(s.propensity == 1.0 / 32.0);
    REQUIRE((s.reward == 0 || s.reward == 1));
    mean += s.reward;
  }
  mean /= data.size();
  const double v = policy_value(env, Policy::uniform());
  CHECK(std::abs(mean - v) <= 4.0 * std::sqrt(v * (1 - v) / data.size()));
}

TEST_CASE("collect_dataset is reproducible from the seed") {
  const Environment env = generate_environment(5);
  const auto a = uniform_log(env, 500, 9);
  const auto b = uniform_log(env, 500, 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].x == b[i].x);
    REQUIRE(a[i].a == b[i].a);
    REQUIRE(a[i].reward == b[i].reward);
  }
}

TEST_CASE("collect_dataset rejects policies without support") {
  const Environment env = generate_environment(42);
  std::vector<ActionDistribution> table(kNumContexts);
  for (auto& row : table) row.fill(0.0);
  Rng rng(3);
  CHECK_THROWS_AS(collect_dataset(env, Policy::tabular(table), 10, rng), CoverageError);
}

TEST_CASE("sampling transform structure") {
  const Environment env = generate_environment(7);
  const auto data = uniform_log(env, 20000, 4);
  Rng rng(5);
  const auto rows = csi_transform_sampling(data, Policy::uniform(), rng);
  const std::size_t pos = count_positives(data);
  REQUIRE(rows.size() == 2 * pos);

  std::size_t k = 0;
  for (const auto& s : data) {
    if (s.reward != 1) continue;
    const CsiExample& one = rows[2 * k];
    const CsiExample& zero = rows[2 * k + 1];
    REQUIRE(one.z == 1);
    REQUIRE(zero.z == 0);
    REQUIRE(one.x == s.x);
    REQUIRE(one.b == s.a);
    REQUIRE(zero.x == s.x);
    REQUIRE(one.weight == 1.0);
    REQUIRE(zero.weight == 1.0);
    REQUIRE(zero.propensity == 1.0 / 32.0);
    ++k;
  }
}

TEST_CASE("greedy logging pairs every positive with the greedy action") {
  const Environment env = generate_environment(8);
  const Policy pi0 = oracle_greedy_policy(env);
  Rng rng(6);
  const auto data = collect_dataset(env, pi0, 5000, rng);
  const auto rows = csi_transform_sampling(data, pi0, rng);
  for (std::size_t i = 0; i < rows.size(); i += 2) {
    REQUIRE(rows[i].b == rows[i + 1].b);
    REQUIRE(rows[i + 1].propensity == 1.0);
  }
}

TEST_CASE("counterfactual draws are independent of the logged action") {
  const Environment env = generate_environment(10);
  const auto data = uniform_log(env, 200000, 11);
  Rng rng(12);
  const auto rows = csi_transform_sampling(data, Policy::uniform(), rng);
  const double n = rows.size() / 2.0;
  double same = 0.0;
  std::array<double, kNumActions> counts{};
  for (std::size_t i = 0; i < rows.size(); i += 2) {
    same += rows[i].b == rows[i + 1].b;
    counts[rows[i + 1].b.index()] += 1.0;
  }
  const double q = 1.0 / 32.0;
  CHECK(std::abs(same - n * q) <= 5.0 * std::sqrt(n * q * (1 - q)));
  for (double c : counts) CHECK(std::abs(c - n * q) <= 5.0 * std::sqrt(n * q * (1 - q)));
}

TEST_CASE("expect transform weights") {
  const Environment env = generate_environment(13);
  const auto data = uniform_log(env, 3000, 14);
  const Policy pi0 = random_softmax(15);
  const auto rows = csi_transform_expect(data, pi0);
  const std::size_t pos = count_positives(data);
  REQUIRE(rows.size() == pos * (1 + kNumActions));

  double w1 = 0.0, w0 = 0.0;
  for (std::size_t i = 0; i < rows.size(); i += 1 + kNumActions) {
    REQUIRE(rows[i].z == 1);
    double block = 0.0;
    for (int b = 0; b < kNumActions; ++b) {
      const CsiExample& r = rows[i + 1 + b];
      REQUIRE(r.z == 0);
      REQUIRE(r.b.index() == b);
      REQUIRE(r.weight == pi0.probs(r.x)[b]);
      block += r.weight;
    }
    REQUIRE(std::abs(block - 1.0) < 1e-12);
    w1 += rows[i].weight;
    w0 += block;
  }
  CHECK(std::abs(w1 - w0) < 1e-9 * w1);

  const Policy greedy = oracle_greedy_policy(env);
  CHECK(csi_transform_expect(data, greedy).size() == 2 * pos);
}

TEST_CASE("sampled loss is an unbiased estimate of the expect loss") {
  const Environment env = generate_environment(16);
  const auto data = uniform_log(env, 2000, 17);
  const Policy pi0 = random_softmax(18);
  std::vector<double> w(FeatureMap().dim());
  Rng wr(19);
  std::normal_distribution<double> g(0.0, 0.3);
  for (double& v : w) v = g(wr);
  const LinearModel m(FeatureMap(), w);

  const double target = csi_log_loss(csi_transform_expect(data, pi0), m);
  const int reps = 400;
  double s = 0.0, s2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    Rng rng(derive_seed(20, {static_cast<std::uint64_t>(r)}));
    const double l = csi_log_loss(csi_transform_sampling(data, pi0, rng), m);
    s += l;
    s2 += l * l;
  }
  const double mean = s / reps;
  const double se = std::sqrt((s2 / reps - mean * mean) / (reps - 1));
  CHECK(std::abs(mean - target) <= 4.0 * se);
}

TEST_CASE("sharded transform is deterministic") {
  const Environment env = generate_environment(21);
  const auto data = uniform_log(env, 10000, 22);
  const auto a = csi_transform_sampling(data, Policy::uniform(), 77, 1000);
  const auto b = csi_transform_sampling(data, Policy::uniform(), 77, 1000);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].b == b[i].b);

  const auto c = csi_transform_sampling(data, Policy::uniform(), 78, 1000);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].b != c[i].b;
  CHECK(differs);
  CHECK_THROWS_AS(csi_transform_sampling(data, Policy::uniform(), 77, 0), PreconditionError);
}

TEST_CASE("log CSV round trip") {
  const Environment env = generate_environment(23);
  Rng rng(24);
  const auto data = collect_dataset(env, random_softmax(25), 300, rng);
  std::stringstream ss;
  write_log_csv(ss, data);
  CHECK(ss.str().rfind("context_bits,action_bits,propensity,reward\n", 0) == 0);
  const auto back = read_log_csv(ss);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    REQUIRE(back[i].x == data[i].x);
    REQUIRE(back[i].a == data[i].a);
    REQUIRE(back[i].propensity == data[i].propensity);
    REQUIRE(back[i].reward == data[i].reward);
  }
}

TEST_CASE("CSI CSV round trip") {
  const Environment env = generate_environment(26);
  const auto data = uniform_log(env, 500, 27);
  const auto rows = csi_transform_expect(data, random_softmax(28));
  std::stringstream ss;
  write_csi_csv(ss, rows);
  const auto back = read_csi_csv(ss);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    REQUIRE(back[i].b == rows[i].b);
    REQUIRE(back[i].z == rows[i].z);
    REQUIRE(back[i].weight == rows[i].weight);
    REQUIRE(back[i].propensity == rows[i].propensity);
  }
}

TEST_CASE("malformed CSV input") {
  auto parse = [](const std::string& s) {
    std::istringstream is(s);
    return read_log_csv(is);
  };
  const std::string h = "context_bits,action_bits,propensity,reward\n";
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("x,y\n"), ParseError);
  CHECK_THROWS_AS(parse(h + "0000000,00000,0.5\n"), ParseError);
  CHECK_THROWS_AS(parse(h + "000000,00000,0.5,1\n"), ParseError);
  CHECK_THROWS_AS(parse(h + "0000000,00000,abc,1\n"), ParseError);
  CHECK_THROWS_AS(parse(h + "0000000,00000,0,1\n"), ParseError);
  CHECK_THROWS_AS(parse(h + "0000000,00000,0.5,2\n"), ParseError);
  CHECK(parse(h + "1000000,00001,0.5,1\n").at(0).x.index() == 1);

  std::istringstream csi("context_bits,action_bits,propensity,reward,z,weight\n"
                         "0000000,00000,0.5,0,1,1\n");
  CHECK_THROWS_AS(read_csi_csv(csi), ParseError);
}
