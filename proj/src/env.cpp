#include "csi/env.hpp"

#include <algorithm>
#include <cmath>

namespace csi {

namespace {

constexpr int kContextOffset = 0;
constexpr int kActionOffset = kContextBits;
constexpr int kCrossOffset = kActionOffset + kActionBits;
constexpr int kPairOffset = kCrossOffset + kContextBits * kActionBits;
constexpr int kContextPairOffset = kPairOffset + kActionPairs;
constexpr int kBiasIndex = kOracleDim - 1;

constexpr double kNormalizationTol = 1e-9;
constexpr double kDegenerateGap = 1e-12;

void check_distribution(const ActionDistribution& row, int x) {
  double sum = 0.0;
  for (double p : row) {
    if (!(p >= 0.0)) {
      throw PolicyError("negative or NaN action probability in context " +
                        Context(x).to_string());
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kNormalizationTol) {
    throw PolicyError("action probabilities in context " + Context(x).to_string() +
                      " sum to " + std::to_string(sum));
  }
}

}  // namespace

void oracle_featurize(Context x, Action a, std::span<double, kOracleDim> out) {
  for (int i = 0; i < kContextBits; ++i) out[kContextOffset + i] = x.bit(i);
  for (int j = 0; j < kActionBits; ++j) out[kActionOffset + j] = a.bit(j);
  for (int i = 0; i < kContextBits; ++i)
    for (int j = 0; j < kActionBits; ++j)
      out[kCrossOffset + i * kActionBits + j] = x.bit(i) * a.bit(j);
  int k = kPairOffset;
  for (int i = 0; i < kActionBits; ++i)
    for (int j = i + 1; j < kActionBits; ++j) out[k++] = a.bit(i) * a.bit(j);
  for (int i = 0; i < kContextBits; ++i)
    for (int j = i + 1; j < kContextBits; ++j) out[k++] = x.bit(i) * x.bit(j);
  out[kBiasIndex] = 1.0;
}

void EnvConfig::validate() const {
  for (double s : {context_scale, action_scale, interaction_scale, bias_scale,
                   context_logit_scale}) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ConfigError("environment coefficient scales must be positive");
    }
  }
  if (!(context_pair_scale >= 0.0) || !std::isfinite(context_pair_scale)) {
    throw ConfigError("context_pair_scale must be >= 0");
  }
  if (!std::isfinite(bias_shift)) throw ConfigError("bias_shift must be finite");
}

Environment::Environment(std::uint64_t seed, EnvConfig config,
                         std::vector<double> context_logits,
                         std::vector<double> oracle_weights)
    : seed_(seed),
      config_(config),
      context_logits_(std::move(context_logits)),
      oracle_weights_(std::move(oracle_weights)),
      logits_(kNumContexts),
      reward_(kNumContexts) {
  if (static_cast<int>(context_logits_.size()) != kNumContexts) {
    throw ConfigError("environment needs 128 context logits");
  }
  if (static_cast<int>(oracle_weights_.size()) != kOracleDim) {
    throw ConfigError("environment needs " + std::to_string(kOracleDim) +
                      " oracle weights");
  }
  for (double v : context_logits_)
    if (!std::isfinite(v)) throw ConfigError("non-finite context logit");
  for (double v : oracle_weights_)
    if (!std::isfinite(v)) throw ConfigError("non-finite oracle weight");

  const double top = *std::max_element(context_logits_.begin(), context_logits_.end());
  context_probs_.resize(kNumContexts);
  double z = 0.0;
  for (int x = 0; x < kNumContexts; ++x) {
    context_probs_[x] = std::exp(context_logits_[x] - top);
    z += context_probs_[x];
  }
  context_cdf_.resize(kNumContexts);
  double cum = 0.0;
  for (int x = 0; x < kNumContexts; ++x) {
    context_probs_[x] /= z;
    cum += context_probs_[x];
    context_cdf_[x] = cum;
  }

  std::array<double, kOracleDim> phi;
  for (int x = 0; x < kNumContexts; ++x) {
    for (int a = 0; a < kNumActions; ++a) {
      oracle_featurize(Context(x), Action(a), phi);
      double s = 0.0;
      for (int k = 0; k < kOracleDim; ++k) s += oracle_weights_[k] * phi[k];
      logits_[x][a] = s;
      reward_[x][a] = sigmoid(s);
    }
  }
}

Environment generate_environment(std::uint64_t seed, const EnvConfig& config) {
  config.validate();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> logits(kNumContexts);
  for (double& v : logits) v = config.context_logit_scale * normal(rng);

  std::vector<double> w(kOracleDim);
  for (int i = 0; i < kContextBits; ++i) w[kContextOffset + i] = config.context_scale * normal(rng);
  for (int j = 0; j < kActionBits; ++j) w[kActionOffset + j] = config.action_scale * normal(rng);
  for (int k = kCrossOffset; k < kContextPairOffset; ++k) w[k] = config.interaction_scale * normal(rng);
  for (int k = kContextPairOffset; k < kBiasIndex; ++k) w[k] = config.context_pair_scale * normal(rng);
  w[kBiasIndex] = config.bias_scale * normal(rng) + config.bias_shift;

  for (int i = 0; i < kContextBits; ++i) {
    if (!config.inert_context_bits[i]) continue;
    w[kContextOffset + i] = 0.0;
    for (int j = 0; j < kActionBits; ++j) w[kCrossOffset + i * kActionBits + j] = 0.0;
    int k = kContextPairOffset;
    for (int u = 0; u < kContextBits; ++u)
      for (int v = u + 1; v < kContextBits; ++v, ++k)
        if (u == i || v == i) w[k] = 0.0;
  }

  if (config.center_logits) {
    std::array<double, kOracleDim> phi;
    double mean = 0.0;
    for (int x = 0; x < kNumContexts; ++x) {
      for (int a = 0; a < kNumActions; ++a) {
        oracle_featurize(Context(x), Action(a), phi);
        for (int k = 0; k < kBiasIndex; ++k) mean += w[k] * phi[k];
      }
    }
    w[kBiasIndex] -= mean / (kNumContexts * kNumActions);
  }
  return Environment(seed, config, std::move(logits), std::move(w));
}

double true_reward_prob(const Environment& env, Context x, Action a) {
  return env.reward_prob(x, a);
}

Context sample_context(const Environment& env, Rng& rng) {
  const double u = uniform01(rng);
  const auto& cdf = env.context_cdf_;
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return Context(static_cast<int>(it - cdf.begin()));
}

double policy_value(const Environment& env, const Policy& pi) {
  double v = 0.0;
  for (int x = 0; x < kNumContexts; ++x) {
    const ActionDistribution& row = pi.probs(Context(x));
    check_distribution(row, x);
    double inner = 0.0;
    for (int a = 0; a < kNumActions; ++a) inner += row[a] * env.reward_prob(Context(x), Action(a));
    v += env.context_probs()[x] * inner;
  }
  return v;
}

double best_policy_value(const Environment& env) {
  double v = 0.0;
  for (int x = 0; x < kNumContexts; ++x) {
    double best = 0.0;
    for (int a = 0; a < kNumActions; ++a) best = std::max(best, env.reward_prob(Context(x), Action(a)));
    v += env.context_probs()[x] * best;
  }
  return v;
}

double worst_policy_value(const Environment& env) {
  double v = 0.0;
  for (int x = 0; x < kNumContexts; ++x) {
    double worst = 1.0;
    for (int a = 0; a < kNumActions; ++a) worst = std::min(worst, env.reward_prob(Context(x), Action(a)));
    v += env.context_probs()[x] * worst;
  }
  return v;
}

double normalized_value(const Environment& env, const Policy& pi) {
  const double best = best_policy_value(env);
  const double worst = worst_policy_value(env);
  if (best - worst < kDegenerateGap) {
    throw DegenerateEnvironmentError("best and worst policy values coincide", env.seed());
  }
  return (policy_value(env, pi) - worst) / (best - worst);
}

Policy oracle_greedy_policy(const Environment& env) {
  return Policy::greedy(env.oracle_logits());
}

Policy oracle_anti_greedy_policy(const Environment& env) {
  ScoreTable neg = env.oracle_logits();
  for (auto& row : neg)
    for (double& v : row) v = -v;
  return Policy::greedy(neg);
}

nlohmann::json to_json(const EnvConfig& c) {
  std::string inert(kContextBits, '0');
  for (int i = 0; i < kContextBits; ++i) inert[i] = c.inert_context_bits[i] ? '1' : '0';
  return {{"context_scale", c.context_scale},
          {"action_scale", c.action_scale},
          {"interaction_scale", c.interaction_scale},
          {"context_pair_scale", c.context_pair_scale},
          {"bias_scale", c.bias_scale},
          {"bias_shift", c.bias_shift},
          {"center_logits", c.center_logits},
          {"context_logit_scale", c.context_logit_scale},
          {"inert_context_bits", inert}};
}

EnvConfig env_config_from_json(const nlohmann::json& j) {
  EnvConfig c;
  try {
    c.context_scale = j.value("context_scale", c.context_scale);
    c.action_scale = j.value("action_scale", c.action_scale);
    c.interaction_scale = j.value("interaction_scale", c.interaction_scale);
    c.context_pair_scale = j.value("context_pair_scale", c.context_pair_scale);
    c.bias_scale = j.value("bias_scale", c.bias_scale);
    c.bias_shift = j.value("bias_shift", c.bias_shift);
    c.center_logits = j.value("center_logits", c.center_logits);
    c.context_logit_scale = j.value("context_logit_scale", c.context_logit_scale);
    if (j.contains("inert_context_bits")) {
      const Context bits = Context::parse(j.at("inert_context_bits").get<std::string>());
      for (int i = 0; i < kContextBits; ++i) c.inert_context_bits[i] = bits.bit(i);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("environment config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const Environment& env) {
  return {{"schema_version", Environment::kSchemaVersion},
          {"seed", env.seed()},
          {"config", to_json(env.config())},
          {"context_logits", env.context_logits()},
          {"oracle_weights", env.oracle_weights()}};
}

Environment environment_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != Environment::kSchemaVersion) {
      throw ParseError("unsupported environment schema_version " + std::to_string(version));
    }
    EnvConfig cfg = j.contains("config") ? env_config_from_json(j.at("config")) : EnvConfig{};
    return Environment(j.at("seed").get<std::uint64_t>(), cfg,
                       j.at("context_logits").get<std::vector<double>>(),
                       j.at("oracle_weights").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("environment json: ") + e.what());
  }
}

}  // namespace csi
