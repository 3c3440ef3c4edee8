#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "csi/policy.hpp"
#include "csi/rng.hpp"
#include "csi/space.hpp"

namespace csi {

/// Oracle features: the learner's full quadratic map plus pairwise
/// action-action products a_i*a_j and context-context products x_i*x_j
/// (i<j), which no learner can represent.
///
/// Layout: 7 context bits, 5 action bits, 35 row-major x_i*a_j products,
/// 10 a_i*a_j products in (0,1),(0,2),...,(3,4) order, 21 x_i*x_j products
/// in the same order, bias.
inline constexpr int kActionPairs = kActionBits * (kActionBits - 1) / 2;
inline constexpr int kContextPairs = kContextBits * (kContextBits - 1) / 2;
inline constexpr int kOracleDim = kContextBits + kActionBits + kContextBits * kActionBits +
                                  kActionPairs + kContextPairs + 1;

void oracle_featurize(Context x, Action a, std::span<double, kOracleDim> out);

/// Scales of the Gaussian coefficient draws.
struct EnvConfig {
  double context_scale = 2.0;
  double action_scale = 1.0;
  double interaction_scale = 1.0;
  /// Scale of the x_i*x_j coefficients; 0 removes them.
  double context_pair_scale = 1.25;
  double bias_scale = 1.0;
  double bias_shift = -10.0;
  /// Shift the bias so the mean logit over uniform (x, a) is the bias draw.
  bool center_logits = true;
  double context_logit_scale = 1.0;
  /// Context bits whose main and interaction coefficients are forced to zero.
  std::array<bool, kContextBits> inert_context_bits{};

  void validate() const;
};

class Environment {
 public:
  static constexpr int kSchemaVersion = 1;

  /// Validates shapes and finiteness and precomputes the reward table.
  Environment(std::uint64_t seed, EnvConfig config, std::vector<double> context_logits,
              std::vector<double> oracle_weights);

  std::uint64_t seed() const { return seed_; }
  const EnvConfig& config() const { return config_; }
  const std::vector<double>& context_logits() const { return context_logits_; }
  const std::vector<double>& oracle_weights() const { return oracle_weights_; }
  const std::vector<double>& context_probs() const { return context_probs_; }

  double reward_prob(Context x, Action a) const { return reward_[x.index()][a.index()]; }
  /// Oracle logits, [context][action].
  const ScoreTable& oracle_logits() const { return logits_; }

 private:
  std::uint64_t seed_;
  EnvConfig config_;
  std::vector<double> context_logits_;
  std::vector<double> oracle_weights_;
  std::vector<double> context_probs_;
  std::vector<double> context_cdf_;
  ScoreTable logits_;
  ScoreTable reward_;

  friend Context sample_context(const Environment&, Rng&);
};

Environment generate_environment(std::uint64_t seed, const EnvConfig& config = {});

double true_reward_prob(const Environment& env, Context x, Action a);
Context sample_context(const Environment& env, Rng& rng);

/// Exact expected reward sum_x p(x) sum_a pi(a|x) p(Y=1|x,a).
double policy_value(const Environment& env, const Policy& pi);
double best_policy_value(const Environment& env);
double worst_policy_value(const Environment& env);
/// (value - worst) / (best - worst); throws DegenerateEnvironmentError when
/// best - worst < 1e-12.
double normalized_value(const Environment& env, const Policy& pi);

Policy oracle_greedy_policy(const Environment& env);
Policy oracle_anti_greedy_policy(const Environment& env);

nlohmann::json to_json(const EnvConfig& c);
EnvConfig env_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Environment& env);
Environment environment_from_json(const nlohmann::json& j);

}  // namespace csi
