#pragma once

#include <vector>

namespace csi {

/// A finite bandit given by tables, independent of the 7x5-bit environment.
/// Used to reason about the population (infinite-data) identification problem.
struct TabularBandit {
  std::vector<double> context_probs;        // p(x)
  std::vector<std::vector<double>> reward;  // p(Y=1 | x, a), [x][a]
  std::vector<std::vector<double>> pi0;     // pi0(a | x), [x][a]

  std::size_t num_contexts() const { return context_probs.size(); }
  std::size_t num_actions() const { return reward.empty() ? 0 : reward.front().size(); }
  void validate() const;
};

struct CsiPosterior {
  /// P(Z=1 | X=x, B=b, Y=1), [x][b]; NaN where (x, b) never appears.
  std::vector<std::vector<double>> given_action;
  /// P(Z=1 | X=x, Y=1), marginal over the observed action.
  std::vector<double> given_context;
};

/// Exact posterior by enumerating the generating process of the sampled
/// transform: X ~ p, A ~ pi0, Y ~ Bernoulli, A' ~ pi0 independently, and each
/// positive emitting (x, A, z=1) and (x, A', z=0).
CsiPosterior enumerate_csi_posterior(const TabularBandit& bandit);

/// sigmoid(log(p(Y=1|x,a) / p(Y=1|x))) with p(Y=1|x) = sum_a pi0(a|x) p(Y=1|x,a).
std::vector<std::vector<double>> csi_closed_form(const TabularBandit& bandit);

}  // namespace csi
