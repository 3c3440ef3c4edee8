#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csi/glm.hpp"
#include "csi/rng.hpp"
#include "csi/space.hpp"

namespace csi {

using ActionDistribution = std::array<double, kNumActions>;
/// Per-context action scores, indexed [context][action].
using ScoreTable = std::vector<std::array<double, kNumActions>>;

/// How Softmax turns a model score s into an unnormalized weight.
///   Probability: max(sigmoid(s), 1e-12)^alpha   (exploration over a classifier)
///   Logit:       exp(alpha * s)                 (parametric softmax policy)
enum class SoftmaxLink { Probability, Logit };

/// Conditional distribution over the 32 actions for each of the 128 contexts.
///
/// Policies are immutable and materialize their full probability table at
/// construction, so `probs` is a lookup and policies are cheap to share.
class Policy {
 public:
  enum class Kind { Uniform, Greedy, EpsilonGreedy, Softmax, Mixture, Tabular };

  static constexpr double kSoftmaxFloor = 1e-12;

  static Policy uniform();
  static Policy greedy(std::shared_ptr<const LinearModel> model);
  /// Greedy over arbitrary scores; ties go to the lowest action index.
  static Policy greedy(const ScoreTable& scores);
  static Policy epsilon_greedy(std::shared_ptr<const LinearModel> model, double epsilon);
  static Policy epsilon_greedy(const ScoreTable& scores, double epsilon);
  static Policy softmax(std::shared_ptr<const LinearModel> model, double alpha = 1.0,
                        SoftmaxLink link = SoftmaxLink::Probability);
  /// Convex combination; weights must be nonnegative and sum to 1.
  static Policy mixture(std::span<const double> weights, std::span<const Policy> parts);
  /// Raw table, unvalidated. Evaluators reject rows that are not distributions.
  static Policy tabular(std::vector<ActionDistribution> table);

  Kind kind() const { return kind_; }
  double epsilon() const { return epsilon_; }
  double alpha() const { return alpha_; }
  SoftmaxLink link() const { return link_; }
  const std::shared_ptr<const LinearModel>& model() const { return model_; }

  const ActionDistribution& probs(Context x) const { return table_[x.index()]; }
  /// Draws an action and returns it with its probability under `probs(x)`.
  std::pair<Action, double> sample_action(Context x, Rng& rng) const;

  std::string describe() const;

 private:
  Policy(Kind kind, std::vector<ActionDistribution> table)
      : kind_(kind), table_(std::move(table)) {}

  Kind kind_;
  double epsilon_ = 0.0;
  double alpha_ = 0.0;
  SoftmaxLink link_ = SoftmaxLink::Probability;
  std::shared_ptr<const LinearModel> model_;
  std::vector<ActionDistribution> table_;
};

ScoreTable score_table(const LinearModel& m);
/// Lowest index among the maximizers.
int argmax_action(const std::array<double, kNumActions>& scores);

/// Index drawn from a discrete distribution by inverse CDF; zero-mass entries
/// are never returned.
int sample_index(std::span<const double> probs, Rng& rng);

}  // namespace csi
