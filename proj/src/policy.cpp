#include "csi/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace csi {

namespace {

std::vector<ActionDistribution> greedy_table(const ScoreTable& scores, double epsilon) {
  if (static_cast<int>(scores.size()) != kNumContexts) {
    throw PreconditionError("score table must have one row per context");
  }
  std::vector<ActionDistribution> table(kNumContexts);
  for (int x = 0; x < kNumContexts; ++x) {
    table[x].fill(epsilon / kNumActions);
    table[x][argmax_action(scores[x])] += 1.0 - epsilon;
  }
  return table;
}

void check_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ConfigError("epsilon must lie in [0,1]");
  }
}

void check_model(const std::shared_ptr<const LinearModel>& m) {
  if (!m) throw PreconditionError("policy needs a model");
}

}  // namespace

int argmax_action(const std::array<double, kNumActions>& scores) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a)
    if (scores[a] > scores[best]) best = a;
  return best;
}

ScoreTable score_table(const LinearModel& m) {
  ScoreTable t(kNumContexts);
  for (int x = 0; x < kNumContexts; ++x)
    for (int a = 0; a < kNumActions; ++a) t[x][a] = m.score(Context(x), Action(a));
  return t;
}

Policy Policy::uniform() {
  ActionDistribution row;
  row.fill(1.0 / kNumActions);
  return Policy(Kind::Uniform, std::vector<ActionDistribution>(kNumContexts, row));
}

Policy Policy::greedy(std::shared_ptr<const LinearModel> model) {
  check_model(model);
  Policy p(Kind::Greedy, greedy_table(score_table(*model), 0.0));
  p.model_ = std::move(model);
  return p;
}

Policy Policy::greedy(const ScoreTable& scores) {
  return Policy(Kind::Greedy, greedy_table(scores, 0.0));
}

Policy Policy::epsilon_greedy(std::shared_ptr<const LinearModel> model, double epsilon) {
  check_model(model);
  check_epsilon(epsilon);
  Policy p(Kind::EpsilonGreedy, greedy_table(score_table(*model), epsilon));
  p.model_ = std::move(model);
  p.epsilon_ = epsilon;
  return p;
}

Policy Policy::epsilon_greedy(const ScoreTable& scores, double epsilon) {
  check_epsilon(epsilon);
  Policy p(Kind::EpsilonGreedy, greedy_table(scores, epsilon));
  p.epsilon_ = epsilon;
  return p;
}

Policy Policy::softmax(std::shared_ptr<const LinearModel> model, double alpha,
                       SoftmaxLink link) {
  check_model(model);
  if (!std::isfinite(alpha) || alpha < 0.0) throw ConfigError("alpha must be >= 0");
  const ScoreTable scores = score_table(*model);
  std::vector<ActionDistribution> table(kNumContexts);
  for (int x = 0; x < kNumContexts; ++x) {
    // Normalize in the log domain so large scores cannot overflow.
    std::array<double, kNumActions> logw;
    for (int a = 0; a < kNumActions; ++a) {
      const double s = scores[x][a];
      logw[a] = link == SoftmaxLink::Logit
                    ? alpha * s
                    : alpha * std::log(std::max(sigmoid(s), kSoftmaxFloor));
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    double z = 0.0;
    for (int a = 0; a < kNumActions; ++a) {
      table[x][a] = std::exp(logw[a] - top);
      z += table[x][a];
    }
    for (double& v : table[x]) v /= z;
  }
  Policy p(Kind::Softmax, std::move(table));
  p.model_ = std::move(model);
  p.alpha_ = alpha;
  p.link_ = link;
  return p;
}

Policy Policy::mixture(std::span<const double> weights, std::span<const Policy> parts) {
  if (weights.size() != parts.size() || parts.empty()) {
    throw ConfigError("mixture needs one weight per component");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("mixture weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
  std::vector<ActionDistribution> table(kNumContexts);
  for (auto& row : table) row.fill(0.0);
  for (std::size_t k = 0; k < parts.size(); ++k)
    for (int x = 0; x < kNumContexts; ++x)
      for (int a = 0; a < kNumActions; ++a)
        table[x][a] += weights[k] * parts[k].table_[x][a];
  return Policy(Kind::Mixture, std::move(table));
}

Policy Policy::tabular(std::vector<ActionDistribution> table) {
  if (static_cast<int>(table.size()) != kNumContexts) {
    throw PreconditionError("policy table must have one row per context");
  }
  return Policy(Kind::Tabular, std::move(table));
}

int sample_index(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double cum = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += probs[i];
    if (u < cum) return last_positive;
  }
  // Rounding left u above the accumulated mass.
  return last_positive;
}

std::pair<Action, double> Policy::sample_action(Context x, Rng& rng) const {
  const ActionDistribution& p = probs(x);
  const int a = sample_index(p, rng);
  if (a < 0) throw PolicyError("policy has no mass in context " + x.to_string());
  return {Action(a), p[a]};
}

std::string Policy::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Uniform: os << "uniform"; break;
    case Kind::Greedy: os << "greedy"; break;
    case Kind::EpsilonGreedy: os << "epsilon_greedy(" << epsilon_ << ")"; break;
    case Kind::Softmax:
      os << "softmax(" << alpha_ << (link_ == SoftmaxLink::Logit ? ", logit)" : ")");
      break;
    case Kind::Mixture: os << "mixture"; break;
    case Kind::Tabular: os << "tabular"; break;
  }
  return os.str();
}

}  // namespace csi
