#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "csi/glm.hpp"
#include "csi/pipeline.hpp"
#include "csi/policy.hpp"

namespace csi {

enum class LearnerKind { Dm, CsiSampling, CsiExpect, LsIps };
enum class CsiVariant { Sampling, Expect };

const char* to_string(LearnerKind k);
LearnerKind parse_learner_kind(std::string_view s);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::Dm;
  FeatureMap feature_map;
  TrainConfig train_cfg;
  double ls_lambda = 0.01;  // LsIps only

  void validate() const;
};

/// Reward model: logistic regression of y on (x, a), every row weight 1.
LinearModel train_dm(std::span<const LoggedSample> data, const LearnerSpec& spec);

/// Counterfactual sample identification: transform the positives against pi0
/// and fit z on (x, b) with the transform's weights.
LinearModel train_csi(std::span<const LoggedSample> data, const Policy& pi0,
                      CsiVariant variant, const LearnerSpec& spec, Rng& rng);

Policy greedy_policy(const LinearModel& m);
Policy greedy_policy(std::shared_ptr<const LinearModel> m);

/// Log-smoothed importance-weighted objective of a softmax policy
/// pi_theta(a|x) = exp(theta . phi(x,a)) / sum_b exp(theta . phi(x,b)):
///
///   J(theta) = (1/n) sum_i (1/lambda) log(1 + lambda * y_i * pi_theta(a_i|x_i) / p_i)
///
/// Samples are grouped by (x, a, propensity) at construction.
class LsIpsObjective {
 public:
  LsIpsObjective(std::span<const LoggedSample> data, const FeatureMap& fm, double lambda);

  int dim() const { return dim_; }
  double value(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const;

 private:
  struct Group {
    int action;
    double inv_propensity;
    double count;
  };
  struct ContextBlock {
    Eigen::MatrixXd features;  // kNumActions x dim
    std::vector<Group> groups;
  };

  Eigen::VectorXd log_softmax(const ContextBlock& b, const Eigen::VectorXd& theta) const;

  int dim_;
  double lambda_;
  double n_;
  std::vector<ContextBlock> blocks_;
};

/// Gradient ascent with Armijo backtracking from theta = 0. Returns the
/// Softmax(alpha = 1, logit link) policy; its model carries the fit metadata.
Policy train_ls_ips(std::span<const LoggedSample> data, const LearnerSpec& spec);

/// A trained artifact with its learner tag, serialized as the model JSON plus
/// `learner_kind` (and `ls_lambda` for LS-IPS).
struct LearnedModel {
  LearnerKind kind = LearnerKind::Dm;
  LinearModel model;
  double ls_lambda = 0.0;

  /// Greedy over the model scores.
  Policy greedy() const;
  /// Softmax with the link matching the learner: logit for LS-IPS, the
  /// predicted-probability form otherwise.
  Policy softmax(double alpha = 1.0) const;
};

/// Dispatches on spec.kind. pi0 is required by the CSI kinds only.
LearnedModel train_learner(std::span<const LoggedSample> data, const Policy* pi0,
                           const LearnerSpec& spec, Rng& rng);

nlohmann::json to_json(const LearnedModel& m);
LearnedModel learned_model_from_json(const nlohmann::json& j);

/// (1/n) sum_i y_i * pi(a_i|x_i) / p_i
double ips_estimate(std::span<const LoggedSample> data, const Policy& pi);

}  // namespace csi
