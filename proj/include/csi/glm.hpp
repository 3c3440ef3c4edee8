#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "csi/space.hpp"

namespace csi {

/// Quadratic interaction feature map over the visible context and action bits.
///
/// Layout: visible context bits, visible action bits, row-major products
/// x_i * a_j over visible bits, then a constant bias feature.
class FeatureMap {
 public:
  static constexpr int kMaskBits = kContextBits + kActionBits;

  /// All twelve bits visible (dimension 48).
  FeatureMap();
  explicit FeatureMap(std::array<bool, kMaskBits> mask);

  static FeatureMap full() { return FeatureMap(); }
  /// Mask as a 12-character 0/1 string, context bits first.
  static FeatureMap parse(std::string_view mask);
  std::string to_string() const;

  bool context_visible(int i) const { return mask_[i]; }
  bool action_visible(int j) const { return mask_[kContextBits + j]; }
  const std::array<bool, kMaskBits>& mask() const { return mask_; }

  int dim() const { return dim_; }
  int bias_index() const { return dim_ - 1; }
  int num_visible_context() const { return static_cast<int>(ctx_.size()); }
  int num_visible_action() const { return static_cast<int>(act_.size()); }

  void featurize(Context x, Action a, std::span<double> out) const;
  std::vector<double> featurize(Context x, Action a) const;

  friend bool operator==(const FeatureMap& l, const FeatureMap& r) {
    return l.mask_ == r.mask_;
  }

 private:
  std::array<bool, kMaskBits> mask_;
  std::vector<int> ctx_;
  std::vector<int> act_;
  int dim_ = 0;
};

struct TrainMeta {
  int iterations = 0;
  double grad_norm = 0.0;
  double l2 = 0.0;
  bool converged = false;
  double final_loss = 0.0;
};

/// Linear score w . phi(x, a) with a logistic link.
struct LinearModel {
  FeatureMap feature_map;
  std::vector<double> weights;
  TrainMeta meta;

  LinearModel() : weights(FeatureMap().dim(), 0.0) {}
  LinearModel(FeatureMap fm, std::vector<double> w);

  double score(Context x, Action a) const;
  double predict_prob(Context x, Action a) const;
};

double predict_prob(const LinearModel& m, Context x, Action a);

enum class StepRule { Fixed, Backtracking, Newton };

struct TrainConfig {
  double l2 = 1e-3;
  int max_iters = 5000;
  /// Gradient inf-norm threshold, scaled by max(1, total row weight).
  double tol = 1e-8;
  StepRule step_rule = StepRule::Newton;
  double fixed_step = 1.0;

  void validate() const;
};

/// One supervised row. Targets in [0,1] are allowed; the loss is linear in the
/// target so a soft target t is the same as weights t and 1-t on labels 1, 0.
struct TrainRow {
  Context x;
  Action a;
  double target = 0.0;
  double weight = 1.0;
};

/// Weighted log-loss sum plus (l2/2)*||w_nonbias||^2.
///
/// Rows are aggregated by (x, a) at construction, so duplicating a row and
/// doubling its weight produce the same objective exactly.
class LogisticObjective {
 public:
  LogisticObjective(std::span<const TrainRow> rows, const FeatureMap& fm, double l2);

  int dim() const { return static_cast<int>(features_.cols()); }
  double total_weight() const { return total_weight_; }

  double value(const Eigen::VectorXd& w) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& w) const;

 private:
  Eigen::MatrixXd features_;   // one row per distinct (x, a)
  Eigen::VectorXd pos_;        // normalized weight on label 1
  Eigen::VectorXd neg_;        // normalized weight on label 0
  Eigen::VectorXd penalized_;  // 1 on non-bias coordinates
  double l2_;
  double total_weight_ = 0.0;
};

LinearModel train_logistic(std::span<const TrainRow> rows, const FeatureMap& fm,
                           const TrainConfig& cfg);

double sigmoid(double s);
/// log(1 + exp(s)) without overflow.
double softplus(double s);

const char* to_string(StepRule r);
StepRule parse_step_rule(std::string_view s);

nlohmann::json to_json(const LinearModel& m);
LinearModel model_from_json(const nlohmann::json& j);

}  // namespace csi
