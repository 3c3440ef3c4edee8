#include "csi/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace csi {

FeatureMap::FeatureMap() : FeatureMap([] {
  std::array<bool, kMaskBits> m;
  m.fill(true);
  return m;
}()) {}

FeatureMap::FeatureMap(std::array<bool, kMaskBits> mask) : mask_(mask) {
  for (int i = 0; i < kContextBits; ++i)
    if (mask_[i]) ctx_.push_back(i);
  for (int j = 0; j < kActionBits; ++j)
    if (mask_[kContextBits + j]) act_.push_back(j);
  const int nc = static_cast<int>(ctx_.size());
  const int na = static_cast<int>(act_.size());
  dim_ = nc + na + nc * na + 1;
}

FeatureMap FeatureMap::parse(std::string_view mask) {
  if (static_cast<int>(mask.size()) != kMaskBits) {
    throw ParseError("feature mask must have 12 characters, got '" +
                     std::string(mask) + "'");
  }
  std::array<bool, kMaskBits> m{};
  for (int i = 0; i < kMaskBits; ++i) {
    if (mask[i] != '0' && mask[i] != '1') {
      throw ParseError("invalid feature mask '" + std::string(mask) + "'");
    }
    m[i] = mask[i] == '1';
  }
  return FeatureMap(m);
}

std::string FeatureMap::to_string() const {
  std::string s(kMaskBits, '0');
  for (int i = 0; i < kMaskBits; ++i) s[i] = mask_[i] ? '1' : '0';
  return s;
}

void FeatureMap::featurize(Context x, Action a, std::span<double> out) const {
  if (static_cast<int>(out.size()) != dim_) {
    throw PreconditionError("feature buffer has wrong size");
  }
  std::size_t k = 0;
  for (int i : ctx_) out[k++] = x.bit(i);
  for (int j : act_) out[k++] = a.bit(j);
  for (int i : ctx_)
    for (int j : act_) out[k++] = x.bit(i) * a.bit(j);
  out[k] = 1.0;
}

std::vector<double> FeatureMap::featurize(Context x, Action a) const {
  std::vector<double> v(dim_);
  featurize(x, a, v);
  return v;
}

double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double softplus(double s) {
  return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s)));
}

LinearModel::LinearModel(FeatureMap fm, std::vector<double> w)
    : feature_map(std::move(fm)), weights(std::move(w)) {
  if (static_cast<int>(weights.size()) != feature_map.dim()) {
    throw PreconditionError("weight vector has dimension " +
                            std::to_string(weights.size()) + ", feature map needs " +
                            std::to_string(feature_map.dim()));
  }
  for (double v : weights) {
    if (!std::isfinite(v)) throw NumericalError("non-finite model weight", 0);
  }
}

double LinearModel::score(Context x, Action a) const {
  std::array<double, 64> buf{};
  std::span<double> phi(buf.data(), feature_map.dim());
  feature_map.featurize(x, a, phi);
  double s = 0.0;
  for (std::size_t k = 0; k < phi.size(); ++k) s += weights[k] * phi[k];
  return s;
}

double LinearModel::predict_prob(Context x, Action a) const {
  return sigmoid(score(x, a));
}

double predict_prob(const LinearModel& m, Context x, Action a) {
  return m.predict_prob(x, a);
}

void TrainConfig::validate() const {
  if (!(l2 >= 0.0) || !std::isfinite(l2)) throw ConfigError("l2 must be >= 0");
  if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
  if (max_iters < 0) throw ConfigError("max_iters must be >= 0");
  if (step_rule == StepRule::Fixed && !(fixed_step > 0.0)) {
    throw ConfigError("fixed_step must be > 0");
  }
}

LogisticObjective::LogisticObjective(std::span<const TrainRow> rows,
                                     const FeatureMap& fm, double l2)
    : l2_(l2) {
  // [x][a] -> (weight on label 1, weight on label 0)
  std::vector<std::pair<double, double>> agg(kNumContexts * kNumActions, {0.0, 0.0});
  std::vector<bool> seen(agg.size(), false);
  for (const TrainRow& r : rows) {
    if (!(r.weight >= 0.0) || !std::isfinite(r.weight)) {
      throw PreconditionError("row weights must be finite and nonnegative");
    }
    if (!(r.target >= 0.0 && r.target <= 1.0)) {
      throw PreconditionError("row targets must lie in [0,1]");
    }
    const std::size_t key = r.x.index() * kNumActions + r.a.index();
    agg[key].first += r.weight * r.target;
    agg[key].second += r.weight * (1.0 - r.target);
    seen[key] = true;
    total_weight_ += r.weight;
  }
  if (!(total_weight_ > 0.0)) throw PreconditionError("no training weight");

  const int n = static_cast<int>(std::count(seen.begin(), seen.end(), true));
  features_.resize(n, fm.dim());
  pos_.resize(n);
  neg_.resize(n);
  std::vector<double> phi(fm.dim());
  int k = 0;
  for (std::size_t key = 0; key < agg.size(); ++key) {
    if (!seen[key]) continue;
    fm.featurize(Context(static_cast<int>(key / kNumActions)),
                 Action(static_cast<int>(key % kNumActions)), phi);
    for (int d = 0; d < fm.dim(); ++d) features_(k, d) = phi[d];
    pos_[k] = agg[key].first;
    neg_[k] = agg[key].second;
    ++k;
  }
  penalized_ = Eigen::VectorXd::Ones(fm.dim());
  penalized_[fm.bias_index()] = 0.0;
}

double LogisticObjective::value(const Eigen::VectorXd& w) const {
  const Eigen::VectorXd s = features_ * w;
  double loss = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    loss += pos_[k] * softplus(-s[k]) + neg_[k] * softplus(s[k]);
  }
  return loss + 0.5 * l2_ * w.cwiseProduct(penalized_).squaredNorm();
}

Eigen::VectorXd LogisticObjective::gradient(const Eigen::VectorXd& w) const {
  const Eigen::VectorXd s = features_ * w;
  Eigen::VectorXd r(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    r[k] = (pos_[k] + neg_[k]) * sigmoid(s[k]) - pos_[k];
  }
  return features_.transpose() * r + l2_ * w.cwiseProduct(penalized_);
}

Eigen::MatrixXd LogisticObjective::hessian(const Eigen::VectorXd& w) const {
  const Eigen::VectorXd s = features_ * w;
  Eigen::VectorXd c(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    const double p = sigmoid(s[k]);
    c[k] = (pos_[k] + neg_[k]) * p * (1.0 - p);
  }
  Eigen::MatrixXd h = features_.transpose() * c.asDiagonal() * features_;
  h.diagonal() += l2_ * penalized_;
  return h;
}

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 60;

Eigen::VectorXd descent_direction(const LogisticObjective& obj, const Eigen::VectorXd& w,
                                  const Eigen::VectorXd& g, StepRule rule) {
  if (rule != StepRule::Newton) return -g;
  Eigen::MatrixXd h = obj.hessian(w);
  // Tiny ridge keeps the unpenalized directions solvable on separable data.
  h.diagonal().array() += 1e-12;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  if (ldlt.info() == Eigen::Success) {
    Eigen::VectorXd d = -ldlt.solve(g);
    if (d.allFinite() && d.dot(g) < 0.0) return d;
  }
  return -g;
}

}  // namespace

LinearModel train_logistic(std::span<const TrainRow> rows, const FeatureMap& fm,
                           const TrainConfig& cfg) {
  cfg.validate();
  LogisticObjective obj(rows, fm, cfg.l2);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(fm.dim());
  double loss = obj.value(w);
  Eigen::VectorXd g = obj.gradient(w);
  TrainMeta meta;
  meta.l2 = cfg.l2;

  const double tol = cfg.tol * std::max(1.0, obj.total_weight());
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= tol) break;
    const Eigen::VectorXd d = descent_direction(obj, w, g, cfg.step_rule);

    if (cfg.step_rule == StepRule::Fixed) {
      w += cfg.fixed_step * d;
      loss = obj.value(w);
      if (!std::isfinite(loss)) throw NumericalError("non-finite training loss", it + 1);
      g = obj.gradient(w);
      continue;
    }

    const double slope = g.dot(d);
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
      const Eigen::VectorXd trial = w + step * d;
      const double trial_loss = obj.value(trial);
      if (!std::isfinite(trial_loss)) continue;
      if (trial_loss < loss && trial_loss <= loss + kArmijo * step * slope) {
        w = trial;
        loss = trial_loss;
        accepted = true;
        break;
      }
    }
    if (!std::isfinite(loss)) throw NumericalError("non-finite training loss", it + 1);
    if (!accepted) break;  // no representable decrease left along d
    g = obj.gradient(w);
  }

  meta.iterations = it;
  meta.grad_norm = g.lpNorm<Eigen::Infinity>();
  meta.converged = meta.grad_norm <= tol;
  meta.final_loss = loss;
  LinearModel m(fm, std::vector<double>(w.data(), w.data() + w.size()));
  m.meta = meta;
  return m;
}

const char* to_string(StepRule r) {
  switch (r) {
    case StepRule::Fixed: return "fixed";
    case StepRule::Backtracking: return "backtracking";
    case StepRule::Newton: return "newton";
  }
  return "unknown";
}

StepRule parse_step_rule(std::string_view s) {
  if (s == "fixed") return StepRule::Fixed;
  if (s == "backtracking") return StepRule::Backtracking;
  if (s == "newton") return StepRule::Newton;
  throw ConfigError("unknown step rule '" + std::string(s) + "'");
}

nlohmann::json to_json(const LinearModel& m) {
  return {
      {"feature_mask", m.feature_map.to_string()},
      {"weights", m.weights},
      {"train_meta",
       {{"iterations", m.meta.iterations},
        {"final_grad_norm", m.meta.grad_norm},
        {"l2", m.meta.l2},
        {"converged", m.meta.converged}}},
  };
}

LinearModel model_from_json(const nlohmann::json& j) {
  try {
    LinearModel m(FeatureMap::parse(j.at("feature_mask").get<std::string>()),
                  j.at("weights").get<std::vector<double>>());
    if (j.contains("train_meta")) {
      const auto& t = j.at("train_meta");
      m.meta.iterations = t.value("iterations", 0);
      m.meta.grad_norm = t.value("final_grad_norm", 0.0);
      m.meta.l2 = t.value("l2", 0.0);
      m.meta.converged = t.value("converged", false);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model json: ") + e.what());
  }
}

}  // namespace csi
