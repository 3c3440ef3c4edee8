#include "csi/learners.hpp"

#include <cmath>
#include <map>
#include <tuple>

namespace csi {

const char* to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::Dm: return "dm";
    case LearnerKind::CsiSampling: return "csi_sampling";
    case LearnerKind::CsiExpect: return "csi_expect";
    case LearnerKind::LsIps: return "ls_ips";
  }
  return "unknown";
}

LearnerKind parse_learner_kind(std::string_view s) {
  if (s == "dm") return LearnerKind::Dm;
  if (s == "csi_sampling") return LearnerKind::CsiSampling;
  if (s == "csi_expect") return LearnerKind::CsiExpect;
  if (s == "ls_ips") return LearnerKind::LsIps;
  throw ConfigError("unknown learner '" + std::string(s) + "'");
}

void LearnerSpec::validate() const {
  train_cfg.validate();
  if (kind == LearnerKind::LsIps && !(ls_lambda > 0.0 && std::isfinite(ls_lambda))) {
    throw ConfigError("ls_lambda must be > 0");
  }
}

LinearModel train_dm(std::span<const LoggedSample> data, const LearnerSpec& spec) {
  if (data.empty()) throw PreconditionError("train_dm needs a nonempty dataset");
  spec.validate();
  const std::vector<TrainRow> rows = to_train_rows(data);
  return train_logistic(rows, spec.feature_map, spec.train_cfg);
}

LinearModel train_csi(std::span<const LoggedSample> data, const Policy& pi0,
                      CsiVariant variant, const LearnerSpec& spec, Rng& rng) {
  spec.validate();
  if (count_positives(data) == 0) {
    throw PreconditionError("csi transform is empty: dataset has no positive samples");
  }
  const std::vector<CsiExample> csi = variant == CsiVariant::Sampling
                                          ? csi_transform_sampling(data, pi0, rng)
                                          : csi_transform_expect(data, pi0);
  const std::vector<TrainRow> rows = to_train_rows(csi);
  return train_logistic(rows, spec.feature_map, spec.train_cfg);
}

Policy greedy_policy(const LinearModel& m) {
  return Policy::greedy(std::make_shared<const LinearModel>(m));
}

Policy greedy_policy(std::shared_ptr<const LinearModel> m) {
  return Policy::greedy(std::move(m));
}

LsIpsObjective::LsIpsObjective(std::span<const LoggedSample> data, const FeatureMap& fm,
                               double lambda)
    : dim_(fm.dim()), lambda_(lambda), n_(static_cast<double>(data.size())) {
  if (data.empty()) throw PreconditionError("ls-ips needs a nonempty dataset");
  if (!(lambda > 0.0)) throw ConfigError("ls_lambda must be > 0");
  // (x, a, propensity) -> count, positives only; negatives contribute log(1) = 0.
  std::map<std::tuple<int, int, double>, double> agg;
  for (const LoggedSample& s : data) {
    if (!(s.propensity > 0.0)) {
      throw CoverageError("logged propensity must be > 0 for importance weighting");
    }
    if (s.reward == 1) agg[{s.x.index(), s.a.index(), s.propensity}] += 1.0;
  }
  std::map<int, std::size_t> block_of;
  std::vector<double> phi(dim_);
  for (const auto& [key, count] : agg) {
    const auto [x, a, p] = key;
    auto [it, fresh] = block_of.try_emplace(x, blocks_.size());
    if (fresh) {
      ContextBlock b;
      b.features.resize(kNumActions, dim_);
      for (int act = 0; act < kNumActions; ++act) {
        fm.featurize(Context(x), Action(act), phi);
        for (int d = 0; d < dim_; ++d) b.features(act, d) = phi[d];
      }
      blocks_.push_back(std::move(b));
    }
    blocks_[it->second].groups.push_back({a, 1.0 / p, count});
  }
}

Eigen::VectorXd LsIpsObjective::log_softmax(const ContextBlock& b,
                                            const Eigen::VectorXd& theta) const {
  Eigen::VectorXd s = b.features * theta;
  const double top = s.maxCoeff();
  const double lse = top + std::log((s.array() - top).exp().sum());
  return s.array() - lse;
}

double LsIpsObjective::value(const Eigen::VectorXd& theta) const {
  double total = 0.0;
  for (const ContextBlock& b : blocks_) {
    const Eigen::VectorXd logp = log_softmax(b, theta);
    for (const Group& g : b.groups) {
      const double w = std::exp(logp[g.action]) * g.inv_propensity;
      total += g.count * std::log1p(lambda_ * w) / lambda_;
    }
  }
  return total / n_;
}

Eigen::VectorXd LsIpsObjective::gradient(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim_);
  for (const ContextBlock& b : blocks_) {
    const Eigen::VectorXd pi = log_softmax(b, theta).array().exp();
    // d/dtheta (1/lambda) log(1 + lambda w) = w / (1 + lambda w) * grad log pi(a|x)
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(kNumActions);
    double coef_total = 0.0;
    for (const Group& g : b.groups) {
      const double w = pi[g.action] * g.inv_propensity;
      const double c = g.count * w / (1.0 + lambda_ * w);
      coef[g.action] += c;
      coef_total += c;
    }
    grad += b.features.transpose() * (coef - coef_total * pi);
  }
  return grad / n_;
}

namespace {
constexpr double kMaxLsStep = 1e6;
}  // namespace

Policy train_ls_ips(std::span<const LoggedSample> data, const LearnerSpec& spec) {
  spec.validate();
  const LsIpsObjective obj(data, spec.feature_map, spec.ls_lambda);
  const TrainConfig& cfg = spec.train_cfg;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(obj.dim());
  double value = obj.value(theta);
  Eigen::VectorXd g = obj.gradient(theta);
  int it = 0;
  double last_step = 0.5;
  for (; it < cfg.max_iters; ++it) {
    const double gg = g.squaredNorm();
    if (g.lpNorm<Eigen::Infinity>() <= cfg.tol) break;
    // Each search starts from twice the previously accepted step.
    double step = std::min(2.0 * last_step, kMaxLsStep);
    bool accepted = false;
    for (int h = 0; h < 60; ++h, step *= 0.5) {
      const Eigen::VectorXd trial = theta + step * g;
      const double v = obj.value(trial);
      if (!std::isfinite(v)) continue;
      if (v >= value + 1e-4 * step * gg) {
        last_step = step;
        theta = trial;
        value = v;
        accepted = true;
        break;
      }
    }
    if (!std::isfinite(value)) throw NumericalError("non-finite ls-ips objective", it + 1);
    if (!accepted) break;
    g = obj.gradient(theta);
  }

  auto model = std::make_shared<LinearModel>(
      spec.feature_map, std::vector<double>(theta.data(), theta.data() + theta.size()));
  model->meta.iterations = it;
  model->meta.grad_norm = g.lpNorm<Eigen::Infinity>();
  model->meta.converged = model->meta.grad_norm <= cfg.tol;
  model->meta.final_loss = -value;
  return Policy::softmax(std::move(model), 1.0, SoftmaxLink::Logit);
}

Policy LearnedModel::greedy() const { return greedy_policy(model); }

Policy LearnedModel::softmax(double alpha) const {
  return Policy::softmax(std::make_shared<const LinearModel>(model), alpha,
                         kind == LearnerKind::LsIps ? SoftmaxLink::Logit
                                                    : SoftmaxLink::Probability);
}

LearnedModel train_learner(std::span<const LoggedSample> data, const Policy* pi0,
                           const LearnerSpec& spec, Rng& rng) {
  const bool needs_pi0 =
      spec.kind == LearnerKind::CsiSampling || spec.kind == LearnerKind::CsiExpect;
  if (needs_pi0 && pi0 == nullptr) {
    throw PreconditionError("csi learners need the logging policy");
  }
  switch (spec.kind) {
    case LearnerKind::Dm:
      return {spec.kind, train_dm(data, spec), 0.0};
    case LearnerKind::CsiSampling:
      return {spec.kind, train_csi(data, *pi0, CsiVariant::Sampling, spec, rng), 0.0};
    case LearnerKind::CsiExpect:
      return {spec.kind, train_csi(data, *pi0, CsiVariant::Expect, spec, rng), 0.0};
    case LearnerKind::LsIps:
      return {spec.kind, *train_ls_ips(data, spec).model(), spec.ls_lambda};
  }
  throw ConfigError("unknown learner kind");
}

nlohmann::json to_json(const LearnedModel& m) {
  nlohmann::json j = to_json(m.model);
  j["learner_kind"] = to_string(m.kind);
  if (m.kind == LearnerKind::LsIps) j["ls_lambda"] = m.ls_lambda;
  return j;
}

LearnedModel learned_model_from_json(const nlohmann::json& j) {
  LearnedModel m;
  try {
    m.kind = j.contains("learner_kind")
                 ? parse_learner_kind(j.at("learner_kind").get<std::string>())
                 : LearnerKind::Dm;
    if (m.kind == LearnerKind::LsIps) m.ls_lambda = j.at("ls_lambda").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model json: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(e.what());
  }
  m.model = model_from_json(j);
  return m;
}

double ips_estimate(std::span<const LoggedSample> data, const Policy& pi) {
  if (data.empty()) throw PreconditionError("ips_estimate needs data");
  double total = 0.0;
  for (const LoggedSample& s : data) {
    if (!(s.propensity > 0.0)) throw CoverageError("zero propensity in logged data");
    if (s.reward == 1) total += pi.probs(s.x)[s.a.index()] / s.propensity;
  }
  return total / static_cast<double>(data.size());
}

}  // namespace csi
