#include "csi/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

namespace csi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed-derivation tags.
constexpr std::uint64_t kEnvTag = 1;
constexpr std::uint64_t kUniformLogTag = 2;
constexpr std::uint64_t kPolicyLogTag = 3;
constexpr std::uint64_t kLearnerTag = 4;
constexpr std::uint64_t kSplitTag = 5;
constexpr std::uint64_t kTrainTransformTag = 6;
constexpr std::uint64_t kValTransformTag = 7;
constexpr std::uint64_t kFullTransformTag = 8;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Split {
  std::vector<LoggedSample> train;
  std::vector<LoggedSample> val;
};

Split split_holdout(std::span<const LoggedSample> data, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {kSplitTag}));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * data.size()));
  std::sort(idx.begin(), idx.begin() + n_val);
  std::sort(idx.begin() + n_val, idx.end());
  Split s;
  for (std::size_t k = 0; k < idx.size(); ++k) (k < n_val ? s.val : s.train).push_back(data[idx[k]]);
  return s;
}

std::vector<TrainRow> rows_for(LearnerKind kind, std::span<const LoggedSample> data,
                               const Policy& pi0, std::uint64_t seed) {
  switch (kind) {
    case LearnerKind::Dm:
      return to_train_rows(data);
    case LearnerKind::CsiSampling: {
      Rng rng(seed);
      return to_train_rows(csi_transform_sampling(data, pi0, rng));
    }
    case LearnerKind::CsiExpect:
      return to_train_rows(csi_transform_expect(data, pi0));
    case LearnerKind::LsIps:
      break;
  }
  throw PreconditionError("not a logistic learner");
}

struct Fitted {
  std::shared_ptr<const LinearModel> model;
  double l2 = kNaN;
};

// Sweeps l2 on a held-out split by weighted validation log-loss, then refits
// on all of `data` with the selected value.
Fitted fit_logistic_learner(LearnerKind kind, std::span<const LoggedSample> data,
                            const Policy& pi0, const FeatureMap& fm,
                            const ExperimentConfig& cfg, std::uint64_t seed) {
  LearnerSpec spec{kind, fm, cfg.train, 0.01};
  double chosen = cfg.l2_grid.front();
  if (cfg.l2_grid.size() > 1) {
    const Split split = split_holdout(data, cfg.validation_fraction, seed);
    const auto train_rows = rows_for(kind, split.train, pi0, derive_seed(seed, {kTrainTransformTag}));
    const auto val_rows = rows_for(kind, split.val, pi0, derive_seed(seed, {kValTransformTag}));
    if (!train_rows.empty() && !val_rows.empty()) {
      const LogisticObjective val_loss(val_rows, fm, 0.0);
      double best = std::numeric_limits<double>::infinity();
      for (double l2 : cfg.l2_grid) {
        TrainConfig tc = cfg.train;
        tc.l2 = l2;
        const LinearModel m = train_logistic(train_rows, fm, tc);
        const Eigen::Map<const Eigen::VectorXd> w(m.weights.data(), m.weights.size());
        const double loss = val_loss.value(w);
        if (loss < best) {
          best = loss;
          chosen = l2;
        }
      }
    }
  }
  spec.train_cfg.l2 = chosen;
  LinearModel m;
  switch (kind) {
    case LearnerKind::Dm:
      m = train_dm(data, spec);
      break;
    case LearnerKind::CsiSampling: {
      Rng rng(derive_seed(seed, {kFullTransformTag}));
      m = train_csi(data, pi0, CsiVariant::Sampling, spec, rng);
      break;
    }
    case LearnerKind::CsiExpect: {
      Rng unused(0);
      m = train_csi(data, pi0, CsiVariant::Expect, spec, unused);
      break;
    }
    case LearnerKind::LsIps:
      throw PreconditionError("not a logistic learner");
  }
  return {std::make_shared<const LinearModel>(std::move(m)), chosen};
}

struct FittedIps {
  Policy policy;
  double lambda;
};

// Sweeps lambda by the IPS estimate of the softmax policy on held-out data.
FittedIps fit_ls_ips(std::span<const LoggedSample> data, const FeatureMap& fm,
                     const ExperimentConfig& cfg, std::uint64_t seed) {
  LearnerSpec spec{LearnerKind::LsIps, fm, cfg.ls_train, cfg.ls_lambda_grid.front()};
  if (cfg.ls_lambda_grid.size() > 1) {
    const Split split = split_holdout(data, cfg.validation_fraction, seed);
    if (!split.train.empty() && !split.val.empty()) {
      LearnerSpec trial = spec;
      double best = -std::numeric_limits<double>::infinity();
      for (double lambda : cfg.ls_lambda_grid) {
        trial.ls_lambda = lambda;
        const double v = ips_estimate(split.val, train_ls_ips(split.train, trial));
        if (v > best) {
          best = v;
          spec.ls_lambda = lambda;
        }
      }
    }
  }
  return {train_ls_ips(data, spec), spec.ls_lambda};
}

CellRecord record(const CellPlan& plan, std::string learner, double value, double l2,
                  double extra, bool converged) {
  return {plan.env_seed, plan.n_samples, std::move(learner), value, l2, extra, converged};
}

LearnerKind first_stage_for(FirstStage fs, std::uint64_t index) {
  switch (fs) {
    case FirstStage::Dm: return LearnerKind::Dm;
    case FirstStage::CsiExpect: return LearnerKind::CsiExpect;
    case FirstStage::Alternate: return index % 2 == 0 ? LearnerKind::Dm : LearnerKind::CsiExpect;
  }
  return LearnerKind::Dm;
}

struct Logs {
  std::vector<LoggedSample> second_stage;
  Policy logging_policy;
};

// Uniform log -> first-stage model -> epsilon-greedy log.
Logs two_stage_logs(const Environment& env, const CellPlan& plan, const ExperimentConfig& cfg) {
  const Policy uniform = Policy::uniform();
  Rng log1(plan.uniform_log_seed);
  const auto first = collect_dataset(env, uniform, plan.n_samples, log1);
  const Fitted first_model = fit_logistic_learner(plan.first_stage, first, uniform, FeatureMap::full(),
                                                  cfg, derive_seed(plan.learner_seed, {0}));
  Policy pi1 = Policy::epsilon_greedy(first_model.model, cfg.epsilon);
  Rng log2(plan.policy_log_seed);
  auto second = collect_dataset(env, pi1, plan.n_samples, log2);
  return {std::move(second), std::move(pi1)};
}

std::vector<CellRecord> run_full_cell(const Environment& env, const CellPlan& plan,
                                      const ExperimentConfig& cfg) {
  const Logs logs = two_stage_logs(env, plan, cfg);
  std::vector<CellRecord> out;
  out.push_back(record(plan, "oracle", normalized_value(env, oracle_greedy_policy(env)), kNaN,
                       kNaN, true));
  std::uint64_t k = 1;
  for (LearnerKind kind : cfg.learners) {
    const std::uint64_t seed = derive_seed(plan.learner_seed, {k++});
    if (kind == LearnerKind::LsIps) {
      const FittedIps fit = fit_ls_ips(logs.second_stage, FeatureMap::full(), cfg, seed);
      const auto& model = fit.policy.model();
      out.push_back(record(plan, "ls_ips", normalized_value(env, greedy_policy(model)), kNaN,
                           fit.lambda, model->meta.converged));
      out.push_back(record(plan, "ls_ips_softmax", normalized_value(env, fit.policy), kNaN,
                           fit.lambda, model->meta.converged));
      continue;
    }
    const Fitted fit = fit_logistic_learner(kind, logs.second_stage, logs.logging_policy,
                                            FeatureMap::full(), cfg, seed);
    out.push_back(record(plan, to_string(kind), normalized_value(env, greedy_policy(fit.model)),
                         fit.l2, kNaN, fit.model->meta.converged));
  }
  return out;
}

std::vector<CellRecord> run_subset_cell(const Environment& env, const CellPlan& plan,
                                        const ExperimentConfig& cfg) {
  const Logs logs = two_stage_logs(env, plan, cfg);
  std::vector<CellRecord> out;
  out.push_back(record(plan, "oracle", normalized_value(env, oracle_greedy_policy(env)), kNaN,
                       kNaN, true));
  const std::tuple<const char*, LearnerKind, FeatureMap> runs[] = {
      {"dm_full", LearnerKind::Dm, FeatureMap::full()},
      {"dm_subset", LearnerKind::Dm, cfg.subset_mask},
      {"csi_subset", LearnerKind::CsiExpect, cfg.subset_mask},
      {"csi_full", LearnerKind::CsiExpect, FeatureMap::full()},
  };
  // dm_full and dm_subset share a seed so identical masks give identical cells.
  for (const auto& [name, kind, fm] : runs) {
    const std::uint64_t seed = derive_seed(plan.learner_seed, {static_cast<std::uint64_t>(kind) + 1});
    const Fitted fit = fit_logistic_learner(kind, logs.second_stage, logs.logging_policy, fm, cfg, seed);
    out.push_back(record(plan, name, normalized_value(env, greedy_policy(fit.model)), fit.l2,
                         kNaN, fit.model->meta.converged));
  }
  return out;
}

void sort_canonical(std::vector<CellRecord>& cells) {
  std::stable_sort(cells.begin(), cells.end(), [](const CellRecord& a, const CellRecord& b) {
    return std::tie(a.env_seed, a.n_samples, a.learner) <
           std::tie(b.env_seed, b.n_samples, b.learner);
  });
}

std::uint64_t checked_u64(const nlohmann::json& j, const char* key) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
    throw ConfigError(std::string(key) + " must be a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base) {
  base.l2 = j.value("l2", base.l2);
  base.max_iters = j.value("max_iters", base.max_iters);
  base.tol = j.value("tol", base.tol);
  if (j.contains("step_rule")) base.step_rule = parse_step_rule(j.at("step_rule").get<std::string>());
  base.fixed_step = j.value("fixed_step", base.fixed_step);
  base.validate();
  return base;
}

nlohmann::json to_json(const TrainConfig& t) {
  return {{"l2", t.l2},
          {"max_iters", t.max_iters},
          {"tol", t.tol},
          {"step_rule", to_string(t.step_rule)},
          {"fixed_step", t.fixed_step}};
}

FirstStage parse_first_stage(std::string_view s) {
  if (s == "dm") return FirstStage::Dm;
  if (s == "csi_expect") return FirstStage::CsiExpect;
  if (s == "alternate") return FirstStage::Alternate;
  throw ConfigError("first_stage_learner must be dm, csi_expect or alternate");
}

const char* to_string(FirstStage f) {
  switch (f) {
    case FirstStage::Dm: return "dm";
    case FirstStage::CsiExpect: return "csi_expect";
    case FirstStage::Alternate: return "alternate";
  }
  return "alternate";
}

ExperimentResult run_plans(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<CellPlan> plans = plan_cells(cfg);
  std::vector<std::vector<CellRecord>> results(plans.size());
  std::vector<std::string> errors(plans.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < plans.size();) {
      try {
        results[i] = run_cell(plans[i], cfg);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown failure";
      }
    }
  };
  const int threads = std::max(1, std::min<int>(cfg.parallelism, static_cast<int>(plans.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  ExperimentResult out;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    if (!errors[i].empty()) {
      out.failures.push_back({plans[i].env_seed, plans[i].n_samples, errors[i]});
      continue;
    }
    out.cells.insert(out.cells.end(), results[i].begin(), results[i].end());
  }
  sort_canonical(out.cells);
  std::stable_sort(out.failures.begin(), out.failures.end(), [](const auto& a, const auto& b) {
    return std::tie(a.env_seed, a.n_samples) < std::tie(b.env_seed, b.n_samples);
  });
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_environments < 1) throw ConfigError("n_environments must be >= 1");
  if (sample_sizes.empty()) throw ConfigError("sample_sizes must not be empty");
  for (std::size_t n : sample_sizes)
    if (n < 100) throw ConfigError("sample sizes must be >= 100");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0,1]");
  if (learners.empty() && scenario == Scenario::Full) throw ConfigError("no learners configured");
  if (l2_grid.empty()) throw ConfigError("l2_grid must not be empty");
  for (double l2 : l2_grid)
    if (!(l2 >= 0.0)) throw ConfigError("l2_grid values must be >= 0");
  if (ls_lambda_grid.empty()) throw ConfigError("ls_lambda_grid must not be empty");
  for (double l : ls_lambda_grid)
    if (!(l > 0.0)) throw ConfigError("ls_lambda_grid values must be > 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0,1)");
  }
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  train.validate();
  ls_train.validate();
  env.validate();
}

void ExperimentConfig::apply_full_scale() {
  n_environments = 100;
  sample_sizes = {10000, 100000, 500000};
}

const char* to_string(Scenario s) {
  return s == Scenario::Full ? "full" : "feature_subset";
}

Scenario parse_scenario(std::string_view s) {
  if (s == "full") return Scenario::Full;
  if (s == "feature_subset") return Scenario::FeatureSubset;
  throw ConfigError("scenario must be full or feature_subset");
}

const char* to_string(OutputFormat f) {
  return f == OutputFormat::Csv ? "csv" : "markdown";
}

OutputFormat parse_output_format(std::string_view s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "markdown") return OutputFormat::Markdown;
  throw ConfigError("format must be csv or markdown");
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  static const char* const kKnown[] = {
      "master_seed", "n_environments", "sample_sizes", "epsilon", "first_stage_learner",
      "scenario", "subset_mask", "learners", "l2_grid", "ls_lambda_grid",
      "validation_fraction", "train", "ls_train", "env", "output", "format", "parallelism"};
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& item : j.items()) {
    if (std::find_if(std::begin(kKnown), std::end(kKnown),
                     [&](const char* k) { return item.key() == k; }) == std::end(kKnown)) {
      throw ConfigError("unknown config field '" + item.key() + "'");
    }
  }
  ExperimentConfig c;
  try {
    if (j.contains("master_seed")) c.master_seed = checked_u64(j.at("master_seed"), "master_seed");
    c.n_environments = j.value("n_environments", c.n_environments);
    if (j.contains("sample_sizes")) c.sample_sizes = j.at("sample_sizes").get<std::vector<std::size_t>>();
    c.epsilon = j.value("epsilon", c.epsilon);
    if (j.contains("first_stage_learner")) {
      c.first_stage_learner = parse_first_stage(j.at("first_stage_learner").get<std::string>());
    }
    if (j.contains("scenario")) c.scenario = parse_scenario(j.at("scenario").get<std::string>());
    if (j.contains("subset_mask")) {
      try {
        c.subset_mask = FeatureMap::parse(j.at("subset_mask").get<std::string>());
      } catch (const ParseError& e) {
        throw ConfigError(e.what());
      }
    }
    if (j.contains("learners")) {
      c.learners.clear();
      for (const auto& l : j.at("learners")) c.learners.push_back(parse_learner_kind(l.get<std::string>()));
    }
    if (j.contains("l2_grid")) c.l2_grid = j.at("l2_grid").get<std::vector<double>>();
    if (j.contains("ls_lambda_grid")) c.ls_lambda_grid = j.at("ls_lambda_grid").get<std::vector<double>>();
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    if (j.contains("ls_train")) c.ls_train = train_config_from_json(j.at("ls_train"), c.ls_train);
    if (j.contains("env")) c.env = env_config_from_json(j.at("env"));
    c.output = j.value("output", c.output);
    if (j.contains("format")) c.format = parse_output_format(j.at("format").get<std::string>());
    c.parallelism = j.value("parallelism", c.parallelism);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  std::vector<std::string> learners;
  for (LearnerKind k : c.learners) learners.emplace_back(to_string(k));
  return {{"master_seed", c.master_seed},
          {"n_environments", c.n_environments},
          {"sample_sizes", c.sample_sizes},
          {"epsilon", c.epsilon},
          {"first_stage_learner", to_string(c.first_stage_learner)},
          {"scenario", to_string(c.scenario)},
          {"subset_mask", c.subset_mask.to_string()},
          {"learners", learners},
          {"l2_grid", c.l2_grid},
          {"ls_lambda_grid", c.ls_lambda_grid},
          {"validation_fraction", c.validation_fraction},
          {"train", to_json(c.train)},
          {"ls_train", to_json(c.ls_train)},
          {"env", to_json(c.env)},
          {"output", c.output},
          {"format", to_string(c.format)},
          {"parallelism", c.parallelism}};
}

std::vector<Aggregate> ExperimentResult::aggregates() const {
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> groups;
  for (const CellRecord& c : cells) groups[{c.learner, c.n_samples}].push_back(c.normalized_reward);
  std::vector<Aggregate> out;
  for (const auto& [key, values] : groups) {
    Aggregate a;
    a.learner = key.first;
    a.n_samples = key.second;
    a.count = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(a.count);
    if (a.count < 2) {
      a.std_error = kNaN;
    } else {
      double ss = 0.0;
      for (double v : values) ss += (v - a.mean) * (v - a.mean);
      a.std_error = std::sqrt(ss / static_cast<double>(a.count - 1) / static_cast<double>(a.count));
    }
    out.push_back(a);
  }
  return out;
}

std::vector<CellPlan> plan_cells(const ExperimentConfig& cfg) {
  std::vector<CellPlan> plans;
  for (int e = 0; e < cfg.n_environments; ++e) {
    const auto env_index = static_cast<std::uint64_t>(e);
    const std::uint64_t env_seed = derive_seed(cfg.master_seed, {kEnvTag, env_index});
    for (std::size_t s = 0; s < cfg.sample_sizes.size(); ++s) {
      CellPlan p;
      p.env_seed = env_seed;
      p.n_samples = cfg.sample_sizes[s];
      p.uniform_log_seed = derive_seed(cfg.master_seed, {kUniformLogTag, env_index, s});
      p.policy_log_seed = derive_seed(cfg.master_seed, {kPolicyLogTag, env_index, s});
      p.learner_seed = derive_seed(cfg.master_seed, {kLearnerTag, env_index, s});
      p.first_stage = first_stage_for(cfg.first_stage_learner, env_index);
      plans.push_back(p);
    }
  }
  return plans;
}

std::vector<CellRecord> run_cell(const CellPlan& plan, const ExperimentConfig& cfg) {
  const Environment env = generate_environment(plan.env_seed, cfg.env);
  std::vector<CellRecord> out = cfg.scenario == Scenario::Full ? run_full_cell(env, plan, cfg)
                                                               : run_subset_cell(env, plan, cfg);
  sort_canonical(out);
  return out;
}

std::vector<CellRecord> run_single(std::uint64_t env_seed, std::size_t n,
                                   const ExperimentConfig& cfg) {
  cfg.validate();
  CellPlan p;
  p.env_seed = env_seed;
  p.n_samples = n;
  p.uniform_log_seed = derive_seed(env_seed, {kUniformLogTag, n});
  p.policy_log_seed = derive_seed(env_seed, {kPolicyLogTag, n});
  p.learner_seed = derive_seed(env_seed, {kLearnerTag, n});
  p.first_stage = first_stage_for(cfg.first_stage_learner, env_seed);
  return run_cell(p, cfg);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.scenario = Scenario::Full;
  return run_plans(c);
}

ExperimentResult run_feature_subset(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.scenario = Scenario::FeatureSubset;
  return run_plans(c);
}

ExperimentResult run(const ExperimentConfig& cfg) {
  return cfg.scenario == Scenario::Full ? run_experiment(cfg) : run_feature_subset(cfg);
}

std::string render_csv(const ExperimentResult& r) {
  std::ostringstream os;
  os << "env_seed,n_samples,learner,normalized_reward,l2,extra_hyper,converged\n";
  for (const CellRecord& c : r.cells) {
    os << c.env_seed << ',' << c.n_samples << ',' << c.learner << ','
       << format_double(c.normalized_reward) << ','
       << (std::isnan(c.l2) ? "" : format_double(c.l2)) << ','
       << (std::isnan(c.extra_hyper) ? "" : format_double(c.extra_hyper)) << ','
       << (c.converged ? "true" : "false") << '\n';
  }
  return os.str();
}

std::string render_markdown(const ExperimentResult& r, const ExperimentConfig& cfg) {
  const std::vector<Aggregate> aggs = r.aggregates();
  std::vector<std::size_t> sizes = cfg.sample_sizes;
  std::sort(sizes.begin(), sizes.end());
  std::vector<std::string> learners;
  for (const Aggregate& a : aggs)
    if (std::find(learners.begin(), learners.end(), a.learner) == learners.end())
      learners.push_back(a.learner);

  std::ostringstream os;
  os << "# Mean normalized reward (" << to_string(cfg.scenario) << ", "
     << cfg.n_environments << " environments, master_seed " << cfg.master_seed << ")\n\n";
  os << "| Learner |";
  for (std::size_t n : sizes) os << ' ' << n << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < sizes.size(); ++i) os << "---|";
  os << '\n';
  char buf[64];
  for (const std::string& l : learners) {
    os << "| " << l << " |";
    for (std::size_t n : sizes) {
      auto it = std::find_if(aggs.begin(), aggs.end(), [&](const Aggregate& a) {
        return a.learner == l && a.n_samples == n;
      });
      if (it == aggs.end()) {
        os << " - |";
      } else if (std::isnan(it->std_error)) {
        std::snprintf(buf, sizeof buf, " %.4f ± n/a |", it->mean);
        os << buf;
      } else {
        std::snprintf(buf, sizeof buf, " %.4f ± %.4f |", it->mean, it->std_error);
        os << buf;
      }
    }
    os << '\n';
  }
  if (!r.failures.empty()) {
    os << "\n## Failures\n\n";
    for (const CellFailure& f : r.failures) {
      os << "- env_seed " << f.env_seed << ", n " << f.n_samples << ": " << f.message << '\n';
    }
  }
  return os.str();
}

}  // namespace csi
