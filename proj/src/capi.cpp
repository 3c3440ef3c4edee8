#include "csi/csi.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "csi/bench.hpp"
#include "csi/env.hpp"
#include "csi/learners.hpp"
#include "csi/pipeline.hpp"

struct csi_env {
  csi::Environment env;
};
struct csi_policy {
  csi::Policy policy;
};
struct csi_dataset {
  std::vector<csi::LoggedSample> samples;
};
struct csi_model {
  csi::LearnedModel learned;
};
struct csi_experiment {
  csi::ExperimentConfig config;
  csi::ExperimentResult result;
  std::vector<std::string> failure_text;
};

namespace {

thread_local std::string g_last_error;

csi_status fail(csi_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

csi_status map_error(const csi::Error& e) {
  return fail(static_cast<csi_status>(static_cast<int>(e.code())), e.what());
}

template <class Fn>
csi_status guarded(Fn&& fn) {
  try {
    fn();
    return CSI_OK;
  } catch (const csi::Error& e) {
    return map_error(e);
  } catch (const nlohmann::json::exception& e) {
    return fail(CSI_ERR_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CSI_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CSI_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CSI_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_json(const char* text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw csi::ParseError(e.what());
  }
}

csi::Context context_arg(int index) { return csi::Context::checked(index); }
csi::Action action_arg(int index) { return csi::Action::checked(index); }

#define CSI_REQUIRE(cond)                                                   \
  do {                                                                      \
    if (!(cond)) return fail(CSI_ERR_INVALID_ARGUMENT, "null argument: " #cond); \
  } while (0)

}  // namespace

extern "C" {

const char* csi_status_name(csi_status status) {
  switch (status) {
    case CSI_OK: return "ok";
    case CSI_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CSI_ERR_CONFIG: return "configuration error";
    case CSI_ERR_POLICY: return "policy error";
    case CSI_ERR_COVERAGE: return "coverage violation";
    case CSI_ERR_PRECONDITION: return "precondition violation";
    case CSI_ERR_NUMERICAL: return "numerical error";
    case CSI_ERR_DEGENERATE_ENVIRONMENT: return "degenerate environment";
    case CSI_ERR_PARSE: return "parse error";
    case CSI_ERR_IO: return "i/o error";
    case CSI_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* csi_last_error(void) { return g_last_error.c_str(); }

void csi_string_free(char* s) { std::free(s); }

csi_status csi_env_generate(uint64_t seed, const char* config_json, csi_env** out) {
  CSI_REQUIRE(out);
  return guarded([&] {
    const csi::EnvConfig cfg =
        config_json ? csi::env_config_from_json(parse_json(config_json)) : csi::EnvConfig{};
    *out = new csi_env{csi::generate_environment(seed, cfg)};
  });
}

csi_status csi_env_from_json(const char* json, csi_env** out) {
  CSI_REQUIRE(json && out);
  return guarded([&] { *out = new csi_env{csi::environment_from_json(parse_json(json))}; });
}

csi_status csi_env_to_json(const csi_env* env, char** out) {
  CSI_REQUIRE(env && out);
  return guarded([&] { *out = dup_string(csi::to_json(env->env).dump(2)); });
}

csi_status csi_env_true_reward_prob(const csi_env* env, int context, int action, double* out) {
  CSI_REQUIRE(env && out);
  return guarded([&] {
    *out = csi::true_reward_prob(env->env, context_arg(context), action_arg(action));
  });
}

csi_status csi_env_policy_value(const csi_env* env, const csi_policy* pi, double* out) {
  CSI_REQUIRE(env && pi && out);
  return guarded([&] { *out = csi::policy_value(env->env, pi->policy); });
}

csi_status csi_env_normalized_value(const csi_env* env, const csi_policy* pi, double* out) {
  CSI_REQUIRE(env && pi && out);
  return guarded([&] { *out = csi::normalized_value(env->env, pi->policy); });
}

void csi_env_free(csi_env* env) { delete env; }

csi_status csi_model_from_json(const char* json, csi_model** out) {
  CSI_REQUIRE(json && out);
  return guarded([&] { *out = new csi_model{csi::learned_model_from_json(parse_json(json))}; });
}

csi_status csi_model_to_json(const csi_model* model, char** out) {
  CSI_REQUIRE(model && out);
  return guarded([&] { *out = dup_string(csi::to_json(model->learned).dump(2)); });
}

csi_status csi_model_predict(const csi_model* model, int context, int action, double* out) {
  CSI_REQUIRE(model && out);
  return guarded([&] {
    *out = model->learned.model.predict_prob(context_arg(context), action_arg(action));
  });
}

void csi_model_free(csi_model* model) { delete model; }

csi_status csi_policy_uniform(csi_policy** out) {
  CSI_REQUIRE(out);
  return guarded([&] { *out = new csi_policy{csi::Policy::uniform()}; });
}

csi_status csi_policy_greedy(const csi_model* model, csi_policy** out) {
  CSI_REQUIRE(model && out);
  return guarded([&] { *out = new csi_policy{model->learned.greedy()}; });
}

csi_status csi_policy_epsilon_greedy(const csi_model* model, double epsilon, csi_policy** out) {
  CSI_REQUIRE(model && out);
  return guarded([&] {
    *out = new csi_policy{csi::Policy::epsilon_greedy(
        std::make_shared<const csi::LinearModel>(model->learned.model), epsilon)};
  });
}

csi_status csi_policy_softmax(const csi_model* model, double alpha, csi_policy** out) {
  CSI_REQUIRE(model && out);
  return guarded([&] { *out = new csi_policy{model->learned.softmax(alpha)}; });
}

csi_status csi_policy_oracle_greedy(const csi_env* env, csi_policy** out) {
  CSI_REQUIRE(env && out);
  return guarded([&] { *out = new csi_policy{csi::oracle_greedy_policy(env->env)}; });
}

csi_status csi_policy_probs(const csi_policy* pi, int context, double* out, size_t len) {
  CSI_REQUIRE(pi && out);
  if (len < CSI_NUM_ACTIONS) return fail(CSI_ERR_INVALID_ARGUMENT, "output buffer too small");
  return guarded([&] {
    const auto& p = pi->policy.probs(context_arg(context));
    std::copy(p.begin(), p.end(), out);
  });
}

void csi_policy_free(csi_policy* pi) { delete pi; }

csi_status csi_dataset_collect(const csi_env* env, const csi_policy* pi0, size_t n,
                               uint64_t seed, csi_dataset** out) {
  CSI_REQUIRE(env && pi0 && out);
  return guarded([&] {
    csi::Rng rng(seed);
    *out = new csi_dataset{csi::collect_dataset(env->env, pi0->policy, n, rng)};
  });
}

csi_status csi_dataset_read_csv(const char* path, csi_dataset** out) {
  CSI_REQUIRE(path && out);
  return guarded([&] {
    std::ifstream in(path);
    if (!in) throw csi::IoError(std::string("cannot open ") + path);
    *out = new csi_dataset{csi::read_log_csv(in)};
  });
}

csi_status csi_dataset_write_csv(const csi_dataset* data, const char* path) {
  CSI_REQUIRE(data && path);
  return guarded([&] {
    std::ofstream os(path);
    if (!os) throw csi::IoError(std::string("cannot open ") + path);
    csi::write_log_csv(os, data->samples);
  });
}

csi_status csi_dataset_size(const csi_dataset* data, size_t* n, size_t* positives) {
  CSI_REQUIRE(data);
  if (n) *n = data->samples.size();
  if (positives) *positives = csi::count_positives(data->samples);
  return CSI_OK;
}

csi_status csi_dataset_write_csi_csv(const csi_dataset* data, const csi_policy* pi0,
                                     csi_variant variant, uint64_t seed, const char* path) {
  CSI_REQUIRE(data && pi0 && path);
  return guarded([&] {
    std::vector<csi::CsiExample> rows;
    if (variant == CSI_VARIANT_SAMPLING) {
      rows = csi::csi_transform_sampling(data->samples, pi0->policy, seed);
    } else if (variant == CSI_VARIANT_EXPECT) {
      rows = csi::csi_transform_expect(data->samples, pi0->policy);
    } else {
      throw csi::ConfigError("unknown csi variant");
    }
    std::ofstream os(path);
    if (!os) throw csi::IoError(std::string("cannot open ") + path);
    csi::write_csi_csv(os, rows);
  });
}

void csi_dataset_free(csi_dataset* data) { delete data; }

csi_status csi_learner_train(const csi_dataset* data, const csi_policy* pi0,
                             const char* spec_json, uint64_t seed, csi_model** out) {
  CSI_REQUIRE(data && spec_json && out);
  return guarded([&] {
    const nlohmann::json j = parse_json(spec_json);
    csi::LearnerSpec spec;
    try {
      spec.kind = csi::parse_learner_kind(j.at("kind").get<std::string>());
      if (j.contains("feature_mask")) {
        spec.feature_map = csi::FeatureMap::parse(j.at("feature_mask").get<std::string>());
      }
      spec.train_cfg.l2 = j.value("l2", spec.train_cfg.l2);
      spec.train_cfg.max_iters = j.value("max_iters", spec.train_cfg.max_iters);
      spec.train_cfg.tol = j.value("tol", spec.train_cfg.tol);
      if (j.contains("step_rule")) {
        spec.train_cfg.step_rule = csi::parse_step_rule(j.at("step_rule").get<std::string>());
      } else if (spec.kind == csi::LearnerKind::LsIps) {
        spec.train_cfg.step_rule = csi::StepRule::Backtracking;
      }
      spec.ls_lambda = j.value("ls_lambda", spec.ls_lambda);
    } catch (const nlohmann::json::exception& e) {
      throw csi::ConfigError(std::string("learner spec: ") + e.what());
    }
    csi::Rng rng(seed);
    *out = new csi_model{
        csi::train_learner(data->samples, pi0 ? &pi0->policy : nullptr, spec, rng)};
  });
}

csi_status csi_experiment_run(const char* config_json, const csi_run_options* options,
                              csi_experiment** out) {
  CSI_REQUIRE(config_json && out);
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw csi::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    csi::ExperimentConfig cfg = csi::experiment_config_from_json(j);
    if (options) {
      if (options->parallelism > 0) cfg.parallelism = options->parallelism;
      if (options->scenario) cfg.scenario = csi::parse_scenario(options->scenario);
      if (options->full_scale) cfg.apply_full_scale();
    }
    cfg.validate();
    auto exp = std::make_unique<csi_experiment>();
    exp->config = cfg;
    exp->result = csi::run(cfg);
    for (const auto& f : exp->result.failures) {
      exp->failure_text.push_back("env_seed " + std::to_string(f.env_seed) + ", n " +
                                  std::to_string(f.n_samples) + ": " + f.message);
    }
    *out = exp.release();
  });
}

csi_status csi_experiment_render(const csi_experiment* exp, csi_format format, char** out) {
  CSI_REQUIRE(exp && out);
  return guarded([&] {
    csi::OutputFormat f = exp->config.format;
    if (format == CSI_FORMAT_CSV) f = csi::OutputFormat::Csv;
    if (format == CSI_FORMAT_MARKDOWN) f = csi::OutputFormat::Markdown;
    *out = dup_string(f == csi::OutputFormat::Csv
                          ? csi::render_csv(exp->result)
                          : csi::render_markdown(exp->result, exp->config));
  });
}

csi_status csi_experiment_failure_count(const csi_experiment* exp, size_t* out) {
  CSI_REQUIRE(exp && out);
  *out = exp->result.failures.size();
  return CSI_OK;
}

const char* csi_experiment_failure(const csi_experiment* exp, size_t i) {
  if (!exp || i >= exp->failure_text.size()) return "";
  return exp->failure_text[i].c_str();
}

const char* csi_experiment_output_path(const csi_experiment* exp) {
  return exp ? exp->config.output.c_str() : "";
}

void csi_experiment_free(csi_experiment* exp) { delete exp; }

}  // extern "C"
