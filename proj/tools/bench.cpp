// bench: experiment harness and data tools over the C API.
//
//   bench run --config <path> [--out <path>] [--format csv|markdown]
//             [--parallelism N] [--scenario full|feature_subset] [--paper-scale]
//   bench env --seed <n> [--out <path>]
//   bench collect --env <env.json> --n <count> --seed <n> --out <log.csv> [policy flags]
//   bench transform --log <log.csv> --variant sampling|expect --out <csi.csv> [policy flags]
//   bench train --log <log.csv> --learner <kind> --out <model.json> [policy flags]
//   bench evaluate --env <env.json> --model <model.json>
//
// Policy flags: --policy uniform|greedy|epsilon_greedy|softmax --model <model.json>
//               --epsilon <p> --alpha <a>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "csi/csi.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitCellFailure = 2;

struct Failure {
  csi_status status;
};

void check(csi_status s) {
  if (s != CSI_OK) throw Failure{s};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using EnvPtr = std::unique_ptr<csi_env, Deleter<csi_env, csi_env_free>>;
using PolicyPtr = std::unique_ptr<csi_policy, Deleter<csi_policy, csi_policy_free>>;
using DatasetPtr = std::unique_ptr<csi_dataset, Deleter<csi_dataset, csi_dataset_free>>;
using ModelPtr = std::unique_ptr<csi_model, Deleter<csi_model, csi_model_free>>;
using ExperimentPtr =
    std::unique_ptr<csi_experiment, Deleter<csi_experiment, csi_experiment_free>>;
using StringPtr = std::unique_ptr<char, Deleter<char, csi_string_free>>;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "bench: cannot read " << path << '\n';
    throw Failure{CSI_ERR_IO};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const char* text) {
  if (path.empty()) {
    std::fputs(text, stdout);
    return;
  }
  std::ofstream out(path);
  out << text;
  if (!out) {
    std::cerr << "bench: cannot write " << path << '\n';
    throw Failure{CSI_ERR_IO};
  }
}

EnvPtr load_env(const std::string& path) {
  csi_env* env = nullptr;
  check(csi_env_from_json(read_file(path).c_str(), &env));
  return EnvPtr(env);
}

ModelPtr load_model(const std::string& path) {
  csi_model* m = nullptr;
  check(csi_model_from_json(read_file(path).c_str(), &m));
  return ModelPtr(m);
}

struct PolicyArgs {
  std::string kind = "uniform";
  std::string model;
  double epsilon = 0.05;
  double alpha = 1.0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--policy", kind, "Logging policy")
        ->check(CLI::IsMember({"uniform", "greedy", "epsilon_greedy", "softmax"}));
    cmd->add_option("--model", model, "Model JSON backing the policy");
    cmd->add_option("--epsilon", epsilon, "Exploration rate for epsilon_greedy");
    cmd->add_option("--alpha", alpha, "Temperature exponent for softmax");
  }

  PolicyPtr build() const {
    csi_policy* p = nullptr;
    if (kind == "uniform") {
      check(csi_policy_uniform(&p));
      return PolicyPtr(p);
    }
    if (model.empty()) {
      std::cerr << "bench: --policy " << kind << " needs --model\n";
      throw Failure{CSI_ERR_CONFIG};
    }
    ModelPtr m = load_model(model);
    if (kind == "greedy") check(csi_policy_greedy(m.get(), &p));
    if (kind == "epsilon_greedy") check(csi_policy_epsilon_greedy(m.get(), epsilon, &p));
    if (kind == "softmax") check(csi_policy_softmax(m.get(), alpha, &p));
    return PolicyPtr(p);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline contextual-bandit benchmark harness"};
  app.require_subcommand(1);

  // run
  std::string config_path, out_path, format, scenario;
  int parallelism = 0;
  bool full_scale = false;
  auto* run = app.add_subcommand("run", "Run a benchmark experiment");
  run->add_option("--config", config_path, "Experiment config JSON")->required();
  run->add_option("--out", out_path, "Output file (default: config output or stdout)");
  run->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "markdown"}));
  run->add_option("--parallelism", parallelism, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--scenario", scenario, "Scenario")
      ->check(CLI::IsMember({"full", "feature_subset"}));
  run->add_flag("--paper-scale", full_scale, "100 environments at 10K/100K/500K samples");

  // env
  std::uint64_t seed = 0;
  std::string env_config;
  auto* env_cmd = app.add_subcommand("env", "Generate an environment JSON");
  env_cmd->add_option("--seed", seed, "Environment seed")->required();
  env_cmd->add_option("--config", env_config, "Environment config JSON");
  env_cmd->add_option("--out", out_path, "Output file (default stdout)");

  // collect
  std::string env_path, log_path, model_path, variant, learner;
  std::size_t n = 0;
  PolicyArgs policy_args;
  auto* collect = app.add_subcommand("collect", "Log a dataset under a policy");
  collect->add_option("--env", env_path, "Environment JSON")->required();
  collect->add_option("--n", n, "Number of samples")->required();
  collect->add_option("--seed", seed, "Sampling seed");
  collect->add_option("--out", out_path, "Log CSV")->required();
  policy_args.add_to(collect);

  // transform
  auto* transform = app.add_subcommand("transform", "Write the CSI dataset of a log");
  transform->add_option("--log", log_path, "Log CSV")->required();
  transform->add_option("--variant", variant, "Counterfactual variant")
      ->required()
      ->check(CLI::IsMember({"sampling", "expect"}));
  transform->add_option("--seed", seed, "Counterfactual sampling seed");
  transform->add_option("--out", out_path, "CSI CSV")->required();
  policy_args.add_to(transform);

  // train
  double l2 = 1e-3, ls_lambda = 0.01;
  std::string mask = "111111111111";
  auto* train = app.add_subcommand("train", "Train a learner on a log");
  train->add_option("--log", log_path, "Log CSV")->required();
  train->add_option("--learner", learner, "Learner kind")
      ->required()
      ->check(CLI::IsMember({"dm", "csi_sampling", "csi_expect", "ls_ips"}));
  train->add_option("--l2", l2, "L2 strength");
  train->add_option("--lambda", ls_lambda, "LS-IPS smoothing");
  train->add_option("--feature-mask", mask, "12 visibility bits, context first");
  train->add_option("--seed", seed, "Counterfactual sampling seed");
  train->add_option("--out", out_path, "Model JSON")->required();
  policy_args.add_to(train);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Exact value of a model's greedy policy");
  evaluate->add_option("--env", env_path, "Environment JSON")->required();
  evaluate->add_option("--model", model_path, "Model JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      const std::string config = read_file(config_path);
      csi_run_options opts{parallelism, scenario.empty() ? nullptr : scenario.c_str(),
                           full_scale ? 1 : 0};
      csi_experiment* raw = nullptr;
      check(csi_experiment_run(config.c_str(), &opts, &raw));
      ExperimentPtr exp(raw);
      csi_format fmt = format.empty()  ? CSI_FORMAT_DEFAULT
                       : format == "csv" ? CSI_FORMAT_CSV
                                         : CSI_FORMAT_MARKDOWN;
      char* text = nullptr;
      check(csi_experiment_render(exp.get(), fmt, &text));
      StringPtr owned(text);
      write_text(out_path.empty() ? csi_experiment_output_path(exp.get()) : out_path, text);
      std::size_t failures = 0;
      check(csi_experiment_failure_count(exp.get(), &failures));
      for (std::size_t i = 0; i < failures; ++i) {
        std::cerr << "bench: cell failed: " << csi_experiment_failure(exp.get(), i) << '\n';
      }
      return failures ? kExitCellFailure : kExitOk;
    }
    if (*env_cmd) {
      const std::string cfg = env_config.empty() ? std::string() : read_file(env_config);
      csi_env* raw = nullptr;
      check(csi_env_generate(seed, cfg.empty() ? nullptr : cfg.c_str(), &raw));
      EnvPtr env(raw);
      char* text = nullptr;
      check(csi_env_to_json(env.get(), &text));
      StringPtr owned(text);
      write_text(out_path, (std::string(text) + "\n").c_str());
      return kExitOk;
    }
    if (*collect) {
      EnvPtr env = load_env(env_path);
      PolicyPtr pi0 = policy_args.build();
      csi_dataset* raw = nullptr;
      check(csi_dataset_collect(env.get(), pi0.get(), n, seed, &raw));
      DatasetPtr data(raw);
      check(csi_dataset_write_csv(data.get(), out_path.c_str()));
      return kExitOk;
    }
    if (*transform) {
      csi_dataset* raw = nullptr;
      check(csi_dataset_read_csv(log_path.c_str(), &raw));
      DatasetPtr data(raw);
      PolicyPtr pi0 = policy_args.build();
      check(csi_dataset_write_csi_csv(
          data.get(), pi0.get(), variant == "sampling" ? CSI_VARIANT_SAMPLING : CSI_VARIANT_EXPECT,
          seed, out_path.c_str()));
      return kExitOk;
    }
    if (*train) {
      csi_dataset* raw = nullptr;
      check(csi_dataset_read_csv(log_path.c_str(), &raw));
      DatasetPtr data(raw);
      PolicyPtr pi0 = policy_args.build();
      std::ostringstream spec;
      spec.precision(17);
      spec << "{\"kind\":\"" << learner << "\",\"feature_mask\":\"" << mask
           << "\",\"l2\":" << l2 << ",\"ls_lambda\":" << ls_lambda << "}";
      csi_model* m = nullptr;
      check(csi_learner_train(data.get(), pi0.get(), spec.str().c_str(), seed, &m));
      ModelPtr model(m);
      char* text = nullptr;
      check(csi_model_to_json(model.get(), &text));
      StringPtr owned(text);
      write_text(out_path, (std::string(text) + "\n").c_str());
      return kExitOk;
    }
    if (*evaluate) {
      EnvPtr env = load_env(env_path);
      ModelPtr model = load_model(model_path);
      csi_policy* raw = nullptr;
      check(csi_policy_greedy(model.get(), &raw));
      PolicyPtr pi(raw);
      double value = 0.0, normalized = 0.0;
      check(csi_env_policy_value(env.get(), pi.get(), &value));
      check(csi_env_normalized_value(env.get(), pi.get(), &normalized));
      std::printf("policy_value %.12g\nnormalized_value %.12g\n", value, normalized);
      return kExitOk;
    }
  } catch (const Failure& f) {
    if (f.status != CSI_ERR_IO) {
      std::cerr << "bench: " << csi_status_name(f.status) << ": " << csi_last_error() << '\n';
    }
    if (*run && f.status != CSI_ERR_CONFIG && f.status != CSI_ERR_PARSE &&
        f.status != CSI_ERR_IO) {
      return kExitCellFailure;
    }
    return kExitConfig;
  }
  return kExitOk;
}
