#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "csi/env.hpp"
#include "csi/glm.hpp"
#include "csi/learners.hpp"

namespace csi {

enum class Scenario { Full, FeatureSubset };
enum class FirstStage { Dm, CsiExpect, Alternate };
enum class OutputFormat { Csv, Markdown };

struct ExperimentConfig {
  std::uint64_t master_seed = 0;
  int n_environments = 20;
  std::vector<std::size_t> sample_sizes{10000, 100000};
  double epsilon = 0.05;
  /// Alternate: DM on even environment indices, CSI-expect on odd ones.
  FirstStage first_stage_learner = FirstStage::Alternate;
  Scenario scenario = Scenario::Full;
  /// Feature map of the *_subset learners; default hides context bits 0-2.
  FeatureMap subset_mask = FeatureMap::parse("000111111111");
  std::vector<LearnerKind> learners{LearnerKind::Dm, LearnerKind::CsiSampling,
                                    LearnerKind::CsiExpect, LearnerKind::LsIps};
  std::vector<double> l2_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  std::vector<double> ls_lambda_grid{0.001, 0.01, 0.1, 1.0};
  double validation_fraction = 0.2;
  TrainConfig train;
  TrainConfig ls_train{0.0, 500, 1e-8, StepRule::Backtracking, 1.0};
  EnvConfig env;
  std::string output;
  OutputFormat format = OutputFormat::Csv;
  int parallelism = 1;

  void validate() const;
  /// 100 environments at 10K, 100K and 500K samples.
  void apply_full_scale();
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

const char* to_string(Scenario s);
Scenario parse_scenario(std::string_view s);
const char* to_string(OutputFormat f);
OutputFormat parse_output_format(std::string_view s);

/// One (environment, sample size, learner) outcome. NaN marks absent
/// hyperparameters.
struct CellRecord {
  std::uint64_t env_seed = 0;
  std::size_t n_samples = 0;
  std::string learner;
  double normalized_reward = 0.0;
  double l2 = 0.0;
  double extra_hyper = 0.0;
  bool converged = true;
};

struct CellFailure {
  std::uint64_t env_seed = 0;
  std::size_t n_samples = 0;
  std::string message;
};

struct Aggregate {
  std::string learner;
  std::size_t n_samples = 0;
  std::size_t count = 0;
  double mean = 0.0;
  /// Standard error of the mean over environments; NaN when count < 2.
  double std_error = 0.0;
};

struct ExperimentResult {
  std::vector<CellRecord> cells;  // canonical order: env_seed, n_samples, learner
  std::vector<CellFailure> failures;

  std::vector<Aggregate> aggregates() const;
};

/// Inputs of one cell. run_experiment derives them from the master seed;
/// run_single derives them from the environment seed and n.
struct CellPlan {
  std::uint64_t env_seed = 0;
  std::size_t n_samples = 0;
  std::uint64_t uniform_log_seed = 0;
  std::uint64_t policy_log_seed = 0;
  std::uint64_t learner_seed = 0;
  LearnerKind first_stage = LearnerKind::Dm;
};

std::vector<CellRecord> run_cell(const CellPlan& plan, const ExperimentConfig& cfg);
std::vector<CellRecord> run_single(std::uint64_t env_seed, std::size_t n,
                                   const ExperimentConfig& cfg);
std::vector<CellPlan> plan_cells(const ExperimentConfig& cfg);

ExperimentResult run_experiment(const ExperimentConfig& cfg);
ExperimentResult run_feature_subset(const ExperimentConfig& cfg);
/// Dispatches on cfg.scenario.
ExperimentResult run(const ExperimentConfig& cfg);

std::string render_csv(const ExperimentResult& r);
std::string render_markdown(const ExperimentResult& r, const ExperimentConfig& cfg);

}  // namespace csi
