/* C interface to the counterfactual-sample-identification library.
 *
 * Objects are opaque handles created by csi_*_create-style functions and
 * released with the matching csi_*_free. Every fallible call returns a
 * csi_status; on failure csi_last_error() describes the problem for the
 * calling thread until its next failing call. Strings returned through
 * `char**` are owned by the caller and released with csi_string_free.
 *
 * Contexts and actions are addressed by index: bit i of the index is feature
 * i (contexts 0..127, actions 0..31).
 */
#ifndef CSI_CSI_H_
#define CSI_CSI_H_

#include <stddef.h>
#include <stdint.h>

#if defined(CSI_BUILDING_LIBRARY)
#define CSI_API __attribute__((visibility("default")))
#else
#define CSI_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum csi_status {
  CSI_OK = 0,
  CSI_ERR_INVALID_ARGUMENT = 1,
  CSI_ERR_CONFIG = 2,
  CSI_ERR_POLICY = 3,
  CSI_ERR_COVERAGE = 4,
  CSI_ERR_PRECONDITION = 5,
  CSI_ERR_NUMERICAL = 6,
  CSI_ERR_DEGENERATE_ENVIRONMENT = 7,
  CSI_ERR_PARSE = 8,
  CSI_ERR_IO = 9,
  CSI_ERR_INTERNAL = 10
} csi_status;

#define CSI_NUM_CONTEXTS 128
#define CSI_NUM_ACTIONS 32

typedef enum csi_variant { CSI_VARIANT_SAMPLING = 0, CSI_VARIANT_EXPECT = 1 } csi_variant;

typedef enum csi_format { CSI_FORMAT_DEFAULT = 0, CSI_FORMAT_CSV = 1, CSI_FORMAT_MARKDOWN = 2 } csi_format;

typedef struct csi_env csi_env;
typedef struct csi_policy csi_policy;
typedef struct csi_dataset csi_dataset;
typedef struct csi_model csi_model;
typedef struct csi_experiment csi_experiment;

CSI_API const char* csi_status_name(csi_status status);
CSI_API const char* csi_last_error(void);
CSI_API void csi_string_free(char* s);

/* Environments. config_json may be NULL for the default coefficient scales. */
CSI_API csi_status csi_env_generate(uint64_t seed, const char* config_json, csi_env** out);
CSI_API csi_status csi_env_from_json(const char* json, csi_env** out);
CSI_API csi_status csi_env_to_json(const csi_env* env, char** out);
CSI_API csi_status csi_env_true_reward_prob(const csi_env* env, int context, int action,
                                            double* out);
CSI_API csi_status csi_env_policy_value(const csi_env* env, const csi_policy* pi, double* out);
CSI_API csi_status csi_env_normalized_value(const csi_env* env, const csi_policy* pi,
                                            double* out);
CSI_API void csi_env_free(csi_env* env);

/* Trained models (glm model JSON with a learner_kind tag). */
CSI_API csi_status csi_model_from_json(const char* json, csi_model** out);
CSI_API csi_status csi_model_to_json(const csi_model* model, char** out);
CSI_API csi_status csi_model_predict(const csi_model* model, int context, int action,
                                     double* out);
CSI_API void csi_model_free(csi_model* model);

/* Policies. */
CSI_API csi_status csi_policy_uniform(csi_policy** out);
CSI_API csi_status csi_policy_greedy(const csi_model* model, csi_policy** out);
CSI_API csi_status csi_policy_epsilon_greedy(const csi_model* model, double epsilon,
                                             csi_policy** out);
/* Logit link for LS-IPS models, predicted-probability link otherwise. */
CSI_API csi_status csi_policy_softmax(const csi_model* model, double alpha, csi_policy** out);
CSI_API csi_status csi_policy_oracle_greedy(const csi_env* env, csi_policy** out);
/* Writes CSI_NUM_ACTIONS probabilities; len must be >= CSI_NUM_ACTIONS. */
CSI_API csi_status csi_policy_probs(const csi_policy* pi, int context, double* out, size_t len);
CSI_API void csi_policy_free(csi_policy* pi);

/* Logged datasets. */
CSI_API csi_status csi_dataset_collect(const csi_env* env, const csi_policy* pi0, size_t n,
                                       uint64_t seed, csi_dataset** out);
CSI_API csi_status csi_dataset_read_csv(const char* path, csi_dataset** out);
CSI_API csi_status csi_dataset_write_csv(const csi_dataset* data, const char* path);
CSI_API csi_status csi_dataset_size(const csi_dataset* data, size_t* n, size_t* positives);
/* Applies the identification transform against pi0 and writes the CSI file. */
CSI_API csi_status csi_dataset_write_csi_csv(const csi_dataset* data, const csi_policy* pi0,
                                             csi_variant variant, uint64_t seed,
                                             const char* path);
CSI_API void csi_dataset_free(csi_dataset* data);

/* Trains one learner. spec_json fields: kind (dm | csi_sampling | csi_expect |
 * ls_ips), feature_mask, l2, max_iters, tol, step_rule, ls_lambda. pi0 may be
 * NULL for dm and ls_ips. */
CSI_API csi_status csi_learner_train(const csi_dataset* data, const csi_policy* pi0,
                                     const char* spec_json, uint64_t seed, csi_model** out);

/* Experiments. Zero/NULL option fields keep the config file's values. */
typedef struct csi_run_options {
  int parallelism;
  const char* scenario; /* "full" | "feature_subset" */
  int full_scale;
} csi_run_options;

CSI_API csi_status csi_experiment_run(const char* config_json, const csi_run_options* options,
                                      csi_experiment** out);
CSI_API csi_status csi_experiment_render(const csi_experiment* exp, csi_format format,
                                         char** out);
CSI_API csi_status csi_experiment_failure_count(const csi_experiment* exp, size_t* out);
/* Human-readable description of failed cell i (< failure count). */
CSI_API const char* csi_experiment_failure(const csi_experiment* exp, size_t i);
/* Output path from the config; empty string when unset. Owned by exp. */
CSI_API const char* csi_experiment_output_path(const csi_experiment* exp);
CSI_API void csi_experiment_free(csi_experiment* exp);

#ifdef __cplusplus
}
#endif

#endif /* CSI_CSI_H_ */
