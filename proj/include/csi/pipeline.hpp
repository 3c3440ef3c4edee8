#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "csi/env.hpp"
#include "csi/glm.hpp"
#include "csi/policy.hpp"

namespace csi {

/// One logged interaction (x, a, pi0(a|x), y).
struct LoggedSample {
  Context x;
  Action a;
  double propensity = 1.0;
  int reward = 0;
};

/// One row of the identification dataset: b is the logged action when z = 1
/// and the counterfactual draw from pi0 when z = 0. Every row descends from a
/// positive sample, so the file form writes reward = 1.
struct CsiExample {
  Context x;
  Action b;
  double propensity = 1.0;  // pi0(b|x)
  int z = 0;
  double weight = 1.0;
};

std::vector<LoggedSample> collect_dataset(const Environment& env, const Policy& pi0,
                                          std::size_t n, Rng& rng);

/// Keeps positives and pairs each (x, a, z=1) with (x, a', z=0), a' ~ pi0(.|x).
std::vector<CsiExample> csi_transform_sampling(std::span<const LoggedSample> data,
                                               const Policy& pi0, Rng& rng);

/// Sharded form: records are split into fixed blocks of `shard_size`, each
/// drawing from its own stream seeded by derive_seed(seed, {shard}). The output
/// depends only on (data, pi0, seed, shard_size).
std::vector<CsiExample> csi_transform_sampling(std::span<const LoggedSample> data,
                                               const Policy& pi0, std::uint64_t seed,
                                               std::size_t shard_size = 4096);

/// Replaces the counterfactual draw by all actions with pi0(a'|x) > 0,
/// weighted by pi0(a'|x).
std::vector<CsiExample> csi_transform_expect(std::span<const LoggedSample> data,
                                             const Policy& pi0);

std::vector<TrainRow> to_train_rows(std::span<const CsiExample> rows);
std::vector<TrainRow> to_train_rows(std::span<const LoggedSample> rows);

/// Weighted log-loss sum_i w_i * l(z_i, m(x_i, b_i)), unnormalized.
double csi_log_loss(std::span<const CsiExample> rows, const LinearModel& m);

std::size_t count_positives(std::span<const LoggedSample> data);

// CSV files: header line, then one record per line.
//   log: context_bits,action_bits,propensity,reward
//   csi: context_bits,action_bits,propensity,reward,z,weight
void write_log_csv(std::ostream& os, std::span<const LoggedSample> data);
std::vector<LoggedSample> read_log_csv(std::istream& is);
void write_csi_csv(std::ostream& os, std::span<const CsiExample> rows);
std::vector<CsiExample> read_csi_csv(std::istream& is);

}  // namespace csi
