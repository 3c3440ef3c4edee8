#include "csi/bayes.hpp"

#include <cmath>
#include <limits>

#include "csi/error.hpp"

namespace csi {

void TabularBandit::validate() const {
  const std::size_t nx = num_contexts();
  const std::size_t na = num_actions();
  if (nx == 0 || na == 0) throw PreconditionError("empty tabular bandit");
  if (reward.size() != nx || pi0.size() != nx) {
    throw PreconditionError("tabular bandit tables disagree on context count");
  }
  for (std::size_t x = 0; x < nx; ++x) {
    if (reward[x].size() != na || pi0[x].size() != na) {
      throw PreconditionError("tabular bandit tables disagree on action count");
    }
    double s = 0.0;
    for (double p : pi0[x]) {
      if (!(p >= 0.0)) throw PolicyError("pi0 has a negative entry");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw PolicyError("pi0 row does not sum to 1");
    for (double r : reward[x])
      if (!(r >= 0.0 && r <= 1.0)) throw PreconditionError("reward probability outside [0,1]");
  }
  double total = 0.0;
  for (double p : context_probs) {
    if (!(p >= 0.0)) throw PreconditionError("negative context probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw PreconditionError("context probabilities do not sum to 1");
}

CsiPosterior enumerate_csi_posterior(const TabularBandit& bandit) {
  bandit.validate();
  const std::size_t nx = bandit.num_contexts();
  const std::size_t na = bandit.num_actions();
  CsiPosterior out;
  out.given_action.assign(nx, std::vector<double>(na, std::numeric_limits<double>::quiet_NaN()));
  out.given_context.assign(nx, std::numeric_limits<double>::quiet_NaN());

  for (std::size_t x = 0; x < nx; ++x) {
    // Mass of rows (x, b, z) among positives, before the 1/2 row split which
    // cancels in every ratio below.
    std::vector<double> mass_z1(na, 0.0), mass_z0(na, 0.0);
    for (std::size_t a = 0; a < na; ++a) {
      for (std::size_t a_cf = 0; a_cf < na; ++a_cf) {
        const double m = bandit.context_probs[x] * bandit.pi0[x][a] * bandit.reward[x][a] *
                         bandit.pi0[x][a_cf];
        mass_z1[a] += m;
        mass_z0[a_cf] += m;
      }
    }
    double total1 = 0.0, total0 = 0.0;
    for (std::size_t b = 0; b < na; ++b) {
      total1 += mass_z1[b];
      total0 += mass_z0[b];
      const double denom = mass_z1[b] + mass_z0[b];
      if (denom > 0.0) out.given_action[x][b] = mass_z1[b] / denom;
    }
    if (total0 + total1 > 0.0) out.given_context[x] = total1 / (total0 + total1);
  }
  return out;
}

std::vector<std::vector<double>> csi_closed_form(const TabularBandit& bandit) {
  bandit.validate();
  const std::size_t nx = bandit.num_contexts();
  const std::size_t na = bandit.num_actions();
  std::vector<std::vector<double>> out(nx, std::vector<double>(na));
  for (std::size_t x = 0; x < nx; ++x) {
    double base = 0.0;
    for (std::size_t a = 0; a < na; ++a) base += bandit.pi0[x][a] * bandit.reward[x][a];
    for (std::size_t a = 0; a < na; ++a) {
      const double log_ratio = std::log(bandit.reward[x][a] / base);
      out[x][a] = 1.0 / (1.0 + std::exp(-log_ratio));
    }
  }
  return out;
}

}  // namespace csi
