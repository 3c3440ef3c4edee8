#include "csi/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

namespace csi {

namespace {

constexpr const char* kLogHeader = "context_bits,action_bits,propensity,reward";
constexpr const char* kCsiHeader = "context_bits,action_bits,propensity,reward,z,weight";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" +
                     std::string(s) + "'");
  }
  return v;
}

int parse_bit(std::string_view s, std::size_t line_no) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw ParseError("line " + std::to_string(line_no) + ": expected 0/1, got '" +
                   std::string(s) + "'");
}

template <class Fn>
void for_each_record(std::istream& is, const char* header, std::size_t fields, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(is, line)) throw ParseError("missing header line");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw ParseError("unexpected header '" + line + "'");
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != fields) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(fields) + " fields");
    }
    try {
      fn(f, line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void append_pair(std::vector<CsiExample>& out, const LoggedSample& s, const Policy& pi0,
                 Rng& rng) {
  out.push_back({s.x, s.a, s.propensity, 1, 1.0});
  const auto [b, p] = pi0.sample_action(s.x, rng);
  out.push_back({s.x, b, p, 0, 1.0});
}

}  // namespace

std::vector<LoggedSample> collect_dataset(const Environment& env, const Policy& pi0,
                                          std::size_t n, Rng& rng) {
  if (n == 0) throw PreconditionError("collect_dataset needs n >= 1");
  std::vector<LoggedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Context x = sample_context(env, rng);
    const ActionDistribution& row = pi0.probs(x);
    if (std::none_of(row.begin(), row.end(), [](double p) { return p > 0.0; })) {
      throw CoverageError("logging policy has no positive mass in context " + x.to_string());
    }
    const auto [a, p] = pi0.sample_action(x, rng);
    if (!(p > 0.0)) {
      throw CoverageError("sampled action " + a.to_string() + " has zero propensity");
    }
    const int y = uniform01(rng) < env.reward_prob(x, a) ? 1 : 0;
    out.push_back({x, a, p, y});
  }
  return out;
}

std::vector<CsiExample> csi_transform_sampling(std::span<const LoggedSample> data,
                                               const Policy& pi0, Rng& rng) {
  std::vector<CsiExample> out;
  out.reserve(2 * count_positives(data));
  for (const LoggedSample& s : data)
    if (s.reward == 1) append_pair(out, s, pi0, rng);
  return out;
}

std::vector<CsiExample> csi_transform_sampling(std::span<const LoggedSample> data,
                                               const Policy& pi0, std::uint64_t seed,
                                               std::size_t shard_size) {
  if (shard_size == 0) throw PreconditionError("shard_size must be >= 1");
  std::vector<CsiExample> out;
  out.reserve(2 * count_positives(data));
  for (std::size_t begin = 0, shard = 0; begin < data.size(); begin += shard_size, ++shard) {
    Rng rng(derive_seed(seed, {shard}));
    const std::size_t end = std::min(data.size(), begin + shard_size);
    for (std::size_t i = begin; i < end; ++i)
      if (data[i].reward == 1) append_pair(out, data[i], pi0, rng);
  }
  return out;
}

std::vector<CsiExample> csi_transform_expect(std::span<const LoggedSample> data,
                                             const Policy& pi0) {
  std::vector<CsiExample> out;
  for (const LoggedSample& s : data) {
    if (s.reward != 1) continue;
    out.push_back({s.x, s.a, s.propensity, 1, 1.0});
    const ActionDistribution& p = pi0.probs(s.x);
    for (int b = 0; b < kNumActions; ++b)
      if (p[b] > 0.0) out.push_back({s.x, Action(b), p[b], 0, p[b]});
  }
  return out;
}

std::vector<TrainRow> to_train_rows(std::span<const CsiExample> rows) {
  std::vector<TrainRow> out;
  out.reserve(rows.size());
  for (const CsiExample& r : rows) out.push_back({r.x, r.b, double(r.z), r.weight});
  return out;
}

std::vector<TrainRow> to_train_rows(std::span<const LoggedSample> rows) {
  std::vector<TrainRow> out;
  out.reserve(rows.size());
  for (const LoggedSample& r : rows) out.push_back({r.x, r.a, double(r.reward), 1.0});
  return out;
}

double csi_log_loss(std::span<const CsiExample> rows, const LinearModel& m) {
  double loss = 0.0;
  for (const CsiExample& r : rows) {
    const double s = m.score(r.x, r.b);
    loss += r.weight * (r.z == 1 ? softplus(-s) : softplus(s));
  }
  return loss;
}

std::size_t count_positives(std::span<const LoggedSample> data) {
  std::size_t n = 0;
  for (const LoggedSample& s : data) n += s.reward == 1;
  return n;
}

void write_log_csv(std::ostream& os, std::span<const LoggedSample> data) {
  os << kLogHeader << '\n';
  for (const LoggedSample& s : data) {
    os << s.x.to_string() << ',' << s.a.to_string() << ',' << format_double(s.propensity)
       << ',' << s.reward << '\n';
  }
  if (!os) throw IoError("failed writing log file");
}

std::vector<LoggedSample> read_log_csv(std::istream& is) {
  std::vector<LoggedSample> out;
  for_each_record(is, kLogHeader, 4, [&](const auto& f, std::size_t line_no) {
    LoggedSample s{Context::parse(f[0]), Action::parse(f[1]), parse_double(f[2], line_no),
                   parse_bit(f[3], line_no)};
    if (!(s.propensity > 0.0 && s.propensity <= 1.0)) {
      throw ParseError("line " + std::to_string(line_no) + ": propensity outside (0,1]");
    }
    out.push_back(s);
  });
  return out;
}

void write_csi_csv(std::ostream& os, std::span<const CsiExample> rows) {
  os << kCsiHeader << '\n';
  for (const CsiExample& r : rows) {
    os << r.x.to_string() << ',' << r.b.to_string() << ',' << format_double(r.propensity)
       << ",1," << r.z << ',' << format_double(r.weight) << '\n';
  }
  if (!os) throw IoError("failed writing csi file");
}

std::vector<CsiExample> read_csi_csv(std::istream& is) {
  std::vector<CsiExample> out;
  for_each_record(is, kCsiHeader, 6, [&](const auto& f, std::size_t line_no) {
    if (parse_bit(f[3], line_no) != 1) {
      throw ParseError("line " + std::to_string(line_no) + ": csi rows carry reward 1");
    }
    CsiExample r{Context::parse(f[0]), Action::parse(f[1]), parse_double(f[2], line_no),
                 parse_bit(f[4], line_no), parse_double(f[5], line_no)};
    if (!(r.weight > 0.0)) {
      throw ParseError("line " + std::to_string(line_no) + ": weight must be > 0");
    }
    out.push_back(r);
  });
  return out;
}

}  // namespace csi
