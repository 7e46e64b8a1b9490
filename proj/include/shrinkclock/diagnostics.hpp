#pragma once

// Effective sample size, sign-odds clock classification and posterior summaries.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "shrinkclock/error.hpp"
#include "shrinkclock/sampler.hpp"
#include "shrinkclock/treeio.hpp"

namespace shrinkclock {

struct Ess_result {
  double ess = 0.0;
  bool degenerate = false;  // constant series; ess is then n
};

// n / (1 + 2 sum rho_t), truncated by Geyer's initial positive sequence: autocorrelations
// are summed in adjacent pairs until a pair sum turns non-positive.
inline auto effective_sample_size(std::span<const double> series) -> Ess_result {
  auto n = series.size();
  if (n < 10) { throw Data_error{"effective sample size needs at least 10 values"}; }
  auto mean = 0.0;
  for (auto x : series) { mean += x; }
  mean /= static_cast<double>(n);
  auto autocov = [&](std::size_t lag) {
    auto sum = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) { sum += (series[i] - mean) * (series[i + lag] - mean); }
    return sum / static_cast<double>(n);
  };
  auto c0 = autocov(0);
  if (!(c0 > 0.0) || c0 <= 1e-300) { return {static_cast<double>(n), true}; }
  // tau = -1 + 2 sum_m (rho_2m + rho_2m+1)
  auto tau = -1.0;
  for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
    auto pair = (autocov(lag) + autocov(lag + 1)) / c0;
    if (!(pair > 0.0)) { break; }
    tau += 2.0 * pair;
  }
  return {static_cast<double>(n) / std::max(tau, 1.0 / static_cast<double>(n)), false};
}

struct Clock_call {
  double p_positive = 0.5;
  double bayes_factor = 1.0;  // p / (1 - p); 0 or +inf when every sample has one sign
  bool is_clock = false;
  bool saturated = false;     // p in {0, 1}: the odds only bound the count
  long n_samples = 0;
};

// Strict comparison: BF exactly at the threshold is not a clock.
inline auto classify_clock(long n_positive, long n_samples, double threshold = 10.0) -> Clock_call {
  auto call = Clock_call{};
  call.n_samples = n_samples;
  call.p_positive = static_cast<double>(n_positive) / static_cast<double>(n_samples);
  auto n_negative = n_samples - n_positive;
  if (n_negative == 0) {
    call.bayes_factor = std::numeric_limits<double>::infinity();
    call.saturated = true;
  } else {
    call.bayes_factor = static_cast<double>(n_positive) / static_cast<double>(n_negative);
    call.saturated = n_positive == 0;
  }
  call.is_clock = call.bayes_factor > threshold || call.bayes_factor < 1.0 / threshold;
  return call;
}

// One call per branch from the phi_k columns of a trace.
inline auto clock_bayes_factors(const Trace& trace, double threshold = 10.0, long min_samples = 100)
    -> std::vector<Clock_call> {
  auto n = static_cast<long>(trace.rows.size());
  if (n < min_samples) {
    throw Data_error{"clock classification needs at least " + std::to_string(min_samples) + " samples"};
  }
  auto first = trace_columns(0).size();
  auto calls = std::vector<Clock_call>(trace.n_branches);
  for (int k = 0; k < trace.n_branches; ++k) {
    auto positive = 0L;
    for (const auto& row : trace.rows) { positive += row[first + k] > 0.0 ? 1 : 0; }
    calls[k] = classify_clock(positive, n, threshold);
  }
  return calls;
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

// Shortest interval holding ceil(mass * n) sorted samples.
inline auto hpd_interval(std::span<const double> samples, double mass = 0.95) -> Interval {
  if (samples.empty()) { throw Data_error{"HPD interval of an empty sample"}; }
  auto sorted = std::vector<double>(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  auto n = sorted.size();
  auto width = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n)));
  width = std::clamp<std::size_t>(width, 1, n);
  auto best = std::size_t{0};
  for (std::size_t i = 1; i + width <= n; ++i) {
    if (sorted[i + width - 1] - sorted[i] < sorted[best + width - 1] - sorted[best]) { best = i; }
  }
  return {sorted[best], sorted[best + width - 1]};
}

struct Parameter_summary {
  double mean = 0.0;
  Interval hpd;
  double ess = 0.0;
};

inline auto summarize_series(std::span<const double> samples) -> Parameter_summary {
  auto s = Parameter_summary{};
  for (auto x : samples) { s.mean += x; }
  s.mean /= static_cast<double>(samples.size());
  s.hpd = hpd_interval(samples);
  s.ess = samples.size() >= 10 ? effective_sample_size(samples).ess : static_cast<double>(samples.size());
  return s;
}

struct Branch_summary {
  Parameter_summary rate;
  Parameter_summary increment;
  Clock_call clock;
};

struct Run_summary {
  std::vector<Branch_summary> branches;
  Parameter_summary global_scale;
  Parameter_summary location;
  Hmc_statistics hmc;
  long n_samples = 0;
};

inline auto summarize(const Trace& trace, const Phylogeny& tree, double threshold = 10.0) -> Run_summary {
  if (trace.rows.empty()) { throw Data_error{"cannot summarize an empty trace"}; }
  if (trace.n_branches != tree.num_branches()) { throw Data_error{"trace does not match the tree"}; }
  auto n = static_cast<long>(trace.rows.size());
  auto summary = Run_summary{};
  summary.n_samples = n;
  summary.hmc = trace.hmc;
  summary.global_scale = summarize_series(trace.column("mu"));
  summary.location = summarize_series(trace.column("gamma"));
  summary.branches.resize(tree.num_branches());
  for (int k = 0; k < tree.num_branches(); ++k) {
    auto phi = trace.column("phi_" + std::to_string(k));
    auto& b = summary.branches[k];
    b.increment = summarize_series(phi);
    b.rate = summarize_series(trace.column("r_" + std::to_string(k)));
    auto positive = std::count_if(phi.begin(), phi.end(), [](double x) { return x > 0.0; });
    b.clock = classify_clock(positive, n, threshold);
  }
  return summary;
}

inline auto report_tsv(const Run_summary& summary, const Phylogeny& tree) -> std::string {
  using detail::format_number;
  auto out = std::string{
      "parameter\tbranch\tlabel\tmean\thpd_lower\thpd_upper\tess\tp_positive\tbayes_factor\tis_clock\n"};
  auto scalar = [&](const char* name, const Parameter_summary& s) {
    out += std::string{name} + "\t\t\t" + format_number(s.mean) + "\t" + format_number(s.hpd.lower) + "\t" +
           format_number(s.hpd.upper) + "\t" + format_number(s.ess) + "\t\t\t\n";
  };
  scalar("mu", summary.global_scale);
  scalar("gamma", summary.location);
  for (int k = 0; k < tree.num_branches(); ++k) {
    const auto& b = summary.branches[k];
    auto label = tree.names[k];
    for (auto [name, s] : {std::pair{"r", &b.rate}, std::pair{"phi", &b.increment}}) {
      out += std::string{name} + "\t" + std::to_string(k) + "\t" + label + "\t" + format_number(s->mean) + "\t" +
             format_number(s->hpd.lower) + "\t" + format_number(s->hpd.upper) + "\t" + format_number(s->ess) + "\t" +
             format_number(b.clock.p_positive) + "\t" + format_number(b.clock.bayes_factor) + "\t" +
             (b.clock.is_clock ? "1" : "0") + "\n";
    }
  }
  return out;
}

// Newick with `[&rate_mean=..,p_pos=..]` on every branch.
inline auto annotated_newick(const Run_summary& summary, const Phylogeny& tree) -> std::string {
  auto extra = std::vector<Annotations>(tree.num_nodes());
  for (int k = 0; k < tree.num_branches(); ++k) {
    extra[k] = {{"rate_mean", detail::format_number(summary.branches[k].rate.mean)},
                {"p_pos", detail::format_number(summary.branches[k].clock.p_positive)}};
  }
  return to_newick(tree, false, extra) + "\n";
}

}  // namespace shrinkclock
