#pragma once

// Shared oracles for the test suite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "shrinkclock/seqio.hpp"
#include "shrinkclock/treeio.hpp"

namespace test_support {

// Kolmogorov survival function Q(t) = 2 sum_j (-1)^(j-1) exp(-2 j^2 t^2).
inline auto kolmogorov_q(double t) -> double {
  if (t < 0.2) { return 1.0; }
  auto sum = 0.0;
  for (int j = 1; j <= 200; ++j) {
    auto term = std::exp(-2.0 * j * j * t * t);
    sum += (j % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-17) { break; }
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct Ks_result {
  double statistic = 0.0;
  double p_value = 0.0;
};

// p-value with the small-sample correction (sqrt(n) + 0.12 + 0.11 / sqrt(n)) D.
inline auto ks_p_value(double d, double n_eff) -> double {
  auto s = std::sqrt(n_eff);
  return kolmogorov_q((s + 0.12 + 0.11 / s) * d);
}

inline auto ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) -> Ks_result {
  std::sort(x.begin(), x.end());
  auto n = static_cast<double>(x.size());
  auto d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto f = cdf(x[i]);
    d = std::max({d, f - i / n, (i + 1) / n - f});
  }
  return {d, ks_p_value(d, n)};
}

inline auto ks_two_sample(std::vector<double> a, std::vector<double> b) -> Ks_result {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  auto na = static_cast<double>(a.size());
  auto nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  auto d = 0.0;
  while (i < a.size() && j < b.size()) {
    auto x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) { ++i; }
    while (j < b.size() && b[j] <= x) { ++j; }
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return {d, ks_p_value(d, na * nb / (na + nb))};
}

// Standard normal CDF.
inline auto normal_cdf(double x) -> double { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse-Gaussian CDF with mean m and shape s.
inline auto inverse_gaussian_cdf(double x, double m, double s) -> double {
  if (x <= 0.0) { return 0.0; }
  auto a = std::sqrt(s / x);
  auto first = normal_cdf(a * (x / m - 1.0));
  // exp(2s/m) Phi(-a(x/m + 1)) evaluated in log space to avoid overflow.
  auto z = -a * (x / m + 1.0);
  auto tail = 0.5 * std::erfc(-z / std::sqrt(2.0));
  auto second = tail > 0.0 ? std::exp(2.0 * s / m + std::log(tail)) : 0.0;
  return std::clamp(first + second, 0.0, 1.0);
}

// Random rooted binary tree with n tips and lengths in [0.05, 1), as Newick.
inline auto random_newick(int n, std::mt19937_64& rng, double min_len = 0.05, double max_len = 1.0) -> std::string {
  auto len = std::uniform_real_distribution<double>{min_len, max_len};
  auto nodes = std::vector<std::string>{};
  for (int i = 0; i < n; ++i) { nodes.push_back("t" + std::to_string(i)); }
  auto fmt = [](double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string{buf};
  };
  while (nodes.size() > 1) {
    auto i = std::uniform_int_distribution<std::size_t>{0, nodes.size() - 1}(rng);
    auto a = nodes[i];
    nodes.erase(nodes.begin() + static_cast<long>(i));
    auto j = std::uniform_int_distribution<std::size_t>{0, nodes.size() - 1}(rng);
    auto b = nodes[j];
    nodes.erase(nodes.begin() + static_cast<long>(j));
    nodes.push_back("(" + a + ":" + fmt(len(rng)) + "," + b + ":" + fmt(len(rng)) + ")");
  }
  return nodes.front() + ";";
}

inline auto random_tree(int n, std::mt19937_64& rng) -> shrinkclock::Phylogeny {
  return shrinkclock::parse_newick(random_newick(n, rng));
}

// Uniform random unambiguous alignment rows in tree tip order.
inline auto random_alignment(const shrinkclock::Phylogeny& tree, int n_sites, std::mt19937_64& rng,
                             double ambiguous_fraction = 0.0) -> shrinkclock::Alignment {
  auto base = std::uniform_int_distribution<int>{0, 3};
  auto coin = std::uniform_real_distribution<double>{0.0, 1.0};
  auto columns = std::vector<std::vector<shrinkclock::State_mask>>(
      n_sites, std::vector<shrinkclock::State_mask>(tree.n_tips));
  for (auto& col : columns) {
    for (auto& m : col) {
      m = coin(rng) < ambiguous_fraction ? shrinkclock::State_mask{0xF}
                                         : static_cast<shrinkclock::State_mask>(1u << base(rng));
    }
  }
  return shrinkclock::compress_columns(tree.tip_names(), columns);
}

// Dense GTR generator built directly from its definition, normalized to unit rate.
inline auto dense_gtr(const std::array<double, 6>& ex, const std::array<double, 4>& pi) -> Eigen::Matrix4d {
  auto q = Eigen::Matrix4d{Eigen::Matrix4d::Zero()};
  int pairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  for (int e = 0; e < 6; ++e) {
    auto [i, j] = pairs[e];
    q(i, j) = ex[e] * pi[j];
    q(j, i) = ex[e] * pi[i];
  }
  for (int i = 0; i < 4; ++i) { q(i, i) = -(q.row(i).sum() - q(i, i)); }
  auto rate = 0.0;
  for (int i = 0; i < 4; ++i) { rate -= pi[i] * q(i, i); }
  return q / rate;
}

// Likelihood by summing over every joint assignment of internal-node states,
// with transition matrices from a Pade matrix exponential.
inline auto brute_force_log_likelihood(const shrinkclock::Phylogeny& tree, const shrinkclock::Alignment& aln,
                                       const Eigen::Matrix4d& q, const std::array<double, 4>& pi,
                                       const std::vector<double>& site_rates, const std::vector<double>& rho)
    -> double {
  auto n_internal = tree.n_tips - 1;
  auto total = 0.0;
  auto n_cat = static_cast<int>(site_rates.size());
  auto p = std::vector<std::vector<Eigen::Matrix4d>>(n_cat, std::vector<Eigen::Matrix4d>(tree.num_branches()));
  for (int c = 0; c < n_cat; ++c) {
    for (int k = 0; k < tree.num_branches(); ++k) {
      Eigen::Matrix4d scaled = q * (rho[k] * tree.branch_length[k] * site_rates[c]);
      p[c][k] = scaled.exp();
    }
  }
  auto assignments = 1L;
  for (int i = 0; i < n_internal; ++i) { assignments *= 4; }
  auto state = std::vector<int>(tree.num_nodes());
  for (int pat = 0; pat < aln.n_patterns(); ++pat) {
    auto site = 0.0;
    for (int c = 0; c < n_cat; ++c) {
      for (long a = 0; a < assignments; ++a) {
        auto code = a;
        for (int i = 0; i < n_internal; ++i) {
          state[tree.n_tips + i] = static_cast<int>(code % 4);
          code /= 4;
        }
        // Sum over tip states compatible with the observed mask.
        auto prob = pi[state[tree.root()]];
        for (int k = 0; k < tree.num_branches() && prob > 0.0; ++k) {
          auto from = state[tree.parent[k]];
          if (tree.is_tip(k)) {
            auto sum = 0.0;
            for (int b = 0; b < 4; ++b) {
              if (aln.patterns[pat][k] & (1u << b)) { sum += p[c][k](from, b); }
            }
            prob *= sum;
          } else {
            prob *= p[c][k](from, state[k]);
          }
        }
        site += prob;
      }
    }
    total += aln.pattern_weights[pat] * std::log(site / n_cat);
  }
  return total;
}

inline auto relative_error(double a, double b) -> double {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace test_support
