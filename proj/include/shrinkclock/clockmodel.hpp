#pragma once

// Autocorrelated clock parameterization: log-rate increments along branches, the
// normalization of clock rates into branch-rate multipliers, the regularized bridge
// prior on increments, and the linear-time gradients of the increment-space target.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "shrinkclock/error.hpp"
#include "shrinkclock/likelihood.hpp"
#include "shrinkclock/treeio.hpp"

namespace shrinkclock {

// Largest |log r| before exp() leaves double range.
inline constexpr double k_max_log_rate = 700.0;

struct Clock_prior {
  double alpha = 0.25;        // bridge exponent, in (0, 1]
  double slab_width = 2.0;    // xi; infinity removes the slab
  bool jacobian_in_target = true;
};

struct Clock_state {
  std::vector<double> increments;    // phi, one per branch
  std::vector<double> rates;         // r; the implicit root rate is 1
  std::vector<double> local_scales;  // lambda
  double global_scale = 0.1;         // mu
  double location = 1.0;             // gamma
};

// r_k = exp(sum of increments on the path from the root to branch k).
inline auto rates_from_increments(const Phylogeny& tree, std::span<const double> increments) -> std::vector<double> {
  auto n = tree.num_branches();
  auto log_rate = std::vector<double>(tree.num_nodes(), 0.0);
  auto rates = std::vector<double>(n);
  for (auto k = n - 1; k >= 0; --k) {
    auto parent = tree.parent[k];
    log_rate[k] = increments[k] + (parent == tree.root() ? 0.0 : log_rate[parent]);
    if (!(std::abs(log_rate[k]) <= k_max_log_rate)) {
      throw Numeric_error{"log clock rate on branch " + std::to_string(k) + " out of range"};
    }
    rates[k] = std::exp(log_rate[k]);
  }
  return rates;
}

inline auto increments_from_rates(const Phylogeny& tree, std::span<const double> rates) -> std::vector<double> {
  auto increments = std::vector<double>(tree.num_branches());
  for (int k = 0; k < tree.num_branches(); ++k) {
    auto parent = tree.parent[k];
    increments[k] = std::log(rates[k]) - (parent == tree.root() ? 0.0 : std::log(rates[parent]));
  }
  return increments;
}

// rho_k = gamma r_k (sum_j t_j) / (sum_j r_j t_j), so that the length-weighted mean of rho is gamma.
inline auto rescale_multipliers(const Phylogeny& tree, std::span<const double> rates, double location)
    -> std::vector<double> {
  auto total_time = 0.0;
  auto total_rate_time = 0.0;
  for (int k = 0; k < tree.num_branches(); ++k) {
    total_time += tree.branch_length[k];
    total_rate_time += rates[k] * tree.branch_length[k];
  }
  auto factor = location * total_time / total_rate_time;
  auto rho = std::vector<double>(tree.num_branches());
  for (int k = 0; k < tree.num_branches(); ++k) { rho[k] = rates[k] * factor; }
  return rho;
}

inline auto increment_precision(double local_scale, double global_scale, double slab_width) -> double {
  auto scale = local_scale * global_scale;
  return 1.0 / (slab_width * slab_width) + 1.0 / (scale * scale);
}

// log N(phi; 0, 1/precision) with precision = 1/xi^2 + 1/(lambda mu)^2.
inline auto regularized_bridge_logpdf(double increment, double local_scale, double global_scale, double slab_width)
    -> double {
  auto precision = increment_precision(local_scale, global_scale, slab_width);
  return 0.5 * std::log(precision / (2.0 * std::numbers::pi)) - 0.5 * precision * increment * increment;
}

// log of exp(-|phi/mu|^alpha) / (2 mu Gamma(1 + 1/alpha)).
inline auto bridge_marginal_logpdf(double increment, double global_scale, double alpha) -> double {
  return -std::pow(std::abs(increment / global_scale), alpha) - std::log(2.0 * global_scale) -
         std::lgamma(1.0 + 1.0 / alpha);
}

// log |d phi / d r| = -sum_j log r_j.
inline auto log_jacobian(std::span<const double> rates) -> double {
  auto sum = 0.0;
  for (auto r : rates) { sum -= std::log(r); }
  return sum;
}

// Chain rule from d L / d rho to d L / d phi in O(N).
//
// The Jacobian d rho / d r is diagonal plus rank one, so
//   dL/dr_j = gamma (A dL/drho_j - B t_j sum_i dL/drho_i r_i)
// with A = sum t / sum r t and B = sum t / (sum r t)^2.  Since d r_j / d phi_k = r_j
// whenever branch k lies on the root path of j, dL/dphi_k = r_k dL/dr_k plus the
// same quantity summed over the two daughter branches, accumulated in post-order.
inline auto gradient_loglik_wrt_increments(const Phylogeny& tree, std::span<const double> grad_rho,
                                           std::span<const double> rates, double location) -> std::vector<double> {
  auto n = tree.num_branches();
  auto total_time = 0.0;
  auto total_rate_time = 0.0;
  auto weighted = 0.0;
  for (int k = 0; k < n; ++k) {
    total_time += tree.branch_length[k];
    total_rate_time += rates[k] * tree.branch_length[k];
    weighted += grad_rho[k] * rates[k];
  }
  auto a = total_time / total_rate_time;
  auto b = total_time / (total_rate_time * total_rate_time);
  auto grad = std::vector<double>(n);
  for (int k = 0; k < n; ++k) {
    auto grad_rate = location * (a * grad_rho[k] - b * tree.branch_length[k] * weighted);
    grad[k] = rates[k] * grad_rate;
    if (!tree.is_tip(k)) {
      auto [l, r] = tree.children[k];
      grad[k] += grad[l] + grad[r];
    }
  }
  return grad;
}

// Gradient of sum_k log N(phi_k; 0, 1/precision_k) - sum_j log r_j:
//   -phi_k precision_k - n_k, where n_k counts branch k and every branch below it.
// The Jacobian term is dropped when `with_jacobian` is false.
inline auto gradient_logprior_wrt_increments(const Phylogeny& tree, std::span<const double> increments,
                                             std::span<const double> local_scales, double global_scale,
                                             double slab_width, bool with_jacobian = true) -> std::vector<double> {
  auto grad = std::vector<double>(tree.num_branches());
  for (int k = 0; k < tree.num_branches(); ++k) {
    grad[k] = -increments[k] * increment_precision(local_scales[k], global_scale, slab_width);
    if (with_jacobian) { grad[k] -= tree.descendant_count[k]; }
  }
  return grad;
}

// Diagonal of |Hessian| of the Gaussian increment prior.
inline auto preconditioner(std::span<const double> local_scales, double global_scale, double slab_width)
    -> std::vector<double> {
  auto mass = std::vector<double>(local_scales.size());
  for (std::size_t k = 0; k < local_scales.size(); ++k) {
    mass[k] = increment_precision(local_scales[k], global_scale, slab_width);
  }
  return mass;
}

struct Target_value {
  double log_likelihood = 0.0;
  double log_prior = 0.0;     // Gaussian increment terms given the scales
  double log_jacobian = 0.0;  // zero unless the Jacobian is part of the target
  auto total() const -> double { return log_likelihood + log_prior + log_jacobian; }
};

// The HMC target in increment space:
//   log L(rho(r(phi))) + sum_k log N(phi_k; 0, 1/precision_k) [+ log |d phi / d r|].
// With no likelihood engine the data term is dropped (prior-only runs).
class Increment_target {
 public:
  Increment_target(const Phylogeny& tree, Likelihood_engine* engine, Clock_prior prior)
      : tree_{&tree}, engine_{engine}, prior_{prior}, grad_rho_(tree.num_branches()) {}

  auto prior() const -> const Clock_prior& { return prior_; }
  auto has_likelihood() const -> bool { return engine_ != nullptr; }

  auto evaluate(std::span<const double> increments, std::span<const double> local_scales, double global_scale,
                double location, std::span<double> gradient) -> Target_value {
    auto value = Target_value{};
    auto rates = rates_from_increments(*tree_, increments);
    auto prior_grad = gradient_logprior_wrt_increments(*tree_, increments, local_scales, global_scale,
                                                       prior_.slab_width, prior_.jacobian_in_target);
    for (int k = 0; k < tree_->num_branches(); ++k) {
      value.log_prior += regularized_bridge_logpdf(increments[k], local_scales[k], global_scale, prior_.slab_width);
      gradient[k] = prior_grad[k];
    }
    if (prior_.jacobian_in_target) { value.log_jacobian = log_jacobian(rates); }
    if (engine_ != nullptr) {
      // Scale updates leave the likelihood unchanged, and an accepted HMC proposal is
      // the last point evaluated, so most calls can reuse the previous result.
      auto cached = memo_valid_ && location == memo_location_ &&
                    std::equal(increments.begin(), increments.end(), memo_increments_.begin(), memo_increments_.end());
      if (!cached) {
        memo_valid_ = false;
        auto rho = rescale_multipliers(*tree_, rates, location);
        memo_log_likelihood_ = engine_->log_likelihood_and_gradient(rho, grad_rho_);
        memo_gradient_ = gradient_loglik_wrt_increments(*tree_, grad_rho_, rates, location);
        memo_increments_.assign(increments.begin(), increments.end());
        memo_location_ = location;
        memo_valid_ = true;
      }
      value.log_likelihood = memo_log_likelihood_;
      for (int k = 0; k < tree_->num_branches(); ++k) { gradient[k] += memo_gradient_[k]; }
    }
    return value;
  }

  auto log_likelihood(std::span<const double> increments, double location) -> double {
    if (engine_ == nullptr) { return 0.0; }
    auto rates = rates_from_increments(*tree_, increments);
    return engine_->log_likelihood(rescale_multipliers(*tree_, rates, location));
  }

 private:
  const Phylogeny* tree_;
  Likelihood_engine* engine_;
  Clock_prior prior_;
  std::vector<double> grad_rho_;
  bool memo_valid_ = false;
  std::vector<double> memo_increments_;
  double memo_location_ = 0.0;
  double memo_log_likelihood_ = 0.0;
  std::vector<double> memo_gradient_;
};

}  // namespace shrinkclock
