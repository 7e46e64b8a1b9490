#pragma once

// Random-scan Metropolis-within-Gibbs over (phi, lambda, mu, gamma):
//   - preconditioned HMC on the increments phi,
//   - conjugate Gibbs on the global scale through nu = mu^-alpha,
//   - exponentially tilted stable Gibbs on the local scales,
//   - random-walk Metropolis on log gamma (heterochronous data only by default).

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shrinkclock/clockmodel.hpp"
#include "shrinkclock/error.hpp"
#include "shrinkclock/likelihood.hpp"
#include "shrinkclock/random.hpp"
#include "shrinkclock/stable.hpp"

namespace shrinkclock {

enum class Move : int { hmc = 0, global_scale = 1, local_scales = 2, location = 3 };

enum class Local_scale_method { double_rejection, slice };

struct Move_weights {
  double hmc = 5.0;
  double global_scale = 1.0;
  double local_scales = 1.0;
  std::optional<double> location;  // unset: 1 for heterochronous trees, else 0
};

// Gamma(shape, scale) prior on nu = mu^-alpha.
struct Global_scale_prior {
  double shape = 1.0;
  double scale = 2.0;
};

struct Sampler_config {
  long chain_length = 10'000;
  long burnin = 1'000;
  long thin = 1;
  int leapfrog_steps = 10;
  double step_size = 0.05;
  double target_acceptance = 0.8;
  bool adapt_step_size = true;
  Move_weights move_weights;
  std::uint64_t seed = 1;
  Clock_prior clock;
  Global_scale_prior global_prior;
  Local_scale_method local_scale_method = Local_scale_method::double_rejection;
  bool use_likelihood = true;
  double initial_global_scale = 0.1;
  double initial_location = 1.0;
  double location_proposal_sd = 0.1;
  double location_prior_sd = 10.0;  // log gamma ~ N(0, sd^2)
  long max_divergences = -1;        // negative: unlimited
  long checkpoint_interval = 0;     // 0: no checkpoints

  auto validate() const -> void {
    if (chain_length <= burnin) { throw Config_error{"chain_length must exceed burnin"}; }
    if (burnin < 0) { throw Config_error{"burnin must be non-negative"}; }
    if (thin < 1) { throw Config_error{"thin must be at least 1"}; }
    if (leapfrog_steps < 1) { throw Config_error{"leapfrog_steps must be at least 1"}; }
    if (!(step_size > 0.0)) { throw Config_error{"step_size must be positive"}; }
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) { throw Config_error{"target_acceptance must lie in (0, 1)"}; }
    auto w = move_weights;
    if (w.hmc < 0 || w.global_scale < 0 || w.local_scales < 0 || w.location.value_or(0.0) < 0) {
      throw Config_error{"move weights must be non-negative"};
    }
    if (w.hmc + w.global_scale + w.local_scales + w.location.value_or(0.0) <= 0) {
      throw Config_error{"move weights must have a positive sum"};
    }
    if (!(clock.alpha > 0.0 && clock.alpha <= 1.0)) { throw Config_error{"alpha must lie in (0, 1]"}; }
    if (!(clock.slab_width > 0.0)) { throw Config_error{"slab_width must be positive"}; }
    if (!(global_prior.shape > 0.0 && global_prior.scale > 0.0)) { throw Config_error{"global scale prior must be positive"}; }
    if (!(initial_global_scale > 0.0 && initial_location > 0.0)) { throw Config_error{"initial scales must be positive"}; }
  }
};

// ---------------------------------------------------------------------------
// HMC

// Returns the log target at `position` and fills its gradient.  Throws
// Numeric_error when the position is outside the numerically valid region.
using Gradient_oracle = std::function<double(std::span<const double>, std::span<double>)>;

struct Leapfrog_result {
  std::vector<double> position;
  std::vector<double> momentum;
  double log_target = 0.0;
  bool divergent = false;
};

inline auto kinetic_energy(std::span<const double> momentum, std::span<const double> mass) -> double {
  auto sum = 0.0;
  for (std::size_t k = 0; k < momentum.size(); ++k) { sum += momentum[k] * momentum[k] / mass[k]; }
  return 0.5 * sum;
}

// Standard leapfrog with diagonal mass matrix.  `gradient` holds the gradient at `position` on entry.
inline auto leapfrog_propose(std::span<const double> position, std::span<const double> momentum,
                             std::span<const double> gradient, std::span<const double> mass, double step_size,
                             int n_steps, const Gradient_oracle& oracle) -> Leapfrog_result {
  auto n = position.size();
  auto result = Leapfrog_result{{position.begin(), position.end()}, {momentum.begin(), momentum.end()}, 0.0, false};
  auto grad = std::vector<double>(gradient.begin(), gradient.end());
  auto& q = result.position;
  auto& p = result.momentum;
  try {
    for (std::size_t k = 0; k < n; ++k) { p[k] += 0.5 * step_size * grad[k]; }
    for (int step = 0; step < n_steps; ++step) {
      for (std::size_t k = 0; k < n; ++k) { q[k] += step_size * p[k] / mass[k]; }
      result.log_target = oracle(q, grad);
      auto scale = step + 1 < n_steps ? 1.0 : 0.5;
      for (std::size_t k = 0; k < n; ++k) { p[k] += scale * step_size * grad[k]; }
    }
  } catch (const Numeric_error&) {
    result.divergent = true;
    return result;
  }
  if (!std::isfinite(result.log_target)) { result.divergent = true; }
  for (std::size_t k = 0; k < n && !result.divergent; ++k) {
    if (!std::isfinite(q[k]) || !std::isfinite(p[k])) { result.divergent = true; }
  }
  return result;
}

struct Hmc_transition {
  std::vector<double> position;
  double accept_prob = 0.0;
  bool accepted = false;
  bool divergent = false;
};

// One HMC transition: nu ~ N(0, M), leapfrog, accept with min(1, exp(-dH)) where
// H = -log target + nu' M^-1 nu / 2.  Divergent trajectories are rejected.
inline auto hmc_update(std::span<const double> position, double log_target, std::span<const double> gradient,
                       std::span<const double> mass, double step_size, int n_steps, const Gradient_oracle& oracle,
                       Random& rng) -> Hmc_transition {
  auto n = position.size();
  auto momentum = std::vector<double>(n);
  for (std::size_t k = 0; k < n; ++k) { momentum[k] = std::sqrt(mass[k]) * rng.normal(); }
  auto h0 = -log_target + kinetic_energy(momentum, mass);
  auto proposal = leapfrog_propose(position, momentum, gradient, mass, step_size, n_steps, oracle);
  auto t = Hmc_transition{};
  if (!proposal.divergent) {
    auto h1 = -proposal.log_target + kinetic_energy(proposal.momentum, mass);
    if (!std::isfinite(h1) || h1 - h0 > 1000.0) {
      proposal.divergent = true;
    } else {
      t.accept_prob = std::min(1.0, std::exp(h0 - h1));
    }
  }
  t.divergent = proposal.divergent;
  auto u = rng.uniform();
  t.accepted = !t.divergent && u < t.accept_prob;
  t.position = t.accepted ? std::move(proposal.position) : std::vector<double>(position.begin(), position.end());
  return t;
}

// Dual averaging of log step size toward a target acceptance probability.
class Step_size_adapter {
 public:
  Step_size_adapter() = default;
  Step_size_adapter(double initial, double target) : target_{target}, mu_{std::log(10.0 * initial)}, log_step_{std::log(initial)} {}

  auto update(double accept_prob) -> double {
    ++count_;
    auto t = static_cast<double>(count_);
    auto eta = 1.0 / (t + t0_);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
    log_step_ = mu_ - std::sqrt(t) / shrinkage_ * h_bar_;
    auto w = std::pow(t, -kappa_);
    log_step_bar_ = w * log_step_ + (1.0 - w) * log_step_bar_;
    return std::exp(log_step_);
  }

  auto current() const -> double { return std::exp(log_step_); }
  auto final() const -> double { return count_ > 0 ? std::exp(log_step_bar_) : std::exp(log_step_); }

  // Exposed for checkpoints.
  double target_ = 0.8;
  double mu_ = 0.0;
  double log_step_ = 0.0;
  double log_step_bar_ = 0.0;
  double h_bar_ = 0.0;
  long count_ = 0;

 private:
  static constexpr double shrinkage_ = 0.05;
  static constexpr double t0_ = 10.0;
  static constexpr double kappa_ = 0.75;
};

// ---------------------------------------------------------------------------
// Gibbs updates

// nu = mu^-alpha | phi ~ Gamma(shape a0 + n / alpha, rate 1/s0 + sum |phi_k|^alpha).
inline auto gibbs_global_scale(std::span<const double> increments, double alpha, const Global_scale_prior& prior,
                               Random& rng) -> double {
  auto sum = 0.0;
  for (auto phi : increments) { sum += std::pow(std::abs(phi), alpha); }
  auto shape = prior.shape + static_cast<double>(increments.size()) / alpha;
  auto rate = 1.0 / prior.scale + sum;
  auto nu = rng.gamma(shape, 1.0 / rate);
  return std::pow(nu, -1.0 / alpha);
}

// lambda_k | phi_k, mu.  With X = 1 / (2 lambda^2) the bridge is the mixture
// exp(-|phi/mu|^alpha) = E[exp(-(phi/mu)^2 X)], X positive stable of index alpha/2,
// so X given phi_k is that stable law tilted by (phi_k / mu)^2.
inline auto gibbs_local_scale(double increment, double global_scale, double alpha, Random& rng,
                              Local_scale_method method = Local_scale_method::double_rejection,
                              double current = 1.0) -> double {
  auto ratio = increment / global_scale;
  auto tilt = ratio * ratio;
  auto x = method == Local_scale_method::slice
               ? slice_tilted_stable(rng, alpha / 2.0, tilt, 1.0 / (2.0 * current * current))
               : tilted_stable(rng, alpha / 2.0, tilt);
  return 1.0 / std::sqrt(2.0 * x);
}

inline auto gibbs_local_scales(std::span<const double> increments, double global_scale, double alpha, Random& rng,
                               Local_scale_method method = Local_scale_method::double_rejection,
                               std::span<const double> current = {}) -> std::vector<double> {
  auto scales = std::vector<double>(increments.size());
  for (std::size_t k = 0; k < increments.size(); ++k) {
    scales[k] = gibbs_local_scale(increments[k], global_scale, alpha, rng, method, current.empty() ? 1.0 : current[k]);
  }
  return scales;
}

// ---------------------------------------------------------------------------
// Chain

struct Hmc_statistics {
  long proposals = 0;
  long accepted = 0;
  long divergent = 0;
  double step_size = 0.0;
  auto acceptance_rate() const -> double { return proposals ? static_cast<double>(accepted) / proposals : 0.0; }
};

struct Trace {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::string rng_algorithm{Random::algorithm};
  std::uint64_t seed = 0;
  Hmc_statistics hmc;
  int n_branches = 0;

  auto column(std::string_view name) const -> std::vector<double> {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] == name) {
        auto out = std::vector<double>(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) { out[i] = rows[i][c]; }
        return out;
      }
    }
    throw Data_error{"no trace column '" + std::string{name} + "'"};
  }
};

// Fixed leading columns; per-branch phi_k and r_k follow.
inline auto trace_columns(int n_branches) -> std::vector<std::string> {
  auto cols = std::vector<std::string>{"iteration", "log_likelihood", "log_prior", "mu", "gamma", "move", "accepted"};
  for (int k = 0; k < n_branches; ++k) { cols.push_back("phi_" + std::to_string(k)); }
  for (int k = 0; k < n_branches; ++k) { cols.push_back("r_" + std::to_string(k)); }
  return cols;
}

struct Step_record {
  Move move = Move::hmc;
  bool accepted = false;
};

// Everything needed to resume a chain bit-exactly.
struct Chain_checkpoint {
  long iteration = 0;
  Clock_state state;
  std::string rng_state;
  Step_size_adapter adapter;
  double step_size = 0.0;
  Hmc_statistics hmc;
};

class Chain {
 public:
  // `engine` may be null for prior-only runs.
  Chain(const Phylogeny& tree, Likelihood_engine* engine, Sampler_config config)
      : tree_{&tree},
        config_{std::move(config)},
        target_{tree, config_.use_likelihood ? engine : nullptr, config_.clock},
        rng_{config_.seed},
        adapter_{config_.step_size, config_.target_acceptance},
        step_size_{config_.step_size} {
    config_.validate();
    if (config_.use_likelihood && engine == nullptr) { throw Config_error{"likelihood enabled but no data supplied"}; }
    auto n = tree.num_branches();
    state_.increments.assign(n, 0.0);
    state_.local_scales.assign(n, 1.0);
    state_.global_scale = config_.initial_global_scale;
    state_.location = config_.initial_location;
    weights_ = {config_.move_weights.hmc, config_.move_weights.global_scale, config_.move_weights.local_scales,
                config_.move_weights.location.value_or(is_ultrametric(tree) ? 0.0 : 1.0)};
    gradient_.assign(n, 0.0);
    refresh();
  }

  auto state() const -> const Clock_state& { return state_; }
  auto iteration() const -> long { return iteration_; }
  auto hmc_statistics() const -> Hmc_statistics {
    auto s = hmc_;
    s.step_size = step_size_;
    return s;
  }
  auto current_value() const -> const Target_value& { return value_; }
  auto rho() const -> std::vector<double> { return rescale_multipliers(*tree_, state_.rates, state_.location); }
  auto move_weights() const -> const std::array<double, 4>& { return weights_; }

  auto step() -> Step_record {
    auto record = Step_record{};
    try {
      record.move = choose_move();
      switch (record.move) {
        case Move::hmc: record.accepted = hmc_move(); break;
        case Move::global_scale:
          state_.global_scale = gibbs_global_scale(state_.increments, config_.clock.alpha, config_.global_prior, rng_);
          record.accepted = true;
          refresh();
          break;
        case Move::local_scales:
          state_.local_scales = gibbs_local_scales(state_.increments, state_.global_scale, config_.clock.alpha, rng_,
                                                   config_.local_scale_method, state_.local_scales);
          record.accepted = true;
          refresh();
          break;
        case Move::location: record.accepted = location_move(); break;
      }
    } catch (const std::runtime_error& e) {
      throw Numeric_error{"iteration " + std::to_string(iteration_) + ": " + e.what()};
    }
    ++iteration_;
    if (iteration_ == config_.burnin && config_.adapt_step_size && hmc_.proposals > 0) { step_size_ = adapter_.final(); }
    if (config_.max_divergences >= 0 && hmc_.divergent > config_.max_divergences) {
      throw Numeric_error{"iteration " + std::to_string(iteration_ - 1) + ": divergent HMC trajectories exceeded the cap of " +
                          std::to_string(config_.max_divergences)};
    }
    return record;
  }

  auto trace_row(const Step_record& record) const -> std::vector<double> {
    auto row = std::vector<double>{static_cast<double>(iteration_ - 1), value_.log_likelihood,
                                   value_.log_prior + value_.log_jacobian, state_.global_scale, state_.location,
                                   static_cast<double>(static_cast<int>(record.move)),
                                   record.accepted ? 1.0 : 0.0};
    row.insert(row.end(), state_.increments.begin(), state_.increments.end());
    row.insert(row.end(), state_.rates.begin(), state_.rates.end());
    return row;
  }

  auto checkpoint() const -> Chain_checkpoint {
    return {iteration_, state_, rng_.state(), adapter_, step_size_, hmc_};
  }

  auto restore(const Chain_checkpoint& cp) -> void {
    iteration_ = cp.iteration;
    state_ = cp.state;
    rng_.restore(cp.rng_state);
    adapter_ = cp.adapter;
    step_size_ = cp.step_size;
    hmc_ = cp.hmc;
    refresh();
  }

 private:
  const Phylogeny* tree_;
  Sampler_config config_;
  Increment_target target_;
  Random rng_;
  Step_size_adapter adapter_;
  double step_size_;
  Clock_state state_;
  Target_value value_;
  std::vector<double> gradient_;
  std::array<double, 4> weights_{};
  Hmc_statistics hmc_;
  long iteration_ = 0;

  auto refresh() -> void {
    state_.rates = rates_from_increments(*tree_, state_.increments);
    value_ = target_.evaluate(state_.increments, state_.local_scales, state_.global_scale, state_.location, gradient_);
  }

  auto choose_move() -> Move {
    auto total = weights_[0] + weights_[1] + weights_[2] + weights_[3];
    auto u = rng_.uniform() * total;
    for (int i = 0; i < 3; ++i) {
      if (u < weights_[i]) { return static_cast<Move>(i); }
      u -= weights_[i];
    }
    return weights_[3] > 0.0 ? Move::location : Move::hmc;
  }

  auto hmc_move() -> bool {
    auto mass = preconditioner(state_.local_scales, state_.global_scale, config_.clock.slab_width);
    auto oracle = [&](std::span<const double> phi, std::span<double> grad) {
      return target_.evaluate(phi, state_.local_scales, state_.global_scale, state_.location, grad).total();
    };
    auto t = hmc_update(state_.increments, value_.total(), gradient_, mass, step_size_, config_.leapfrog_steps, oracle,
                        rng_);
    ++hmc_.proposals;
    if (t.divergent) { ++hmc_.divergent; }
    if (iteration_ < config_.burnin && config_.adapt_step_size) { step_size_ = adapter_.update(t.accept_prob); }
    if (t.accepted) {
      ++hmc_.accepted;
      state_.increments = std::move(t.position);
      refresh();
    }
    return t.accepted;
  }

  auto location_move() -> bool {
    auto log_gamma = std::log(state_.location);
    auto proposed = log_gamma + config_.location_proposal_sd * rng_.normal();
    auto prior_sd = config_.location_prior_sd;
    auto log_prior_ratio = -0.5 * (proposed * proposed - log_gamma * log_gamma) / (prior_sd * prior_sd);
    auto proposed_lik = 0.0;
    try {
      proposed_lik = target_.log_likelihood(state_.increments, std::exp(proposed));
    } catch (const Numeric_error&) {
      return false;
    }
    auto log_ratio = proposed_lik - value_.log_likelihood + log_prior_ratio;
    if (std::log(rng_.uniform()) < log_ratio) {
      state_.location = std::exp(proposed);
      refresh();
      return true;
    }
    return false;
  }
};

// Row sink invoked for each retained state, e.g. to stream CSV.
using Trace_sink = std::function<void(const std::vector<double>&)>;
using Checkpoint_sink = std::function<void(const Chain_checkpoint&)>;

inline auto is_retained(long iteration, const Sampler_config& config) -> bool {
  return iteration >= config.burnin && (iteration - config.burnin) % config.thin == 0;
}

// Runs a chain from its initial state (or a checkpoint) to `chain_length` iterations.
inline auto run_chain(const Phylogeny& tree, Likelihood_engine* engine, const Sampler_config& config,
                      const Trace_sink& sink = {}, const Checkpoint_sink& checkpoint_sink = {},
                      const Chain_checkpoint* resume = nullptr) -> Trace {
  auto chain = Chain{tree, engine, config};
  if (resume != nullptr) { chain.restore(*resume); }
  auto trace = Trace{};
  trace.columns = trace_columns(tree.num_branches());
  trace.seed = config.seed;
  trace.n_branches = tree.num_branches();
  while (chain.iteration() < config.chain_length) {
    auto record = chain.step();
    auto done = chain.iteration() - 1;
    if (is_retained(done, config)) {
      auto row = chain.trace_row(record);
      if (sink) { sink(row); }
      trace.rows.push_back(std::move(row));
    }
    if (checkpoint_sink && config.checkpoint_interval > 0 && chain.iteration() % config.checkpoint_interval == 0) {
      checkpoint_sink(chain.checkpoint());
    }
  }
  trace.hmc = chain.hmc_statistics();
  return trace;
}

// Convenience overload that builds the likelihood engine.
inline auto run_chain(const Phylogeny& tree, const Alignment& alignment, const Substitution_model& model,
                      const Sampler_config& config, const Trace_sink& sink = {}) -> Trace {
  auto engine = Likelihood_engine{tree, alignment, model};
  return run_chain(tree, &engine, config, sink);
}

}  // namespace shrinkclock
