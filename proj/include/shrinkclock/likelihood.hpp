#pragma once

// Felsenstein pruning likelihood and its gradient with respect to branch-rate
// multipliers, using one post-order and one pre-order sweep.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "shrinkclock/error.hpp"
#include "shrinkclock/seqio.hpp"
#include "shrinkclock/substmodel.hpp"
#include "shrinkclock/treeio.hpp"

namespace shrinkclock {

// Partial likelihood storage.  Vectors are laid out [node][pattern][category][state].
struct Likelihood_workspace {
  std::vector<double> post_partials;   // conditional likelihood of the data below each internal node
  std::vector<double> pre_partials;    // likelihood of the data outside the subtree of each node, joint with its state
  std::vector<double> log_scalers;     // [node][pattern], accumulated into pattern_loglik
  std::vector<double> pattern_loglik;  // log of the category-averaged site likelihood
};

class Likelihood_engine {
 public:
  Likelihood_engine(const Phylogeny& tree, const Alignment& alignment, const Substitution_model& model)
      : tree_{tree}, alignment_{alignment}, model_{model} {
    if (alignment.n_taxa != tree.n_tips) { throw Data_error{"alignment rows do not match tree tips"}; }
    n_patterns_ = alignment.n_patterns();
    n_categories_ = static_cast<int>(model.site_rates.size());
    auto block = static_cast<std::size_t>(tree.num_nodes()) * n_patterns_ * n_categories_ * 4;
    ws_.post_partials.assign(block, 0.0);
    ws_.pre_partials.assign(block, 0.0);
    ws_.log_scalers.assign(static_cast<std::size_t>(tree.num_nodes()) * n_patterns_, 0.0);
    ws_.pattern_loglik.assign(n_patterns_, 0.0);
    matrices_.assign(static_cast<std::size_t>(tree.num_branches()) * n_categories_, {});
    transposed_ = matrices_;
    tip_tables_.assign(static_cast<std::size_t>(tree.n_tips) * 16 * n_categories_ * 4, 0.0);
    tip_q_tables_.assign(tip_tables_.size(), 0.0);
    scratch_left_.assign(static_cast<std::size_t>(n_categories_) * 4, 0.0);
    scratch_right_ = scratch_left_;
    tip_masks_.resize(static_cast<std::size_t>(tree.n_tips) * n_patterns_);
    for (int k = 0; k < tree.n_tips; ++k) {
      for (int p = 0; p < n_patterns_; ++p) {
        tip_masks_[static_cast<std::size_t>(k) * n_patterns_ + p] = alignment.patterns[p][k] & 0xF;
      }
    }
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) { q_[4 * i + j] = model.generator(i, j); }
    }
  }

  auto tree() const -> const Phylogeny& { return tree_; }
  auto alignment() const -> const Alignment& { return alignment_; }
  auto model() const -> const Substitution_model& { return model_; }
  auto workspace() const -> const Likelihood_workspace& { return ws_; }

  auto log_likelihood(std::span<const double> rho) -> double {
    update_matrices(rho);
    return post_order();
  }

  // Fills d log L / d rho_k for every branch and returns log L.
  auto log_likelihood_and_gradient(std::span<const double> rho, std::span<double> gradient) -> double {
    update_matrices(rho);
    auto log_lik = post_order();
    pre_order(gradient);
    return log_lik;
  }

 private:
  using Row_matrix = std::array<double, 16>;

  Phylogeny tree_;
  Alignment alignment_;
  Substitution_model model_;
  int n_patterns_ = 0;
  int n_categories_ = 1;
  Likelihood_workspace ws_;
  std::vector<Row_matrix> matrices_;    // [branch][category]
  std::vector<Row_matrix> transposed_;  // column-major copies, for loops vectorized over states
  std::vector<double> tip_tables_;    // [tip][state mask][category][state]
  std::vector<double> tip_q_tables_;  // Q applied to tip_tables_ rows
  std::vector<double> scratch_left_;   // one pattern's [category][state] block each
  std::vector<double> scratch_right_;
  std::vector<State_mask> tip_masks_;  // [tip][pattern]
  Row_matrix q_{};

  // Entries this far below the largest one cannot affect a site likelihood; zeroing
  // them keeps deep trees out of subnormal arithmetic.
  static constexpr double k_negligible = 1e-250;

  // Divides a partial vector by the power of two nearest below its maximum (exact, and
  // cheaper than a logarithm per node); returns the log of the factor removed.
  static auto normalize(double* values, std::size_t n, double max) -> double {
    // Exponent field of a normal double; subnormal maxima take the library path.
    auto bits = std::bit_cast<std::uint64_t>(max);
    auto exponent = static_cast<int>((bits >> 52) & 0x7ff) - 1023;
    auto inv = exponent > -1023 && exponent < 1023 ? std::bit_cast<double>(static_cast<std::uint64_t>(1023 - exponent) << 52)
                                                   : std::ldexp(1.0, -(exponent = std::ilogb(max)));
    for (std::size_t i = 0; i < n; ++i) {
      auto x = values[i] * inv;
      values[i] = x < k_negligible ? 0.0 : x;
    }
    return exponent * std::numbers::ln2;
  }

  auto offset(int node, int pattern) const -> std::size_t {
    return (static_cast<std::size_t>(node) * n_patterns_ + pattern) * n_categories_ * 4;
  }

  auto update_matrices(std::span<const double> rho) -> void {
    if (static_cast<int>(rho.size()) != tree_.num_branches()) {
      throw Data_error{"expected one rate multiplier per branch"};
    }
    for (int k = 0; k < tree_.num_branches(); ++k) {
      if (!(rho[k] >= 0.0) || !std::isfinite(rho[k])) {
        throw Numeric_error{"branch rate multiplier " + std::to_string(k) + " is not a finite non-negative number"};
      }
      for (int c = 0; c < n_categories_; ++c) {
        auto p = transition_matrix(model_, rho[k] * tree_.branch_length[k] * model_.site_rates[c]);
        auto& out = matrices_[static_cast<std::size_t>(k) * n_categories_ + c];
        auto& out_t = transposed_[static_cast<std::size_t>(k) * n_categories_ + c];
        for (int i = 0; i < 4; ++i) {
          for (int j = 0; j < 4; ++j) {
            out[4 * i + j] = p(i, j);
            out_t[4 * j + i] = p(i, j);
          }
        }
      }
    }
    // Tip branch tops depend only on the observed state set: tabulate all 16.
    for (int k = 0; k < tree_.n_tips; ++k) {
      for (unsigned mask = 0; mask < 16; ++mask) {
        auto* row = &tip_tables_[(static_cast<std::size_t>(k) * 16 + mask) * n_categories_ * 4];
        for (int c = 0; c < n_categories_; ++c) {
          const auto& m = matrices_[static_cast<std::size_t>(k) * n_categories_ + c];
          for (int a = 0; a < 4; ++a) {
            auto sum = 0.0;
            for (int b = 0; b < 4; ++b) {
              if (mask & (1u << b)) { sum += m[4 * a + b]; }
            }
            row[4 * c + a] = sum;
          }
          // Q times the same column sums, for the gradient sweep.
          auto* q_row = &tip_q_tables_[(static_cast<std::size_t>(k) * 16 + mask) * n_categories_ * 4 + 4 * c];
          for (int a = 0; a < 4; ++a) {
            q_row[a] = q_[4 * a] * row[4 * c] + q_[4 * a + 1] * row[4 * c + 1] + q_[4 * a + 2] * row[4 * c + 2] +
                       q_[4 * a + 3] * row[4 * c + 3];
          }
        }
      }
    }
  }

  auto tip_row(const std::vector<double>& table, int k, int p) const -> const double* {
    return &table[(static_cast<std::size_t>(k) * 16 + tip_masks_[static_cast<std::size_t>(k) * n_patterns_ + p]) *
                  n_categories_ * 4];
  }

  // The partial seen at the top of branch k, P_k times the partial of node k, for one
  // pattern.  Tips read a table row; internal nodes are recomputed into `scratch`
  // rather than stored, which keeps the working set to two arrays.
  auto top_of(int k, int p, double* scratch) const -> const double* {
    if (tree_.is_tip(k)) { return tip_row(tip_tables_, k, p); }
    const auto* below = &ws_.post_partials[offset(k, p)];
    for (int c = 0; c < n_categories_; ++c) {
      const auto& mt = transposed_[static_cast<std::size_t>(k) * n_categories_ + c];
      const auto v0 = below[4 * c];
      const auto v1 = below[4 * c + 1];
      const auto v2 = below[4 * c + 2];
      const auto v3 = below[4 * c + 3];
      auto result = std::array<double, 4>{};
      for (int a = 0; a < 4; ++a) { result[a] = mt[a] * v0 + mt[4 + a] * v1 + mt[8 + a] * v2 + mt[12 + a] * v3; }
      std::copy(result.begin(), result.end(), scratch + 4 * c);
    }
    return scratch;
  }

  auto post_order() -> double {
    const auto block = static_cast<std::size_t>(n_categories_) * 4;
    for (int k = tree_.n_tips; k < tree_.num_nodes(); ++k) {
      auto [l, r] = tree_.children[k];
      for (int p = 0; p < n_patterns_; ++p) {
        auto* out = &ws_.post_partials[offset(k, p)];
        const auto* lt = top_of(l, p, scratch_left_.data());
        const auto* rt = top_of(r, p, scratch_right_.data());
        auto max = 0.0;
        for (std::size_t i = 0; i < block; ++i) {
          out[i] = lt[i] * rt[i];
          max = std::max(max, out[i]);
        }
        auto& scaler = ws_.log_scalers[static_cast<std::size_t>(k) * n_patterns_ + p];
        if (max > 0.0 && std::isfinite(max)) {
          scaler = normalize(out, block, max);
        } else {
          scaler = 0.0;
        }
      }
    }

    auto pi = model_.pi();
    auto total = 0.0;
    for (int p = 0; p < n_patterns_; ++p) {
      const auto* root = &ws_.post_partials[offset(tree_.root(), p)];
      auto site = 0.0;
      for (int c = 0; c < n_categories_; ++c) {
        for (int a = 0; a < 4; ++a) { site += pi[a] * root[4 * c + a]; }
      }
      site /= n_categories_;
      if (!(site > 0.0) || !std::isfinite(site)) {
        throw Numeric_error{"site likelihood underflow at pattern " + std::to_string(p)};
      }
      auto log_site = std::log(site);
      for (int k = tree_.n_tips; k < tree_.num_nodes(); ++k) {
        log_site += ws_.log_scalers[static_cast<std::size_t>(k) * n_patterns_ + p];
      }
      ws_.pattern_loglik[p] = log_site;
      total += alignment_.pattern_weights[p] * log_site;
    }
    return total;
  }

  // Branch x below node u, with sibling y: the data likelihood factorizes as
  // sum_a above_x[a] * top_x[a] with above_x = pre_u (.) top_y.  Differentiating
  // top_x = P_x post_x in rho_x gives t_x s_c Q top_x.  Returns the per-pattern ratio
  // d L / d rho_x over L (free of rescaling constants) and, for internal x, writes
  // pre_x = above_x P_x.
  auto branch_term(int x, int p, const double* pre_u, const double* top_x, const double* top_y) -> double {
    const auto block = static_cast<std::size_t>(n_categories_) * 4;
    auto numerator = 0.0;
    auto denominator = 0.0;
    if (tree_.is_tip(x)) {
      const auto* q_top = tip_row(tip_q_tables_, x, p);
      for (int c = 0; c < n_categories_; ++c) {
        auto num_c = 0.0;
        for (int a = 0; a < 4; ++a) {
          auto ab = pre_u[4 * c + a] * top_y[4 * c + a];
          denominator += ab * top_x[4 * c + a];
          num_c += ab * q_top[4 * c + a];
        }
        numerator += model_.site_rates[c] * num_c;
      }
    } else {
      auto* pre_x = &ws_.pre_partials[offset(x, p)];
      auto max = 0.0;
      for (int c = 0; c < n_categories_; ++c) {
        auto ab = std::array<double, 4>{};
        for (int a = 0; a < 4; ++a) { ab[a] = pre_u[4 * c + a] * top_y[4 * c + a]; }
        // (above^T Q) top, with the row vector above^T Q formed first.
        auto qa = std::array<double, 4>{};
        for (int j = 0; j < 4; ++j) {
          qa[j] = ab[0] * q_[j] + ab[1] * q_[4 + j] + ab[2] * q_[8 + j] + ab[3] * q_[12 + j];
        }
        const auto* tx = &top_x[4 * c];
        denominator += ab[0] * tx[0] + ab[1] * tx[1] + ab[2] * tx[2] + ab[3] * tx[3];
        numerator += model_.site_rates[c] * (qa[0] * tx[0] + qa[1] * tx[1] + qa[2] * tx[2] + qa[3] * tx[3]);
        const auto& m = matrices_[static_cast<std::size_t>(x) * n_categories_ + c];
        for (int b = 0; b < 4; ++b) {
          auto value = ab[0] * m[b] + ab[1] * m[4 + b] + ab[2] * m[8 + b] + ab[3] * m[12 + b];
          pre_x[4 * c + b] = value;
          max = std::max(max, value);
        }
      }
      if (max > 0.0) { normalize(pre_x, block, max); }
    }
    if (!(denominator > 0.0)) { throw Numeric_error{"pre-order partial underflow at branch " + std::to_string(x)}; }
    return numerator / denominator;
  }

  // One pass from the root over internal nodes, visiting both child branches of each.
  auto pre_order(std::span<double> gradient) -> void {
    if (static_cast<int>(gradient.size()) != tree_.num_branches()) {
      throw Data_error{"gradient buffer must have one entry per branch"};
    }
    auto pi = model_.pi();
    for (int p = 0; p < n_patterns_; ++p) {
      auto* root_pre = &ws_.pre_partials[offset(tree_.root(), p)];
      for (int c = 0; c < n_categories_; ++c) {
        for (int a = 0; a < 4; ++a) { root_pre[4 * c + a] = pi[a]; }
      }
    }
    std::fill(gradient.begin(), gradient.end(), 0.0);

    for (int u = tree_.root(); u >= tree_.n_tips; --u) {
      auto [l, r] = tree_.children[u];
      auto g_left = 0.0;
      auto g_right = 0.0;
      for (int p = 0; p < n_patterns_; ++p) {
        const auto* pre_u = &ws_.pre_partials[offset(u, p)];
        const auto* top_l = top_of(l, p, scratch_left_.data());
        const auto* top_r = top_of(r, p, scratch_right_.data());
        auto w = alignment_.pattern_weights[p];
        g_left += w * branch_term(l, p, pre_u, top_l, top_r);
        g_right += w * branch_term(r, p, pre_u, top_r, top_l);
      }
      gradient[l] = tree_.branch_length[l] * g_left;
      gradient[r] = tree_.branch_length[r] * g_right;
    }
  }
};

inline auto log_likelihood(const Phylogeny& tree, const Alignment& alignment, const Substitution_model& model,
                           std::span<const double> rho) -> double {
  return Likelihood_engine{tree, alignment, model}.log_likelihood(rho);
}

inline auto gradient_wrt_multipliers(const Phylogeny& tree, const Alignment& alignment,
                                     const Substitution_model& model, std::span<const double> rho)
    -> std::vector<double> {
  auto gradient = std::vector<double>(tree.num_branches());
  Likelihood_engine{tree, alignment, model}.log_likelihood_and_gradient(rho, gradient);
  return gradient;
}

}  // namespace shrinkclock
