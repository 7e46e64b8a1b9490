#pragma once

// Sequence simulation along a timed tree under a relaxed clock, and the fixed
// 40-tip planted-clock tree used by the recovery tests.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shrinkclock/clockmodel.hpp"
#include "shrinkclock/error.hpp"
#include "shrinkclock/random.hpp"
#include "shrinkclock/seqio.hpp"
#include "shrinkclock/substmodel.hpp"
#include "shrinkclock/treeio.hpp"

namespace shrinkclock {

struct Planted_clock_layout {
  int clades = 4;
  int taxa_per_clade = 10;
  double tree_height = 80.0;
  double clade_age = 40.0;      // TMRCA of each clade
  double pair_age = 60.0;       // ((A,B),(C,D)) joins
  double planted_rate = 2.0;    // on the stem and every branch of clade A
};

namespace detail {

// Ladder (caterpillar) clade whose crown is at `age`; internal nodes evenly spaced
// down to age / (n - 1).  Returns the clade's Newick without the stem length.
inline auto ladder_clade(char clade, int n, double age, double rate) -> std::string {
  auto step = age / (n - 1);
  auto tag = rate != 1.0 ? "[&rate=" + format_number(rate) + "]" : std::string{};
  auto tip = [&](int i, double height) {
    return std::string{clade} + std::to_string(i) + tag + ":" + format_number(height);
  };
  // Innermost cherry at height `step`.
  auto text = "(" + tip(n, step) + "," + tip(n - 1, step) + ")";
  for (int i = n - 2; i >= 1; --i) {
    auto child_height = step * (n - 1 - i);
    auto height = child_height + step;
    text = "(" + text + tag + ":" + format_number(step) + "," + tip(i, height) + ")";
  }
  return text;
}

}  // namespace detail

// ((A,B),(C,D)) with ladder clades.  Branches carrying the planted rate are tagged
// `[&rate=...]`; the true clock change sits on the stem of clade A.
inline auto planted_clock_newick(const Planted_clock_layout& layout = {}) -> std::string {
  if (layout.clades != 4) { throw Config_error{"the planted-clock tree has exactly four clades"}; }
  if (layout.taxa_per_clade < 2) { throw Config_error{"clades need at least two taxa"}; }
  if (!(layout.tree_height > layout.pair_age && layout.pair_age > layout.clade_age && layout.clade_age > 0.0)) {
    throw Config_error{"planted-clock ages must satisfy height > pair age > clade age > 0"};
  }
  using detail::format_number;
  auto n = layout.taxa_per_clade;
  auto stem = format_number(layout.pair_age - layout.clade_age);
  auto pair = format_number(layout.tree_height - layout.pair_age);
  auto tag = "[&rate=" + format_number(layout.planted_rate) + "]";
  auto a = detail::ladder_clade('A', n, layout.clade_age, layout.planted_rate) + tag + ":" + stem;
  auto b = detail::ladder_clade('B', n, layout.clade_age, 1.0) + ":" + stem;
  auto c = detail::ladder_clade('C', n, layout.clade_age, 1.0) + ":" + stem;
  auto d = detail::ladder_clade('D', n, layout.clade_age, 1.0) + ":" + stem;
  return "((" + a + "," + b + "):" + pair + ",(" + c + "," + d + "):" + pair + ");";
}

inline auto planted_clock_tree(const Planted_clock_layout& layout = {}) -> Phylogeny {
  return parse_newick(planted_clock_newick(layout));
}

// Clock rates read from `[&rate=...]` annotations; unannotated branches get 1.
inline auto annotated_rates(const Phylogeny& tree) -> std::vector<double> {
  auto rates = std::vector<double>(tree.num_branches(), 1.0);
  for (int k = 0; k < tree.num_branches(); ++k) {
    if (const auto* v = tree.annotation(k, "rate")) { rates[k] = std::stod(*v); }
  }
  return rates;
}

// Node of the planted clade's crown: the MRCA of tips whose names start with `prefix`.
inline auto clade_crown(const Phylogeny& tree, char prefix) -> int {
  auto tips = std::vector<int>{};
  for (int i = 0; i < tree.n_tips; ++i) {
    if (!tree.names[i].empty() && tree.names[i][0] == prefix) { tips.push_back(i); }
  }
  if (tips.empty()) { throw Data_error{std::string{"no tips in clade "} + prefix}; }
  return mrca(tree, tips);
}

// Root state ~ pi; every site draws a rate category uniformly; branch k uses
// P(rho_k t_k s_c) with rho from rescale_multipliers.
inline auto simulate_alignment(const Phylogeny& tree, const Substitution_model& model, std::span<const double> rates,
                               double location, int n_sites, std::uint64_t seed) -> Alignment {
  if (n_sites < 1) { throw Config_error{"n_sites must be at least 1"}; }
  if (static_cast<int>(rates.size()) != tree.num_branches()) { throw Data_error{"expected one rate per branch"}; }
  for (auto r : rates) {
    if (!(r > 0.0) || !std::isfinite(r)) { throw Data_error{"clock rates must be positive"}; }
  }
  if (!(location >= 0.0)) { throw Data_error{"location must be non-negative"}; }

  auto rho = rescale_multipliers(tree, rates, location);
  auto n_cat = static_cast<int>(model.site_rates.size());
  // Cumulative transition rows [branch][category][from][to].
  auto cumulative = std::vector<std::array<double, 16>>(static_cast<std::size_t>(tree.num_branches()) * n_cat);
  for (int k = 0; k < tree.num_branches(); ++k) {
    for (int c = 0; c < n_cat; ++c) {
      auto p = transition_matrix(model, rho[k] * tree.branch_length[k] * model.site_rates[c]);
      auto& out = cumulative[static_cast<std::size_t>(k) * n_cat + c];
      for (int i = 0; i < 4; ++i) {
        auto sum = 0.0;
        for (int j = 0; j < 4; ++j) {
          sum += p(i, j);
          out[4 * i + j] = sum;
        }
      }
    }
  }
  auto draw = [](const double* cdf, double u) {
    for (int j = 0; j < 3; ++j) {
      if (u * cdf[3] < cdf[j]) { return j; }
    }
    return 3;
  };
  auto pi_cdf = std::array<double, 4>{};
  for (int j = 0; j < 4; ++j) { pi_cdf[j] = (j ? pi_cdf[j - 1] : 0.0) + model.frequencies[j]; }

  auto rng = Random{seed};
  auto columns = std::vector<std::vector<State_mask>>(n_sites, std::vector<State_mask>(tree.n_tips));
  auto state = std::vector<int>(tree.num_nodes());
  for (int s = 0; s < n_sites; ++s) {
    auto c = n_cat == 1 ? 0 : static_cast<int>(rng.index(n_cat));
    state[tree.root()] = draw(pi_cdf.data(), rng.uniform());
    for (int k = tree.root() - 1; k >= 0; --k) {
      const auto& cdf = cumulative[static_cast<std::size_t>(k) * n_cat + c];
      state[k] = draw(&cdf[4 * state[tree.parent[k]]], rng.uniform());
      if (tree.is_tip(k)) { columns[s][k] = static_cast<State_mask>(1u << state[k]); }
    }
  }
  return compress_columns(tree.tip_names(), columns);
}

}  // namespace shrinkclock
