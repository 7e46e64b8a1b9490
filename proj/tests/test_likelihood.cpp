#include <gtest/gtest.h>

#include <random>

#include "shrinkclock/likelihood.hpp"
#include "support.hpp"

using namespace shrinkclock;

namespace {

auto random_rho(int n, std::mt19937_64& rng, double lo = 0.3, double hi = 2.0) -> std::vector<double> {
  auto u = std::uniform_real_distribution<double>{lo, hi};
  auto rho = std::vector<double>(n);
  for (auto& x : rho) { x = u(rng); }
  return rho;
}

auto random_model(std::mt19937_64& rng, int ncat) -> Substitution_model {
  auto u = std::uniform_real_distribution<double>{0.3, 3.0};
  auto ex = std::array<double, 6>{};
  for (auto& x : ex) { x = u(rng); }
  auto f = std::array<double, 4>{};
  auto sum = 0.0;
  for (auto& x : f) { sum += (x = u(rng)); }
  for (auto& x : f) { x /= sum; }
  return gtr_eigensystem(ex, f, u(rng), ncat);
}

}  // namespace

TEST(Likelihood, ZeroLengthsGiveRootFrequency) {
  auto tree = parse_newick("((A:1,B:1):1,C:2);");
  auto aln = load_alignment(">A\nA\n>B\nA\n>C\nA\n", tree);
  auto jc = gtr_eigensystem({1, 1, 1, 1, 1, 1}, {0.25, 0.25, 0.25, 0.25});
  auto rho = std::vector<double>(4, 0.0);
  EXPECT_NEAR(log_likelihood(tree, aln, jc, rho), std::log(0.25), 1e-15);
}

TEST(Likelihood, MatchesBruteForceMarginalization) {
  auto rng = std::mt19937_64{2024};
  for (int rep = 0; rep < 20; ++rep) {
    auto tree = test_support::random_tree(4, rng);
    auto aln = test_support::random_alignment(tree, 3, rng, rep % 2 ? 0.2 : 0.0);
    auto model = rep < 10 ? gtr_eigensystem({1, 1, 1, 1, 1, 1}, {0.25, 0.25, 0.25, 0.25}) : random_model(rng, 4);
    auto rho = random_rho(tree.num_branches(), rng);
    auto ours = log_likelihood(tree, aln, model, rho);
    auto oracle = test_support::brute_force_log_likelihood(
        tree, aln, test_support::dense_gtr(model.exchangeabilities, model.frequencies), model.frequencies,
        model.site_rates, rho);
    EXPECT_LE(test_support::relative_error(ours, oracle), 1e-10) << ours << " vs " << oracle;
  }
}

TEST(Likelihood, LinearInPatternWeights) {
  auto rng = std::mt19937_64{5};
  auto tree = test_support::random_tree(10, rng);
  auto aln = test_support::random_alignment(tree, 50, rng);
  auto model = random_model(rng, 4);
  auto rho = random_rho(tree.num_branches(), rng);
  auto base = log_likelihood(tree, aln, model, rho);
  for (auto& w : aln.pattern_weights) { w *= 2.0; }
  EXPECT_NEAR(log_likelihood(tree, aln, model, rho), 2.0 * base, 1e-10 * std::abs(base));
}

TEST(Likelihood, CompressedEqualsExpandedAndPermutationInvariant) {
  auto rng = std::mt19937_64{6};
  auto tree = test_support::random_tree(8, rng);
  auto aln = test_support::random_alignment(tree, 200, rng);
  // Force repeats so compression matters.
  auto columns = std::vector<std::vector<State_mask>>{};
  for (int s = 0; s < 300; ++s) { columns.push_back(aln.patterns[s % 7]); }
  auto compressed = compress_columns(tree.tip_names(), columns);
  auto expanded = compressed;
  expanded.patterns = columns;
  expanded.pattern_weights.assign(columns.size(), 1.0);
  auto model = random_model(rng, 4);
  auto rho = random_rho(tree.num_branches(), rng);
  auto a = log_likelihood(tree, compressed, model, rho);
  auto b = log_likelihood(tree, expanded, model, rho);
  EXPECT_LE(test_support::relative_error(a, b), 1e-12);
  auto permuted = compressed;
  std::reverse(permuted.patterns.begin(), permuted.patterns.end());
  std::reverse(permuted.pattern_weights.begin(), permuted.pattern_weights.end());
  EXPECT_LE(test_support::relative_error(a, log_likelihood(tree, permuted, model, rho)), 1e-12);
}

TEST(Likelihood, GradientMatchesFiniteDifferences) {
  auto rng = std::mt19937_64{99};
  for (int rep = 0; rep < 12; ++rep) {
    auto n = 4 + (rep % 4) * 4;  // 4..16 tips
    auto tree = test_support::random_tree(n, rng);
    auto aln = test_support::random_alignment(tree, 40, rng, 0.1);
    auto model = random_model(rng, 4);
    auto rho = random_rho(tree.num_branches(), rng);
    auto engine = Likelihood_engine{tree, aln, model};
    auto grad = std::vector<double>(tree.num_branches());
    engine.log_likelihood_and_gradient(rho, grad);
    for (int k = 0; k < tree.num_branches(); ++k) {
      auto h = 1e-6;
      auto up = rho;
      auto down = rho;
      up[k] += h;
      down[k] -= h;
      auto fd = (engine.log_likelihood(up) - engine.log_likelihood(down)) / (2.0 * h);
      EXPECT_LT(std::abs(grad[k] - fd), 1e-5 * std::max(std::abs(fd), 1.0)) << "branch " << k;
    }
  }
}

TEST(Likelihood, SaturatedBranchHasFlatGradient) {
  auto tree = parse_newick("((A:1,B:1):1,C:1e4);");
  auto aln = load_alignment(">A\nA\n>B\nC\n>C\nG\n", tree);
  auto jc = gtr_eigensystem({1, 1, 1, 1, 1, 1}, {0.25, 0.25, 0.25, 0.25});
  auto grad = gradient_wrt_multipliers(tree, aln, jc, std::vector<double>(4, 1.0));
  EXPECT_LT(std::abs(grad[2]), 1e-8);
}

TEST(Likelihood, SymmetricCherry) {
  auto tree = parse_newick("((A:0.7,B:0.7):0.3,C:1.1);");
  auto aln = load_alignment(">A\nACGTA\n>B\nACGTA\n>C\nAGGTC\n", tree);
  auto model = gtr_eigensystem({1, 2, 1, 1, 2, 1}, {0.3, 0.2, 0.2, 0.3}, 0.5, 4);
  auto grad = gradient_wrt_multipliers(tree, aln, model, std::vector<double>(4, 1.3));
  EXPECT_NEAR(grad[0], grad[1], 1e-12 * std::abs(grad[0]));
}

TEST(Likelihood, SurvivesLargeTrees) {
  auto rng = std::mt19937_64{3};
  auto tree = test_support::random_tree(512, rng);
  auto aln = test_support::random_alignment(tree, 30, rng);
  auto model = random_model(rng, 4);
  auto value = log_likelihood(tree, aln, model, std::vector<double>(tree.num_branches(), 1.0));
  EXPECT_TRUE(std::isfinite(value));
}

TEST(Likelihood, RejectsBadMultipliers) {
  auto tree = parse_newick("((A:1,B:1):1,C:2);");
  auto aln = load_alignment(">A\nA\n>B\nA\n>C\nA\n", tree);
  auto jc = gtr_eigensystem({1, 1, 1, 1, 1, 1}, {0.25, 0.25, 0.25, 0.25});
  EXPECT_THROW(log_likelihood(tree, aln, jc, std::vector<double>{1, 1, -1, 1}), Numeric_error);
  EXPECT_THROW(log_likelihood(tree, aln, jc, std::vector<double>{1, 1, 1}), Data_error);
}
