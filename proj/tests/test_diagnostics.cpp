#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "shrinkclock/diagnostics.hpp"

using namespace shrinkclock;

namespace {

auto ar1(int n, double rho, std::uint64_t seed) -> std::vector<double> {
  auto rng = std::mt19937_64{seed};
  auto nd = std::normal_distribution<double>{};
  auto x = std::vector<double>(n);
  x[0] = nd(rng) / std::sqrt(1 - rho * rho);
  for (int i = 1; i < n; ++i) { x[i] = rho * x[i - 1] + nd(rng); }
  return x;
}

auto trace_with(std::vector<std::vector<double>> phi_columns) -> Trace {
  auto n_branches = static_cast<int>(phi_columns.size());
  auto trace = Trace{};
  trace.n_branches = n_branches;
  trace.columns = trace_columns(n_branches);
  auto n = phi_columns[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = std::vector<double>{static_cast<double>(i), -10.0, -1.0, 0.1 + 0.01 * std::sin(i), 1.0, 0.0, 1.0};
    for (const auto& c : phi_columns) { row.push_back(c[i]); }
    for (const auto& c : phi_columns) { row.push_back(std::exp(c[i])); }
    trace.rows.push_back(row);
  }
  return trace;
}

}  // namespace

TEST(Ess, IndependentDraws) {
  auto x = ar1(100'000, 0.0, 1);
  auto ess = effective_sample_size(x).ess;
  EXPECT_GT(ess, 0.8e5);
  EXPECT_LT(ess, 1.2e5);
}

TEST(Ess, Ar1MatchesTheory) {
  auto x = ar1(100'000, 0.9, 2);
  auto expected = 1e5 * (1 - 0.9) / (1 + 0.9);
  EXPECT_NEAR(effective_sample_size(x).ess, expected, 0.2 * expected);
}

TEST(Ess, ConstantSeriesIsFlagged) {
  auto x = std::vector<double>(50, 3.0);
  auto r = effective_sample_size(x);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.ess, 50.0);
  EXPECT_THROW(effective_sample_size(std::vector<double>(5, 1.0)), Data_error);
}

TEST(BayesFactor, Thresholds) {
  auto half = classify_clock(50, 100);
  EXPECT_DOUBLE_EQ(half.bayes_factor, 1.0);
  EXPECT_FALSE(half.is_clock);

  auto at = classify_clock(1000, 1100);  // 10/11 positive: odds exactly 10
  EXPECT_DOUBLE_EQ(at.bayes_factor, 10.0);
  EXPECT_FALSE(at.is_clock);
  EXPECT_TRUE(classify_clock(1001, 1100).is_clock);
  EXPECT_TRUE(classify_clock(99, 1100).is_clock);
}

TEST(BayesFactor, SaturatedCounts) {
  auto all = classify_clock(200, 200);
  EXPECT_TRUE(std::isinf(all.bayes_factor));
  EXPECT_TRUE(all.saturated);
  EXPECT_TRUE(all.is_clock);
  auto none = classify_clock(0, 200);
  EXPECT_EQ(none.bayes_factor, 0.0);
  EXPECT_TRUE(none.saturated);
  EXPECT_TRUE(none.is_clock);
}

TEST(BayesFactor, InvariantToThinningOfBalancedTrace) {
  // One negative in every four samples, which thinning by 3 preserves.
  auto phi = std::vector<double>(3000);
  for (std::size_t i = 0; i < phi.size(); ++i) { phi[i] = i % 4 == 0 ? -0.1 : 0.2; }
  auto full = clock_bayes_factors(trace_with({phi}));
  auto thinned = std::vector<double>{};
  for (std::size_t i = 0; i < phi.size(); i += 3) { thinned.push_back(phi[i]); }
  auto thin = clock_bayes_factors(trace_with({thinned}));
  EXPECT_NEAR(full[0].bayes_factor, thin[0].bayes_factor, 1e-12);
  EXPECT_THROW(clock_bayes_factors(trace_with({std::vector<double>(20, 1.0)})), Data_error);
}

TEST(Hpd, StandardNormal) {
  auto rng = std::mt19937_64{5};
  auto nd = std::normal_distribution<double>{};
  auto x = std::vector<double>(200'000);
  for (auto& v : x) { v = nd(rng); }
  auto hpd = hpd_interval(x, 0.95);
  EXPECT_NEAR(hpd.lower, -1.96, 0.05);
  EXPECT_NEAR(hpd.upper, 1.96, 0.05);
}

TEST(Hpd, SkewedAndDegenerate) {
  auto rng = std::mt19937_64{6};
  auto ex = std::exponential_distribution<double>{1.0};
  auto x = std::vector<double>(100'000);
  for (auto& v : x) { v = ex(rng); }
  auto hpd = hpd_interval(x, 0.95);
  EXPECT_LT(hpd.lower, 0.01);
  EXPECT_NEAR(hpd.upper, -std::log(0.05), 0.05);
  auto one = hpd_interval(std::vector<double>{2.5});
  EXPECT_EQ(one.lower, 2.5);
  EXPECT_EQ(one.upper, 2.5);
  EXPECT_THROW(hpd_interval(std::vector<double>{}), Data_error);
}

TEST(Summary, AnnotatedTreeReparses) {
  auto tree = parse_newick("((A:1,B:1):1,C:2);");
  auto rng = std::mt19937_64{7};
  auto nd = std::normal_distribution<double>{};
  auto cols = std::vector<std::vector<double>>(4, std::vector<double>(500));
  for (auto& c : cols) {
    for (auto& v : c) { v = nd(rng) + 0.3; }
  }
  auto trace = trace_with(cols);
  auto summary = summarize(trace, tree);
  for (const auto& b : summary.branches) {
    EXPECT_GE(b.rate.mean, b.rate.hpd.lower);
    EXPECT_LE(b.rate.mean, b.rate.hpd.upper);
  }
  auto text = annotated_newick(summary, tree);
  auto back = parse_newick(text);
  EXPECT_EQ(back.tip_names(), tree.tip_names());
  for (int k = 0; k < tree.num_branches(); ++k) {
    ASSERT_NE(back.annotation(k, "rate_mean"), nullptr);
    EXPECT_DOUBLE_EQ(std::stod(*back.annotation(k, "rate_mean")), summary.branches[k].rate.mean);
    EXPECT_DOUBLE_EQ(std::stod(*back.annotation(k, "p_pos")), summary.branches[k].clock.p_positive);
  }
  auto report = report_tsv(summary, tree);
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 1 + 2 + 2 * tree.num_branches());
}
