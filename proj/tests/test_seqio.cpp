#include <gtest/gtest.h>

#include "shrinkclock/seqio.hpp"
#include "shrinkclock/treeio.hpp"

using namespace shrinkclock;

namespace {

auto three_tips() -> Phylogeny { return parse_newick("((A:1,B:1):1,C:2);"); }

auto data_error(std::string_view fasta) -> std::string {
  try {
    load_alignment(fasta, three_tips());
  } catch (const Data_error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Seqio, ColumnCompression) {
  // Columns: (A,A,C), (A,A,C), (C,C,A)
  auto aln = load_alignment(">A\nAAC\n>B\nAAC\n>C\nCCA\n", three_tips());
  EXPECT_EQ(aln.n_sites, 3);
  ASSERT_EQ(aln.n_patterns(), 2);
  EXPECT_EQ(aln.pattern_weights, (std::vector<double>{2.0, 1.0}));
  EXPECT_EQ(aln.site_pattern, (std::vector<int>{0, 0, 1}));
}

TEST(Seqio, RowsFollowTreeTipOrder) {
  auto aln = load_alignment(">C\nT\n>A\nA\n>B\nG\n", three_tips());
  EXPECT_EQ(aln.taxa, (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_EQ(aln.patterns[0][0], state_mask_of('A'));
  EXPECT_EQ(aln.patterns[0][2], state_mask_of('T'));
}

TEST(Seqio, MissingTaxonBothWays) {
  EXPECT_NE(data_error(">A\nA\n>B\nA\n>C\nA\n>D\nA\n").find("missing taxon"), std::string::npos);
  EXPECT_NE(data_error(">A\nA\n>B\nA\n").find("missing taxon"), std::string::npos);
}

TEST(Seqio, RaggedAndUnknown) {
  EXPECT_NE(data_error(">A\nAA\n>B\nA\n>C\nAA\n").find("ragged"), std::string::npos);
  EXPECT_NE(data_error(">A\nAJ\n>B\nAA\n>C\nAA\n").find("unknown character"), std::string::npos);
  EXPECT_NE(data_error(">A\nA\n>A\nA\n>C\nA\n").find("duplicate"), std::string::npos);
  EXPECT_FALSE(data_error("").empty());
}

TEST(Seqio, IupacAndCase) {
  EXPECT_EQ(state_mask_of('a'), state_mask_of('A'));
  EXPECT_EQ(state_mask_of('R'), state_mask_of('A') | state_mask_of('G'));
  EXPECT_EQ(state_mask_of('Y'), state_mask_of('C') | state_mask_of('T'));
  EXPECT_EQ(state_mask_of('N'), 0xF);
  EXPECT_EQ(state_mask_of('-'), 0xF);
  EXPECT_EQ(state_mask_of('?'), 0xF);
  EXPECT_EQ(state_mask_of('B'), 0xE);
  EXPECT_EQ(state_mask_of('U'), state_mask_of('T'));
  EXPECT_EQ(state_mask_of('J'), 0);
}

TEST(Seqio, WrappedLinesAndHeaders) {
  auto aln = load_alignment(">A first taxon\nAC\nGT\r\n>B\nACGT\n>C\nAC\nGT\n", three_tips());
  EXPECT_EQ(aln.n_sites, 4);
  EXPECT_EQ(aln.n_patterns(), 4);
}

TEST(Seqio, FastaRoundTrip) {
  auto tree = three_tips();
  auto aln = load_alignment(">A\nACGTR-\n>B\nAAGTNC\n>C\nTCGTAC\n", tree);
  auto again = load_alignment(to_fasta(aln), tree);
  EXPECT_EQ(again.patterns, aln.patterns);
  EXPECT_EQ(again.site_pattern, aln.site_pattern);
}
