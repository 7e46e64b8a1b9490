#pragma once

// Nucleotide alignments: FASTA reading/writing and site-pattern compression.

#include <cctype>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "shrinkclock/error.hpp"
#include "shrinkclock/treeio.hpp"

namespace shrinkclock {

// Bitmask over {A=1, C=2, G=4, T=8}; ambiguity codes set several bits.
using State_mask = std::uint8_t;

inline constexpr State_mask k_any_state = 0xF;

// IUPAC nucleotide code to state subset.  Returns 0 for characters outside the table.
inline auto state_mask_of(char c) -> State_mask {
  switch (std::toupper(static_cast<unsigned char>(c))) {
    case 'A': return 1;
    case 'C': return 2;
    case 'G': return 4;
    case 'T': case 'U': return 8;
    case 'R': return 1 | 4;
    case 'Y': return 2 | 8;
    case 'S': return 2 | 4;
    case 'W': return 1 | 8;
    case 'K': return 4 | 8;
    case 'M': return 1 | 2;
    case 'B': return 2 | 4 | 8;
    case 'D': return 1 | 4 | 8;
    case 'H': return 1 | 2 | 8;
    case 'V': return 1 | 2 | 4;
    case 'N': case 'X': case '-': case '?': case '.': return k_any_state;
    default: return 0;
  }
}

inline auto char_of(State_mask m) -> char {
  static constexpr char table[16] = {'-', 'A', 'C', 'M', 'G', 'R', 'S', 'V',
                                     'T', 'W', 'Y', 'H', 'K', 'D', 'B', 'N'};
  return table[m & 0xF];
}

struct Fasta_record {
  std::string name;
  std::string sequence;
};

// Reads '>'-headed records; sequence lines may be wrapped.  The name is the header
// up to the first whitespace.
inline auto parse_fasta(std::string_view text) -> std::vector<Fasta_record> {
  auto records = std::vector<Fasta_record>{};
  auto pos = std::size_t{0};
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) { eol = text.size(); }
    auto line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') { line.remove_suffix(1); }
    if (!line.empty() && line.front() == '>') {
      auto header = line.substr(1);
      auto end = header.find_first_of(" \t");
      auto name = std::string{header.substr(0, end)};
      if (name.empty()) { throw Parse_error{"FASTA header without a name", pos}; }
      records.push_back({std::move(name), {}});
    } else {
      for (auto c : line) {
        if (std::isspace(static_cast<unsigned char>(c))) { continue; }
        if (records.empty()) { throw Parse_error{"FASTA sequence data before the first header", pos}; }
        records.back().sequence.push_back(c);
      }
    }
    pos = eol + 1;
  }
  return records;
}

struct Alignment {
  int n_taxa = 0;
  int n_sites = 0;
  std::vector<std::string> taxa;                 // row order = tree tip index
  std::vector<std::vector<State_mask>> patterns;  // patterns[p][taxon]
  std::vector<double> pattern_weights;            // sums to n_sites
  std::vector<int> site_pattern;                  // column -> pattern

  auto n_patterns() const -> int { return static_cast<int>(patterns.size()); }
};

// Compresses columns (`columns[site][taxon]`) into unique patterns, in order of first appearance.
inline auto compress_columns(std::vector<std::string> taxa,
                             const std::vector<std::vector<State_mask>>& columns) -> Alignment {
  auto aln = Alignment{};
  aln.n_taxa = static_cast<int>(taxa.size());
  aln.n_sites = static_cast<int>(columns.size());
  aln.taxa = std::move(taxa);
  auto index = std::map<std::vector<State_mask>, int>{};
  for (const auto& column : columns) {
    auto [it, inserted] = index.try_emplace(column, aln.n_patterns());
    if (inserted) {
      aln.patterns.push_back(column);
      aln.pattern_weights.push_back(0.0);
    }
    aln.pattern_weights[it->second] += 1.0;
    aln.site_pattern.push_back(it->second);
  }
  return aln;
}

// Loads an aligned FASTA so that row i holds the sequence of tree tip i.
inline auto load_alignment(std::string_view text, const Phylogeny& tree) -> Alignment {
  auto records = parse_fasta(text);
  if (records.empty()) { throw Data_error{"alignment contains no sequences"}; }
  auto by_name = std::unordered_map<std::string, int>{};
  auto length = records.front().sequence.size();
  for (int i = 0; i < static_cast<int>(records.size()); ++i) {
    const auto& r = records[i];
    if (!by_name.emplace(r.name, i).second) { throw Data_error{"duplicate taxon '" + r.name + "' in alignment"}; }
    if (r.sequence.size() != length) {
      throw Data_error{"ragged alignment: '" + r.name + "' has " + std::to_string(r.sequence.size()) +
                       " sites, expected " + std::to_string(length)};
    }
    if (tree.tip_index(r.name) == k_no_node) { throw Data_error{"missing taxon: '" + r.name + "' is not a tree tip"}; }
  }
  if (length == 0) { throw Data_error{"alignment has no sites"}; }
  auto rows = std::vector<const std::string*>(tree.n_tips);
  for (int tip = 0; tip < tree.n_tips; ++tip) {
    auto it = by_name.find(tree.names[tip]);
    if (it == by_name.end()) { throw Data_error{"missing taxon: tree tip '" + tree.names[tip] + "' has no sequence"}; }
    rows[tip] = &records[it->second].sequence;
  }
  auto columns = std::vector<std::vector<State_mask>>(length, std::vector<State_mask>(tree.n_tips));
  for (int tip = 0; tip < tree.n_tips; ++tip) {
    for (std::size_t s = 0; s < length; ++s) {
      auto m = state_mask_of((*rows[tip])[s]);
      if (m == 0) {
        throw Data_error{"unknown character '" + std::string(1, (*rows[tip])[s]) + "' in taxon '" +
                         tree.names[tip] + "' at site " + std::to_string(s + 1)};
      }
      columns[s][tip] = m;
    }
  }
  return compress_columns(tree.tip_names(), columns);
}

// Writes unwrapped FASTA, expanding patterns back to columns.
inline auto to_fasta(const Alignment& aln) -> std::string {
  auto out = std::string{};
  for (int t = 0; t < aln.n_taxa; ++t) {
    out += ">" + aln.taxa[t] + "\n";
    for (auto p : aln.site_pattern) { out.push_back(char_of(aln.patterns[p][t])); }
    out.push_back('\n');
  }
  return out;
}

}  // namespace shrinkclock
