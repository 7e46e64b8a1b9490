#pragma once

// End-to-end commands behind the command-line tool.  Exit codes: 0 success,
// 2 configuration error, 3 data error, 4 runtime failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <json.hpp>

#include "shrinkclock/config.hpp"
#include "shrinkclock/diagnostics.hpp"
#include "shrinkclock/io.hpp"
#include "shrinkclock/likelihood.hpp"
#include "shrinkclock/sampler.hpp"
#include "shrinkclock/seqio.hpp"
#include "shrinkclock/simulate.hpp"
#include "shrinkclock/treeio.hpp"

namespace shrinkclock {

inline constexpr std::string_view k_version = "0.1.0";

enum Exit_code : int { k_exit_ok = 0, k_exit_config = 2, k_exit_data = 3, k_exit_runtime = 4 };

struct Cli_overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
};

namespace detail {

inline auto library_versions() -> nlohmann::json {
  return {{"shrinkclock", std::string{k_version}},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"compiler", __VERSION__},
          {"rng", std::string{Random::algorithm}}};
}

// Maps exceptions to exit codes, reporting on `err`.
template <typename F>
auto guarded(std::ostream& err, F&& body) -> int {
  try {
    return body();
  } catch (const Config_error& e) {
    err << "config error: " << e.what() << "\n";
    return k_exit_config;
  } catch (const Parse_error& e) {
    err << "data error: " << e.what() << "\n";
    return k_exit_data;
  } catch (const Data_error& e) {
    err << "data error: " << e.what() << "\n";
    return k_exit_data;
  } catch (const Numeric_error& e) {
    err << "runtime error: " << e.what() << "\n";
    return k_exit_runtime;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return k_exit_data;
  }
}

// Keeps the header and rows recorded before `iteration`.
inline auto truncate_trace(const std::filesystem::path& path, long iteration) -> std::string {
  auto in = std::istringstream{read_text_file(path)};
  auto out = std::string{};
  auto line_no = 0;
  for (std::string line; std::getline(in, line); ++line_no) {
    if (line_no < 2 || std::stol(line.substr(0, line.find(','))) < iteration) { out += line + "\n"; }
  }
  return out;
}

inline auto write_atomically(const std::filesystem::path& path, std::string_view text) -> void {
  auto tmp = path;
  tmp += ".tmp";
  write_text_file(tmp, text);
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

struct Chain_outputs {
  std::filesystem::path dir;
  std::uint64_t seed = 0;
  std::string trace_checksum;
  long rows = 0;
};

// Runs one chain, streaming its trace, and writes report, annotated tree and manifest.
inline auto run_single_chain(const Run_config& rc, const Config_file& cfg, const Phylogeny& tree,
                             const Alignment& alignment, const Substitution_model& model,
                             const std::filesystem::path& dir, std::uint64_t seed,
                             const std::optional<std::filesystem::path>& resume, std::ostream& log)
    -> Chain_outputs {
  std::filesystem::create_directories(dir);
  auto config = rc.sampler;
  config.seed = seed;
  auto engine = Likelihood_engine{tree, alignment, model};

  auto checkpoint = std::optional<Chain_checkpoint>{};
  auto trace_path = dir / "trace.csv";
  auto prefix = trace_csv_header(seed, tree.num_branches());
  if (resume) {
    checkpoint = checkpoint_from_json(nlohmann::json::parse(read_text_file(*resume), nullptr, false));
    if (static_cast<int>(checkpoint->state.increments.size()) != tree.num_branches()) {
      throw Data_error{"checkpoint does not match the tree"};
    }
    prefix = detail::truncate_trace(trace_path, checkpoint->iteration);
  }
  auto trace_file = std::ofstream{trace_path, std::ios::binary | std::ios::trunc};
  if (!trace_file) { throw Data_error{"cannot write " + trace_path.string()}; }
  trace_file << prefix;
  auto checksum = fnv1a(prefix);
  auto rows = 0L;
  auto sink = [&](const std::vector<double>& row) {
    auto line = trace_csv_row(row);
    checksum = fnv1a(line, checksum);
    trace_file << line;
    ++rows;
  };
  auto checkpoint_sink = [&](const Chain_checkpoint& cp) {
    trace_file.flush();
    detail::write_atomically(dir / "checkpoint.json", checkpoint_to_json(cp).dump(1));
  };
  auto trace = run_chain(tree, &engine, config, sink, checkpoint_sink, checkpoint ? &*checkpoint : nullptr);
  trace_file.close();

  // Summaries use the full trace on disk so a resumed run reports every retained state.
  if (resume) {
    auto in = std::istringstream{read_text_file(trace_path)};
    auto all = std::vector<std::vector<double>>{};
    auto line_no = 0;
    for (std::string line; std::getline(in, line); ++line_no) {
      if (line_no < 2) { continue; }
      auto row = std::vector<double>{};
      auto cells = std::istringstream{line};
      for (std::string cell; std::getline(cells, cell, ',');) { row.push_back(std::stod(cell)); }
      all.push_back(std::move(row));
    }
    trace.rows = std::move(all);
  }

  auto summary = summarize(trace, tree, rc.bf_threshold);
  write_text_file(dir / "report.tsv", report_tsv(summary, tree));
  write_text_file(dir / "annotated.nwk", annotated_newick(summary, tree));

  auto manifest = nlohmann::json{};
  manifest["command"] = "run";
  manifest["versions"] = detail::library_versions();
  manifest["config"] = cfg.entries();
  manifest["config_hash"] = hex(fnv1a(nlohmann::json(cfg.entries()).dump()));
  manifest["seed"] = seed;
  manifest["inputs"] = {{"tree", rc.tree_path.string()},
                        {"tree_hash", hex(fnv1a(read_text_file(rc.tree_path)))},
                        {"alignment", rc.alignment_path.string()},
                        {"alignment_hash", hex(fnv1a(read_text_file(rc.alignment_path)))}};
  manifest["trace_checksum"] = hex(checksum);
  manifest["retained_samples"] = summary.n_samples;
  manifest["hmc"] = {{"proposals", trace.hmc.proposals},
                     {"acceptance_rate", trace.hmc.acceptance_rate()},
                     {"divergent", trace.hmc.divergent},
                     {"step_size", trace.hmc.step_size}};
  if (resume) { manifest["resumed_from"] = resume->string(); }
  write_text_file(dir / "run_manifest.json", manifest.dump(2) + "\n");

  auto clocks = 0;
  for (const auto& b : summary.branches) { clocks += b.clock.is_clock ? 1 : 0; }
  log << dir.string() << ": " << summary.n_samples << " samples, HMC acceptance " << trace.hmc.acceptance_rate()
      << ", " << trace.hmc.divergent << " divergent, " << clocks << " local clock(s), trace " << hex(checksum) << "\n";
  return {dir, seed, hex(checksum), rows};
}

inline auto cmd_run(const std::filesystem::path& config_path, const Cli_overrides& overrides = {},
                    std::ostream& out = std::cout, std::ostream& err = std::cerr) -> int {
  return detail::guarded(err, [&] {
    auto cfg = Config_file::load(config_path);
    auto rc = read_run_config(cfg);
    if (overrides.seed) { rc.sampler.seed = *overrides.seed; }
    if (overrides.chains) {
      if (*overrides.chains < 1) { throw Config_error{"--chains must be at least 1"}; }
      rc.chains = *overrides.chains;
    }
    if (overrides.out_dir) { rc.out_dir = *overrides.out_dir; }
    if (overrides.resume && rc.chains != 1) { throw Config_error{"--resume applies to single-chain runs"}; }

    auto tree = parse_newick(read_text_file(rc.tree_path));
    auto alignment = load_alignment(read_text_file(rc.alignment_path), tree);
    auto model = rc.model.build();
    for (int c = 0; c < rc.chains; ++c) {
      auto dir = rc.chains == 1 ? rc.out_dir : rc.out_dir / ("chain_" + std::to_string(c + 1));
      auto seed = rc.chains == 1 ? rc.sampler.seed : derive_seed(rc.sampler.seed, c);
      run_single_chain(rc, cfg, tree, alignment, model, dir, seed, overrides.resume, out);
    }
    return static_cast<int>(k_exit_ok);
  });
}

inline auto cmd_simulate(const std::filesystem::path& config_path, const Cli_overrides& overrides = {},
                         std::ostream& out = std::cout, std::ostream& err = std::cerr) -> int {
  return detail::guarded(err, [&] {
    auto cfg = Config_file::load(config_path);
    auto sc = read_simulate_config(cfg);
    if (overrides.seed) { sc.seed = *overrides.seed; }
    if (overrides.out_dir) { sc.out_dir = *overrides.out_dir; }
    if (overrides.chains || overrides.resume) { throw Config_error{"simulate takes no --chains or --resume"}; }

    auto tree = sc.tree_path ? parse_newick(read_text_file(*sc.tree_path)) : planted_clock_tree(sc.layout);
    auto rates = annotated_rates(tree);
    auto alignment = simulate_alignment(tree, sc.model.build(), rates, sc.location, sc.n_sites, sc.seed);
    std::filesystem::create_directories(sc.out_dir);
    auto fasta = to_fasta(alignment);
    auto newick = to_newick(tree) + "\n";
    write_text_file(sc.out_dir / "alignment.fasta", fasta);
    write_text_file(sc.out_dir / "tree.nwk", newick);
    auto manifest = nlohmann::json{};
    manifest["command"] = "simulate";
    manifest["versions"] = detail::library_versions();
    manifest["config"] = cfg.entries();
    manifest["config_hash"] = hex(fnv1a(nlohmann::json(cfg.entries()).dump()));
    manifest["seed"] = sc.seed;
    manifest["fasta_checksum"] = hex(fnv1a(fasta));
    manifest["newick_checksum"] = hex(fnv1a(newick));
    write_text_file(sc.out_dir / "simulate_manifest.json", manifest.dump(2) + "\n");
    out << sc.out_dir.string() << ": " << alignment.n_taxa << " sequences x " << alignment.n_sites << " sites ("
        << alignment.n_patterns() << " patterns), fasta " << hex(fnv1a(fasta)) << "\n";
    return static_cast<int>(k_exit_ok);
  });
}

}  // namespace shrinkclock
