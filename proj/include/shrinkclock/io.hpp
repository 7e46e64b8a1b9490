#pragma once

// File helpers, CSV trace formatting, checksums and checkpoint serialization.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "shrinkclock/error.hpp"
#include "shrinkclock/sampler.hpp"
#include "shrinkclock/treeio.hpp"

namespace shrinkclock {

inline auto read_text_file(const std::filesystem::path& path) -> std::string {
  auto in = std::ifstream{path, std::ios::binary};
  if (!in) { throw Data_error{"cannot read " + path.string()}; }
  return {std::istreambuf_iterator<char>{in}, {}};
}

inline auto write_text_file(const std::filesystem::path& path, std::string_view text) -> void {
  auto out = std::ofstream{path, std::ios::binary};
  if (!out) { throw Data_error{"cannot write " + path.string()}; }
  out << text;
}

// 64-bit FNV-1a.
inline auto fnv1a(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ull) -> std::uint64_t {
  for (auto c : data) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ull;
  }
  return hash;
}

inline auto hex(std::uint64_t x) -> std::string {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

inline auto trace_csv_header(std::uint64_t seed, int n_branches) -> std::string {
  auto out = "# rng=" + std::string{Random::algorithm} + " seed=" + std::to_string(seed) + "\n";
  auto cols = trace_columns(n_branches);
  for (std::size_t i = 0; i < cols.size(); ++i) { out += (i ? "," : "") + cols[i]; }
  return out + "\n";
}

inline auto trace_csv_row(const std::vector<double>& row) -> std::string {
  auto out = std::string{};
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) { out.push_back(','); }
    out += detail::format_number(row[i]);
  }
  out.push_back('\n');
  return out;
}

inline auto trace_csv(const Trace& trace) -> std::string {
  auto out = trace_csv_header(trace.seed, trace.n_branches);
  for (const auto& row : trace.rows) { out += trace_csv_row(row); }
  return out;
}

// Doubles are written in shortest round-trip form, so a restored chain continues bit-exactly.
inline auto checkpoint_to_json(const Chain_checkpoint& cp) -> nlohmann::json {
  auto j = nlohmann::json{};
  j["iteration"] = cp.iteration;
  j["increments"] = cp.state.increments;
  j["local_scales"] = cp.state.local_scales;
  j["global_scale"] = cp.state.global_scale;
  j["location"] = cp.state.location;
  j["rng"] = {{"algorithm", std::string{Random::algorithm}}, {"state", cp.rng_state}};
  j["step_size"] = cp.step_size;
  j["adapter"] = {{"target", cp.adapter.target_}, {"mu", cp.adapter.mu_}, {"log_step", cp.adapter.log_step_},
                  {"log_step_bar", cp.adapter.log_step_bar_}, {"h_bar", cp.adapter.h_bar_},
                  {"count", cp.adapter.count_}};
  j["hmc"] = {{"proposals", cp.hmc.proposals}, {"accepted", cp.hmc.accepted}, {"divergent", cp.hmc.divergent}};
  return j;
}

inline auto checkpoint_from_json(const nlohmann::json& j) -> Chain_checkpoint {
  try {
    auto cp = Chain_checkpoint{};
    if (j.at("rng").at("algorithm").get<std::string>() != Random::algorithm) {
      throw Data_error{"checkpoint was written with a different random number generator"};
    }
    cp.iteration = j.at("iteration").get<long>();
    cp.state.increments = j.at("increments").get<std::vector<double>>();
    cp.state.local_scales = j.at("local_scales").get<std::vector<double>>();
    cp.state.global_scale = j.at("global_scale").get<double>();
    cp.state.location = j.at("location").get<double>();
    cp.rng_state = j.at("rng").at("state").get<std::string>();
    cp.step_size = j.at("step_size").get<double>();
    const auto& a = j.at("adapter");
    cp.adapter.target_ = a.at("target").get<double>();
    cp.adapter.mu_ = a.at("mu").get<double>();
    cp.adapter.log_step_ = a.at("log_step").get<double>();
    cp.adapter.log_step_bar_ = a.at("log_step_bar").get<double>();
    cp.adapter.h_bar_ = a.at("h_bar").get<double>();
    cp.adapter.count_ = a.at("count").get<long>();
    const auto& h = j.at("hmc");
    cp.hmc.proposals = h.at("proposals").get<long>();
    cp.hmc.accepted = h.at("accepted").get<long>();
    cp.hmc.divergent = h.at("divergent").get<long>();
    return cp;
  } catch (const nlohmann::json::exception& e) {
    throw Data_error{std::string{"malformed checkpoint: "} + e.what()};
  }
}

}  // namespace shrinkclock
