#pragma once

// Flat TOML-style run configuration: `[section]` headers, `key = value` lines,
// `#` comments.  Values are bare tokens, "quoted strings" or [comma, separated] lists.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shrinkclock/error.hpp"
#include "shrinkclock/sampler.hpp"
#include "shrinkclock/simulate.hpp"
#include "shrinkclock/substmodel.hpp"

namespace shrinkclock {

class Config_file {
 public:
  Config_file() = default;

  static auto parse(std::string_view text) -> Config_file {
    auto cfg = Config_file{};
    auto section = std::string{};
    auto line_no = 0;
    auto in = std::istringstream{std::string{text}};
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      line = strip(strip_comment(line));
      if (line.empty()) { continue; }
      if (line.front() == '[') {
        if (line.back() != ']') { throw Config_error{"line " + std::to_string(line_no) + ": unterminated section header"}; }
        section = strip(line.substr(1, line.size() - 2));
        if (section.empty()) { throw Config_error{"line " + std::to_string(line_no) + ": empty section name"}; }
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos) { throw Config_error{"line " + std::to_string(line_no) + ": expected key = value"}; }
      auto key = strip(line.substr(0, eq));
      auto value = strip(line.substr(eq + 1));
      if (key.empty()) { throw Config_error{"line " + std::to_string(line_no) + ": empty key"}; }
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') { value = value.substr(1, value.size() - 2); }
      auto full = section.empty() ? key : section + "." + key;
      if (!cfg.values_.emplace(full, value).second) {
        throw Config_error{"line " + std::to_string(line_no) + ": duplicate key " + full};
      }
    }
    return cfg;
  }

  static auto load(const std::filesystem::path& path) -> Config_file {
    auto in = std::ifstream{path};
    if (!in) { throw Config_error{"cannot read config file " + path.string()}; }
    auto text = std::string{std::istreambuf_iterator<char>{in}, {}};
    auto cfg = parse(text);
    cfg.base_ = path.parent_path();
    return cfg;
  }

  auto has(const std::string& key) const -> bool { return values_.count(key) > 0; }
  auto base_directory() const -> const std::filesystem::path& { return base_; }

  auto string(const std::string& key) const -> std::optional<std::string> {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) { return std::nullopt; }
    return it->second;
  }

  auto required_string(const std::string& key) const -> std::string {
    auto v = string(key);
    if (!v || v->empty()) { throw Config_error{"missing required key " + key}; }
    return *v;
  }

  // Relative paths resolve against the config file's directory.
  auto path(const std::string& key) const -> std::optional<std::filesystem::path> {
    auto v = string(key);
    if (!v) { return std::nullopt; }
    auto p = std::filesystem::path{*v};
    return p.is_absolute() || base_.empty() ? p : base_ / p;
  }

  auto real(const std::string& key, double fallback) const -> double {
    auto v = string(key);
    if (!v) { return fallback; }
    return to_real(key, *v);
  }

  auto integer(const std::string& key, long long fallback) const -> long long {
    auto v = string(key);
    if (!v) { return fallback; }
    auto out = 0LL;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) { throw Config_error{key + ": expected an integer, got '" + *v + "'"}; }
    return out;
  }

  auto unsigned_integer(const std::string& key, std::uint64_t fallback) const -> std::uint64_t {
    auto v = string(key);
    if (!v) { return fallback; }
    auto out = std::uint64_t{0};
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) { throw Config_error{key + ": expected a non-negative integer, got '" + *v + "'"}; }
    return out;
  }

  auto boolean(const std::string& key, bool fallback) const -> bool {
    auto v = string(key);
    if (!v) { return fallback; }
    if (*v == "true" || *v == "on") { return true; }
    if (*v == "false" || *v == "off") { return false; }
    throw Config_error{key + ": expected on/off or true/false, got '" + *v + "'"};
  }

  auto reals(const std::string& key) const -> std::optional<std::vector<double>> {
    auto v = string(key);
    if (!v) { return std::nullopt; }
    auto text = *v;
    if (!text.empty() && text.front() == '[') {
      if (text.back() != ']') { throw Config_error{key + ": unterminated list"}; }
      text = text.substr(1, text.size() - 2);
    }
    auto out = std::vector<double>{};
    auto in = std::istringstream{text};
    for (std::string item; std::getline(in, item, ',');) { out.push_back(to_real(key, strip(item))); }
    return out;
  }

  // Keys present in the file but never read.
  auto unused_keys() const -> std::vector<std::string> {
    auto out = std::vector<std::string>{};
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) { out.push_back(k); }
    }
    return out;
  }

  auto entries() const -> const std::map<std::string, std::string>& { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
  std::filesystem::path base_;

  static auto strip(const std::string& s) -> std::string {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) { return {}; }
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static auto strip_comment(const std::string& s) -> std::string {
    auto quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') { quoted = !quoted; }
      if (s[i] == '#' && !quoted) { return s.substr(0, i); }
    }
    return s;
  }

  static auto to_real(const std::string& key, const std::string& v) -> double {
    try {
      auto pos = std::size_t{0};
      auto x = std::stod(v, &pos);
      if (pos != v.size()) { throw std::invalid_argument{v}; }
      return x;
    } catch (const std::logic_error&) {
      throw Config_error{key + ": expected a number, got '" + v + "'"};
    }
  }
};

// ---------------------------------------------------------------------------

struct Model_config {
  std::array<double, 6> exchangeabilities{1, 1, 1, 1, 1, 1};
  std::array<double, 4> frequencies{0.25, 0.25, 0.25, 0.25};
  double gamma_shape = 1.0;
  int categories = 4;

  auto build() const -> Substitution_model {
    return gtr_eigensystem(exchangeabilities, frequencies, gamma_shape, categories);
  }
};

struct Run_config {
  std::filesystem::path tree_path;
  std::filesystem::path alignment_path;
  Model_config model;
  Sampler_config sampler;
  int chains = 1;
  std::filesystem::path out_dir = "out";
  double bf_threshold = 10.0;
};

struct Simulate_config {
  Model_config model;
  Planted_clock_layout layout;
  std::optional<std::filesystem::path> tree_path;  // default: the planted-clock tree
  int n_sites = 1000;
  double location = 0.002;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
};

namespace detail {

inline auto read_model(const Config_file& cfg) -> Model_config {
  auto m = Model_config{};
  if (auto v = cfg.reals("model.exchangeabilities")) {
    if (v->size() != 6) { throw Config_error{"model.exchangeabilities: expected 6 values"}; }
    std::copy(v->begin(), v->end(), m.exchangeabilities.begin());
  }
  if (auto v = cfg.reals("model.frequencies")) {
    if (v->size() != 4) { throw Config_error{"model.frequencies: expected 4 values"}; }
    std::copy(v->begin(), v->end(), m.frequencies.begin());
  }
  m.gamma_shape = cfg.real("model.gamma_shape", m.gamma_shape);
  m.categories = static_cast<int>(cfg.integer("model.categories", m.categories));
  for (auto x : m.exchangeabilities) {
    if (!(x > 0.0)) { throw Config_error{"model.exchangeabilities must be positive"}; }
  }
  auto sum = 0.0;
  for (auto x : m.frequencies) {
    if (!(x > 0.0)) { throw Config_error{"model.frequencies must be positive"}; }
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-8) { throw Config_error{"model.frequencies must sum to 1"}; }
  if (!(m.gamma_shape > 0.0)) { throw Config_error{"model.gamma_shape must be positive"}; }
  if (m.categories < 1) { throw Config_error{"model.categories must be at least 1"}; }
  return m;
}

// Unknown keys inside the sections a command reads are errors; other known
// sections may share the file.
inline auto reject_unused(const Config_file& cfg, std::initializer_list<std::string_view> checked) -> void {
  static constexpr std::array<std::string_view, 7> known{"data", "model", "clock", "sampler", "output", "simulate", ""};
  for (const auto& key : cfg.unused_keys()) {
    auto dot = key.find('.');
    auto section = dot == std::string::npos ? std::string_view{} : std::string_view{key}.substr(0, dot);
    if (std::find(known.begin(), known.end(), section) == known.end()) { throw Config_error{"unknown config section in key " + key}; }
    if (std::find(checked.begin(), checked.end(), section) != checked.end() || section.empty()) {
      throw Config_error{"unknown config key " + key};
    }
  }
}

}  // namespace detail

inline auto read_run_config(const Config_file& cfg) -> Run_config {
  auto rc = Run_config{};
  auto tree = cfg.path("data.tree");
  if (!tree || tree->empty()) { throw Config_error{"missing required key data.tree"}; }
  auto aln = cfg.path("data.alignment");
  if (!aln || aln->empty()) { throw Config_error{"missing required key data.alignment"}; }
  rc.tree_path = *tree;
  rc.alignment_path = *aln;
  rc.model = detail::read_model(cfg);

  auto& s = rc.sampler;
  s.clock.alpha = cfg.real("clock.alpha", s.clock.alpha);
  s.clock.slab_width = cfg.real("clock.slab_width", s.clock.slab_width);
  s.clock.jacobian_in_target = cfg.boolean("clock.jacobian_in_target", s.clock.jacobian_in_target);
  s.global_prior.shape = cfg.real("clock.global_scale_shape", s.global_prior.shape);
  s.global_prior.scale = cfg.real("clock.global_scale_scale", s.global_prior.scale);
  auto method = cfg.string("clock.local_scale_sampler").value_or("double_rejection");
  if (method == "double_rejection") {
    s.local_scale_method = Local_scale_method::double_rejection;
  } else if (method == "slice") {
    s.local_scale_method = Local_scale_method::slice;
  } else {
    throw Config_error{"clock.local_scale_sampler: expected double_rejection or slice"};
  }

  s.chain_length = cfg.integer("sampler.chain_length", s.chain_length);
  s.burnin = cfg.integer("sampler.burnin", s.burnin);
  s.thin = cfg.integer("sampler.thin", s.thin);
  s.leapfrog_steps = static_cast<int>(cfg.integer("sampler.leapfrog_steps", s.leapfrog_steps));
  s.step_size = cfg.real("sampler.step_size", s.step_size);
  s.target_acceptance = cfg.real("sampler.target_acceptance", s.target_acceptance);
  s.adapt_step_size = cfg.boolean("sampler.adapt_step_size", s.adapt_step_size);
  s.move_weights.hmc = cfg.real("sampler.weight_hmc", s.move_weights.hmc);
  s.move_weights.global_scale = cfg.real("sampler.weight_global_scale", s.move_weights.global_scale);
  s.move_weights.local_scales = cfg.real("sampler.weight_local_scales", s.move_weights.local_scales);
  if (cfg.has("sampler.weight_location")) { s.move_weights.location = cfg.real("sampler.weight_location", 0.0); }
  s.seed = cfg.unsigned_integer("sampler.seed", s.seed);
  s.use_likelihood = cfg.boolean("sampler.use_likelihood", s.use_likelihood);
  s.initial_global_scale = cfg.real("sampler.initial_global_scale", s.initial_global_scale);
  s.initial_location = cfg.real("sampler.location", s.initial_location);
  s.location_proposal_sd = cfg.real("sampler.location_proposal_sd", s.location_proposal_sd);
  s.max_divergences = cfg.integer("sampler.max_divergences", s.max_divergences);
  s.checkpoint_interval = cfg.integer("sampler.checkpoint_interval", s.checkpoint_interval);
  rc.chains = static_cast<int>(cfg.integer("sampler.chains", rc.chains));
  if (rc.chains < 1) { throw Config_error{"sampler.chains must be at least 1"}; }

  rc.out_dir = cfg.path("output.dir").value_or(rc.out_dir);
  rc.bf_threshold = cfg.real("output.bf_threshold", rc.bf_threshold);
  if (!(rc.bf_threshold > 1.0)) { throw Config_error{"output.bf_threshold must exceed 1"}; }
  detail::reject_unused(cfg, {"data", "model", "clock", "sampler", "output"});
  s.validate();
  return rc;
}

inline auto read_simulate_config(const Config_file& cfg) -> Simulate_config {
  auto sc = Simulate_config{};
  sc.model = detail::read_model(cfg);
  sc.tree_path = cfg.path("simulate.tree");
  sc.n_sites = static_cast<int>(cfg.integer("simulate.n_sites", sc.n_sites));
  if (sc.n_sites < 1) { throw Config_error{"simulate.n_sites must be at least 1"}; }
  sc.location = cfg.real("simulate.location", sc.location);
  if (!(sc.location > 0.0)) { throw Config_error{"simulate.location must be positive"}; }
  sc.seed = cfg.unsigned_integer("simulate.seed", sc.seed);
  auto& l = sc.layout;
  l.taxa_per_clade = static_cast<int>(cfg.integer("simulate.taxa_per_clade", l.taxa_per_clade));
  l.tree_height = cfg.real("simulate.tree_height", l.tree_height);
  l.clade_age = cfg.real("simulate.clade_age", l.clade_age);
  l.pair_age = cfg.real("simulate.pair_age", l.pair_age);
  l.planted_rate = cfg.real("simulate.planted_rate", l.planted_rate);
  if (!(l.planted_rate > 0.0)) { throw Config_error{"simulate.planted_rate must be positive"}; }
  sc.out_dir = cfg.path("output.dir").value_or(sc.out_dir);
  detail::reject_unused(cfg, {"model", "simulate"});
  return sc;
}

}  // namespace shrinkclock
