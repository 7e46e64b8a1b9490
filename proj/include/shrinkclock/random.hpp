#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace shrinkclock {

// Source of randomness for a chain.  Distribution objects are created per draw so
// that the engine state alone determines every future draw (checkpoints only need it).
class Random {
 public:
  static constexpr std::string_view algorithm = "mt19937_64";

  explicit Random(std::uint64_t seed = 0) : engine_{seed} {}

  // Uniform on the open interval (0, 1).
  auto uniform() -> double {
    while (true) {
      auto u = std::generate_canonical<double, 53>(engine_);
      if (u > 0.0 && u < 1.0) { return u; }
    }
  }

  auto normal() -> double { return std::normal_distribution<double>{}(engine_); }
  auto exponential() -> double { return -std::log(uniform()); }
  auto gamma(double shape, double scale) -> double { return std::gamma_distribution<double>{shape, scale}(engine_); }
  auto index(std::size_t n) -> std::size_t { return std::uniform_int_distribution<std::size_t>{0, n - 1}(engine_); }

  auto engine() -> std::mt19937_64& { return engine_; }

  auto state() const -> std::string {
    auto out = std::ostringstream{};
    out << engine_;
    return out.str();
  }

  auto restore(const std::string& state) -> void {
    auto in = std::istringstream{state};
    in >> engine_;
  }

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 step, used to derive independent seeds for parallel chains.
inline auto derive_seed(std::uint64_t seed, std::uint64_t stream) -> std::uint64_t {
  auto z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace shrinkclock
