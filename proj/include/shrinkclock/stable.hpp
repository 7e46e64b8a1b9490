#pragma once

// Positive stable and exponentially tilted positive stable variates.
//
// S has Laplace transform E[exp(-s S)] = exp(-s^a), 0 < a < 1.  The tilted law with
// tilt t has density proportional to exp(-t x) f_S(x) and Laplace transform
// exp(-((s + t)^a - t^a)).
//
// Kanter's representation S = (A(U) / E)^((1-a)/a), U ~ U(0, pi), E ~ Exp(1), with
//   A(u) = [sin(a u)^a sin((1-a) u)^(1-a) / sin(u)]^(1/(1-a)),
// turns the tilted law into the joint density of (U, X = S^(-a/(1-a))):
//   p(u, x) ∝ A(u) exp(-A(u) x - t x^(-(1-a)/a)).
// Given U, X is log-concave; the double-rejection sampler proposes U from a dominating
// mixture and X from a normal / flat / exponential envelope around its mode, sharing a
// single uniform between both rejection steps (Devroye 2009).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "shrinkclock/error.hpp"
#include "shrinkclock/random.hpp"

namespace shrinkclock {

inline constexpr long k_max_rejection_iterations = 1'000'000;

namespace detail {

inline auto log_zolotarev(double u, double a) -> double {
  return (a * std::log(std::sin(a * u)) + (1.0 - a) * std::log(std::sin((1.0 - a) * u)) - std::log(std::sin(u))) /
         (1.0 - a);
}

// log B(u) - log B(0), with B = A^-(1-a) decreasing from B(0) = a^-a (1-a)^-(1-a).
inline auto log_b_ratio(double u, double a) -> double {
  auto log_b = std::log(std::sin(u)) - a * std::log(std::sin(a * u)) - (1.0 - a) * std::log(std::sin((1.0 - a) * u));
  auto log_b0 = -a * std::log(a) - (1.0 - a) * std::log(1.0 - a);
  return log_b - log_b0;
}

// Constants of the first-stage proposal for U.
struct Double_rejection_constants {
  double a, b, tilt_a, gamma, sqrt_gamma, xi, psi, w1, w2, w3;

  Double_rejection_constants(double a_, double tilt) : a{a_} {
    b = (1.0 - a) / a;
    tilt_a = std::exp(a * std::log(tilt));
    gamma = tilt_a * a * (1.0 - a);
    sqrt_gamma = std::sqrt(gamma);
    auto c1 = std::sqrt(std::numbers::pi / 2.0);
    auto c3 = (2.0 + c1) * sqrt_gamma;
    xi = (1.0 + std::numbers::sqrt2 * c3) / std::numbers::pi;
    psi = c3 * std::exp(-gamma * std::numbers::pi * std::numbers::pi / 8.0) / std::sqrt(std::numbers::pi);
    w1 = c1 * xi / sqrt_gamma;
    w2 = 2.0 * std::sqrt(std::numbers::pi) * psi;
    w3 = xi * std::numbers::pi;
  }

  // Unnormalized proposal density of U.
  auto proposal_density(double u) const -> double {
    auto d = 0.0;
    if (u >= 0.0 && gamma >= 1.0) { d += xi * std::exp(-gamma * u * u / 2.0); }
    if (u > 0.0 && u < std::numbers::pi) { d += psi / std::sqrt(std::numbers::pi - u); }
    if (u >= 0.0 && u <= std::numbers::pi && gamma < 1.0) { d += xi; }
    return d;
  }

  // Right-tail envelope scale times A(u).
  auto tail_factor(double zeta) const -> double { return 1.0 / (1.0 - std::pow(1.0 + a * zeta / sqrt_gamma, -1.0 / a)); }

  // Proposal-to-target ratio for U; must be >= 1 for the first stage to be valid.
  auto ratio(double u) const -> double {
    auto zeta = std::exp(0.5 * log_b_ratio(u, a));
    auto z = tail_factor(zeta);
    auto c1 = std::sqrt(std::numbers::pi / 2.0);
    return std::numbers::pi * std::exp(-tilt_a * (1.0 - 1.0 / (zeta * zeta))) /
           ((1.0 + c1) * sqrt_gamma / zeta + z) * proposal_density(u);
  }
};

}  // namespace detail

// Untilted positive stable draw (Kanter).
inline auto positive_stable(Random& rng, double a) -> double {
  auto u = std::numbers::pi * rng.uniform();
  auto e = rng.exponential();
  return std::exp((1.0 - a) / a * (detail::log_zolotarev(u, a) - std::log(e)));
}

// Exponentially tilted positive stable draw by double rejection.  tilt == 0 gives
// the untilted law.  Throws Numeric_error once the iteration cap is exhausted.
inline auto tilted_stable(Random& rng, double a, double tilt) -> double {
  if (!(a > 0.0 && a < 1.0)) { throw Numeric_error{"stable index must lie in (0, 1)"}; }
  if (!(tilt >= 0.0) || !std::isfinite(tilt)) { throw Numeric_error{"tilt must be finite and non-negative"}; }
  if (tilt == 0.0) { return positive_stable(rng, a); }

  constexpr auto pi = std::numbers::pi;
  const auto c1 = std::sqrt(pi / 2.0);
  const auto k = detail::Double_rejection_constants{a, tilt};
  const auto log_tilt = std::log(tilt);

  for (long iter = 0; iter < k_max_rejection_iterations; ++iter) {
    // Stage one: U from the mixture dominating its marginal.
    auto u = 0.0;
    if (k.gamma >= 1.0) {
      if (rng.uniform() < k.w1 / (k.w1 + k.w2)) {
        u = std::abs(rng.normal()) / k.sqrt_gamma;
      } else {
        auto w = rng.uniform();
        u = pi * (1.0 - w * w);
      }
    } else {
      if (rng.uniform() < k.w3 / (k.w3 + k.w2)) {
        u = pi * rng.uniform();
      } else {
        auto w = rng.uniform();
        u = pi * (1.0 - w * w);
      }
    }
    auto w = rng.uniform();
    if (!(u < pi)) { continue; }
    auto zeta = std::exp(0.5 * detail::log_b_ratio(u, a));
    auto z = k.tail_factor(zeta);
    auto ratio = pi * std::exp(-k.tilt_a * (1.0 - 1.0 / (zeta * zeta))) /
                 ((1.0 + c1) * k.sqrt_gamma / zeta + z) * k.proposal_density(u);
    auto shared = w * ratio;
    if (!(shared <= 1.0)) { continue; }

    // Stage two: X given U from a log-concave envelope around the mode m.
    auto big_a = std::exp(detail::log_zolotarev(u, a));
    auto m = std::exp(a * (std::log(k.b) - std::log(big_a))) * k.tilt_a;
    auto delta = std::sqrt(m * a / big_a);
    auto left = delta * c1;
    auto tail = z / big_a;
    auto total = left + delta + tail;
    auto v = rng.uniform();
    auto x = 0.0;
    auto normal = 0.0;
    auto expo = 0.0;
    if (v < left / total) {
      normal = rng.normal();
      x = m - delta * std::abs(normal);
    } else if (v < (left + delta) / total) {
      x = m + delta * rng.uniform();
    } else {
      expo = rng.exponential();
      x = m + delta + expo * tail;
    }
    if (!(x > 0.0)) { continue; }
    auto log_shift = -std::log(shared);
    // c = psi(m) - psi(x), psi(x) = -A x - t x^-b
    auto c = big_a * (x - m) + std::exp(log_tilt - k.b * std::log(m)) * (std::pow(m / x, k.b) - 1.0);
    if (x < m) {
      c -= normal * normal / 2.0;
    } else if (x > m + delta) {
      c -= expo;
    }
    if (c <= log_shift) { return std::exp(-k.b * std::log(x)); }
  }
  throw Numeric_error{"tilted stable sampler exceeded the rejection iteration cap"};
}

// log of the positive stable density, by quadrature of Zolotarev's integral
//   f(x) = (1/pi) int_0^pi (a/(1-a)) A(u) x^(-1/(1-a)) exp(-A(u) x^(-a/(1-a))) du.
inline auto positive_stable_log_density(double x, double a) -> double {
  constexpr auto pi = std::numbers::pi;
  auto y = std::pow(x, -a / (1.0 - a));
  auto log_integrand = [&](double u) { return detail::log_zolotarev(u, a) - std::exp(detail::log_zolotarev(u, a)) * y; };
  // Normalize by the integrand's peak to keep the quadrature in range.
  auto peak = -std::numeric_limits<double>::infinity();
  constexpr int grid = 256;
  for (int i = 1; i < grid; ++i) { peak = std::max(peak, log_integrand(pi * i / grid)); }
  auto integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [&](double u) {
        if (u <= 0.0 || u >= pi) { return 0.0; }
        return std::exp(log_integrand(u) - peak);
      },
      0.0, pi, 15, 1e-10);
  return std::log(integral) + peak + std::log(a / (1.0 - a)) - std::log(x) / (1.0 - a) - std::log(pi);
}

// One slice-sampling update (stepping out, then shrinkage) of x under the tilted law,
// run on log x.
inline auto slice_tilted_stable(Random& rng, double a, double tilt, double current) -> double {
  auto log_target = [&](double log_x) {
    auto x = std::exp(log_x);
    return positive_stable_log_density(x, a) - tilt * x + log_x;
  };
  constexpr double width = 1.0;
  constexpr int max_steps = 50;
  auto y0 = std::log(current);
  auto level = log_target(y0) - rng.exponential();
  auto lo = y0 - width * rng.uniform();
  auto hi = lo + width;
  auto j = static_cast<int>(max_steps * rng.uniform());
  auto k = max_steps - 1 - j;
  while (j-- > 0 && log_target(lo) > level) { lo -= width; }
  while (k-- > 0 && log_target(hi) > level) { hi += width; }
  for (long iter = 0; iter < k_max_rejection_iterations; ++iter) {
    auto y = lo + (hi - lo) * rng.uniform();
    if (log_target(y) > level) { return std::exp(y); }
    if (y < y0) { lo = y; } else { hi = y; }
  }
  throw Numeric_error{"slice sampler failed to find a point on the slice"};
}

}  // namespace shrinkclock
