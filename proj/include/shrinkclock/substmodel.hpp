#pragma once

// GTR nucleotide substitution model with discrete-gamma site-rate categories.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "shrinkclock/error.hpp"

namespace shrinkclock {

using Matrix4 = Eigen::Matrix4d;
using Vector4 = Eigen::Vector4d;

// Exchangeabilities are ordered AC, AG, AT, CG, CT, GT.
struct Substitution_model {
  std::array<double, 6> exchangeabilities{1, 1, 1, 1, 1, 1};
  std::array<double, 4> frequencies{0.25, 0.25, 0.25, 0.25};
  double gamma_shape = 1.0;
  int n_categories = 1;

  Matrix4 generator = Matrix4::Zero();  // Q, normalized to one expected substitution per unit
  Vector4 eigen_values = Vector4::Zero();
  Matrix4 eigen_vectors = Matrix4::Zero();          // columns are right eigenvectors of Q
  Matrix4 inverse_eigen_vectors = Matrix4::Zero();
  std::vector<double> site_rates{1.0};               // mean exactly 1

  auto pi() const -> Vector4 { return Vector4{frequencies[0], frequencies[1], frequencies[2], frequencies[3]}; }
};

// Equal-probability bins of Gamma(shape, rate = shape), each represented by its
// conditional mean, renormalized to mean 1.
inline auto discrete_gamma_rates(double shape, int n_categories) -> std::vector<double> {
  if (!(shape > 0.0) || !std::isfinite(shape)) { throw Data_error{"gamma shape must be positive"}; }
  if (n_categories < 1) { throw Data_error{"need at least one rate category"}; }
  if (n_categories == 1) { return {1.0}; }
  auto rates = std::vector<double>(n_categories);
  // E[X; X < q] for X ~ Gamma(k, rate k) equals P(k+1, k q) under the unit-scale ratio.
  auto lower_mass = 0.0;
  for (int i = 0; i < n_categories; ++i) {
    auto upper_mass = 1.0;
    if (i + 1 < n_categories) {
      auto q = boost::math::gamma_p_inv(shape, static_cast<double>(i + 1) / n_categories);
      upper_mass = boost::math::gamma_p(shape + 1.0, q);
    }
    rates[i] = (upper_mass - lower_mass) * n_categories;
    lower_mass = upper_mass;
  }
  auto mean = 0.0;
  for (auto r : rates) { mean += r; }
  mean /= n_categories;
  for (auto& r : rates) { r /= mean; }
  return rates;
}

// Builds the normalized reversible generator and its eigensystem through the
// symmetric matrix diag(pi)^1/2 Q diag(pi)^-1/2.
inline auto gtr_eigensystem(const std::array<double, 6>& exchangeabilities,
                            const std::array<double, 4>& frequencies,
                            double gamma_shape = 1.0,
                            int n_categories = 1) -> Substitution_model {
  for (auto x : exchangeabilities) {
    if (!(x > 0.0) || !std::isfinite(x)) { throw Data_error{"exchangeabilities must be positive"}; }
  }
  auto sum = 0.0;
  for (auto f : frequencies) {
    if (!(f > 0.0) || !std::isfinite(f)) { throw Data_error{"frequencies must be positive"}; }
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-8) { throw Data_error{"frequencies must sum to 1"}; }

  auto m = Substitution_model{};
  m.exchangeabilities = exchangeabilities;
  m.frequencies = frequencies;
  m.gamma_shape = gamma_shape;
  m.n_categories = n_categories;
  m.site_rates = discrete_gamma_rates(gamma_shape, n_categories);

  auto pi = m.pi();
  auto& q = m.generator;
  auto e = 0;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      q(i, j) = exchangeabilities[e] * pi[j];
      q(j, i) = exchangeabilities[e] * pi[i];
      ++e;
    }
  }
  for (int i = 0; i < 4; ++i) { q(i, i) = 0.0; q(i, i) = -q.row(i).sum(); }
  auto rate = 0.0;
  for (int i = 0; i < 4; ++i) { rate -= pi[i] * q(i, i); }
  q /= rate;

  Vector4 sqrt_pi = pi.cwiseSqrt();
  Matrix4 symmetric = sqrt_pi.asDiagonal() * q * sqrt_pi.cwiseInverse().asDiagonal();
  symmetric = 0.5 * (symmetric + symmetric.transpose());
  auto solver = Eigen::SelfAdjointEigenSolver<Matrix4>{symmetric};
  m.eigen_values = solver.eigenvalues();
  m.eigen_vectors = sqrt_pi.cwiseInverse().asDiagonal() * solver.eigenvectors();
  m.inverse_eigen_vectors = solver.eigenvectors().transpose() * sqrt_pi.asDiagonal();
  return m;
}

inline auto gtr_eigensystem(const Substitution_model& params) -> Substitution_model {
  return gtr_eigensystem(params.exchangeabilities, params.frequencies, params.gamma_shape, params.n_categories);
}

// P(d) = exp(d Q) for an effective length d = rho * t * s.
inline auto transition_matrix(const Substitution_model& model, double effective_length) -> Matrix4 {
  if (!(effective_length >= 0.0)) { throw Data_error{"negative effective branch length"}; }
  Vector4 decay = (model.eigen_values * effective_length).array().exp();
  Matrix4 p = model.eigen_vectors * decay.asDiagonal() * model.inverse_eigen_vectors;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) { p(i, j) = std::max(p(i, j), 0.0); }
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace shrinkclock
