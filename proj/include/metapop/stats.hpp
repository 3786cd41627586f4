#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>

#include <boost/math/distributions/students_t.hpp>

#include "metapop/core.hpp"

namespace metapop {

struct Correlation {
  double r = 0.0;
  std::optional<double> p;  ///< two-sided; absent when n < 3
};

/// Two-sided p-value for a Pearson coefficient from n paired observations,
/// via t = r sqrt((n-2)/(1-r^2)) with n-2 degrees of freedom.
inline std::optional<double> pearson_p_value(double r, std::size_t n) {
  if (n < 3) return std::nullopt;
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = r * std::sqrt(df / (1.0 - r * r));
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

/// Pearson product-moment correlation. nullopt when either input is constant
/// (the coefficient is undefined there, not zero).
inline std::optional<Correlation> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = x[k] - mx;
    const double dy = y[k] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return Correlation{r, pearson_p_value(r, n)};
}

/// Pearson over the pairs where both values are present.
inline std::optional<Correlation> pearson_pairwise(std::span<const std::optional<double>> x,
                                                   std::span<const std::optional<double>> y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  std::vector<double> a, b;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] && y[k] && std::isfinite(*x[k]) && std::isfinite(*y[k])) {
      a.push_back(*x[k]);
      b.push_back(*y[k]);
    }
  }
  return pearson(a, b);
}

/// Symmetric table of pairwise correlations between n series.
struct CorrelationTable {
  std::size_t n = 0;
  std::vector<std::optional<Correlation>> cells;  ///< row-major n x n

  const std::optional<Correlation>& at(std::size_t i, std::size_t j) const {
    return cells.at(i * n + j);
  }
  std::optional<double> r(std::size_t i, std::size_t j) const {
    const auto& c = at(i, j);
    return c ? std::optional<double>(c->r) : std::nullopt;
  }
};

}  // namespace metapop
