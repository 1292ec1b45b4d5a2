#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "uncplab/errors.hpp"

namespace uncplab {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule with n points on [lo, hi] (Newton iteration on the
/// three-term recurrence).
inline QuadratureRule gauss_legendre(int n, double lo = -1.0, double hi = 1.0) {
  detail::require(n >= 1, "gauss_legendre: need at least one node");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = mid - half * x;
    rule.nodes[n - 1 - i] = mid + half * x;
    rule.weights[i] = rule.weights[n - 1 - i] = half * w;
  }
  return rule;
}

/// Composite Gauss-Legendre: `panels` equal panels, `order` nodes each.
inline QuadratureRule composite_gauss(double lo, double hi, int panels, int order) {
  detail::require(panels >= 1, "composite_gauss: need at least one panel");
  QuadratureRule rule;
  const double width = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const auto local = gauss_legendre(order, lo + p * width, lo + (p + 1) * width);
    rule.nodes.insert(rule.nodes.end(), local.nodes.begin(), local.nodes.end());
    rule.weights.insert(rule.weights.end(), local.weights.begin(), local.weights.end());
  }
  return rule;
}

}  // namespace uncplab
