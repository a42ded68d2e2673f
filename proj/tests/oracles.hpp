#pragma once

// Test-only numeric oracles: quadrature rules, histogram comparison and
// finite differences. Everything here is independent of the library's
// evaluation paths it is used to check.

#include <cmath>
#include <functional>
#include <vector>

#include "wost/vec.hpp"

namespace oracle {

// periodic trapezoid (= rectangle) rule over [0, 2pi)
inline double integrate_circle(const std::function<double(double)>& f,
                               int bins = 1 << 16) {
  double sum = 0.0;
  double h = wost::kTwoPi / bins;
  for (int i = 0; i < bins; ++i) sum += f((i + 0.5) * h);
  return sum * h;
}

// midpoint rule on an interval; use for densities whose support is a known
// arc (sampling across their jump would ruin the convergence order)
inline double integrate_arc(const std::function<double(double)>& f, double a,
                            double b, int bins = 1 << 18) {
  double sum = 0.0;
  double h = (b - a) / bins;
  for (int i = 0; i < bins; ++i) sum += f(a + (i + 0.5) * h);
  return sum * h;
}

struct GaussLegendre {
  std::vector<double> nodes, weights;
};

// Gauss-Legendre rule on [-1, 1] by Newton iteration on P_n
inline GaussLegendre gauss_legendre(int n) {
  GaussLegendre out;
  out.nodes.resize(n);
  out.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(wost::kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    out.nodes[i] = -x;
    out.nodes[n - 1 - i] = x;
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    out.weights[i] = w;
    out.weights[n - 1 - i] = w;
  }
  return out;
}

// product rule over S^2: Gauss-Legendre in cos(theta), uniform in phi
inline double integrate_sphere(const std::function<double(wost::Vec3)>& f,
                               int n_cos = 256, int n_phi = 512) {
  GaussLegendre gl = gauss_legendre(n_cos);
  double sum = 0.0;
  for (int i = 0; i < n_cos; ++i) {
    double ct = gl.nodes[i];
    double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    double inner = 0.0;
    for (int j = 0; j < n_phi; ++j) {
      double phi = wost::kTwoPi * (j + 0.5) / n_phi;
      inner += f({st * std::cos(phi), st * std::sin(phi), ct});
    }
    sum += gl.weights[i] * inner * (wost::kTwoPi / n_phi);
  }
  return sum;
}

// |observed - expected| <= rel * expected + sigmas * sqrt(expected + 1)
inline bool histogram_close(const std::vector<double>& observed,
                            const std::vector<double>& expected, double rel,
                            double sigmas = 4.0) {
  for (size_t i = 0; i < observed.size(); ++i) {
    double tol = rel * expected[i] + sigmas * std::sqrt(expected[i] + 1.0);
    if (std::abs(observed[i] - expected[i]) > tol) return false;
  }
  return true;
}

// central finite difference of a scalar function of one coordinate
inline double central_diff(const std::function<double(double)>& f, double x,
                           double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// max relative mismatch between an analytic gradient and central
// differences; denominators are floored at a fraction of the largest entry
inline double grad_max_rel_err(const std::vector<double>& analytic,
                               const std::vector<double>& fd) {
  double gmax = 0.0;
  for (double g : fd) gmax = std::max(gmax, std::abs(g));
  double floor = std::max(1e-6 * gmax, 1e-12);
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max(std::abs(fd[i]), floor);
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

}  // namespace oracle
