#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace discat {

struct BfgsOptions {
  int max_iter = 500;
  double grad_tol = 1e-8;
  double step_tol = 1e-10;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0;
  Eigen::VectorXd g;
  int iterations = 0;
  bool converged = false;
  std::string status;
  std::vector<double> trace;  // accepted function values
};

// Quasi-Newton minimisation. fg(x, g) returns f(x) and fills g; it may return
// +inf for points outside the domain, which the line search treats as a rejection.
template <class FG>
BfgsResult bfgs(FG&& fg, Eigen::VectorXd x, const BfgsOptions& opt = {}) {
  using Eigen::VectorXd;
  const auto n = x.size();
  BfgsResult res;
  VectorXd g(n);
  double f = fg(x, g);
  if (!std::isfinite(f)) {
    res.x = x;
    res.f = f;
    res.g = g;
    res.status = "non-finite objective at start";
    return res;
  }
  res.trace.push_back(f);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= opt.grad_tol) {
      res.converged = true;
      res.status = "gradient tolerance";
      break;
    }
    VectorXd dir = -H * g;
    double slope = g.dot(dir);
    if (!(slope < 0)) {
      H.setIdentity();
      fresh = true;
      dir = -g;
      slope = -g.squaredNorm();
    }
    // keep the first trial step moderate in the unconstrained space
    double dn = dir.lpNorm<Eigen::Infinity>();
    double t = (fresh && dn > 1.0) ? 1.0 / dn : 1.0;

    VectorXd xn(n), gn(n);
    double fn = 0;
    bool ok = false;
    double t_prev = 0, f_prev = 0;
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + t * dir;
      fn = fg(xn, gn);
      if (std::isfinite(fn) && fn <= f + 1e-4 * t * slope) {
        ok = true;
        break;
      }
      double tn;
      if (!std::isfinite(fn)) {
        tn = 0.1 * t;
      } else if (ls == 0 || !std::isfinite(f_prev)) {
        tn = -slope * t * t / (2.0 * (fn - f - slope * t));
      } else {
        // cubic through f, slope, and the last two trial values
        double r1 = fn - f - t * slope, r2 = f_prev - f - t_prev * slope;
        double a = (r1 / (t * t) - r2 / (t_prev * t_prev)) / (t - t_prev);
        double b = (-t_prev * r1 / (t * t) + t * r2 / (t_prev * t_prev)) / (t - t_prev);
        if (a == 0.0) {
          tn = -slope / (2.0 * b);
        } else {
          double disc = b * b - 3.0 * a * slope;
          tn = disc < 0 ? 0.5 * t : (-b + std::sqrt(disc)) / (3.0 * a);
        }
      }
      if (!std::isfinite(tn)) tn = 0.5 * t;
      t_prev = t;
      f_prev = fn;
      t = std::clamp(tn, 0.1 * t, 0.5 * t);
    }
    if (!ok) {
      if (!fresh) {
        H.setIdentity();
        fresh = true;
        continue;
      }
      res.status = "line search failed";
      break;
    }
    VectorXd s = xn - x;
    VectorXd y = gn - g;
    double step = s.lpNorm<Eigen::Infinity>();
    x = xn;
    f = fn;
    g = gn;
    res.trace.push_back(f);
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        H *= sy / y.squaredNorm();
        fresh = false;
      }
      double rho = 1.0 / sy;
      VectorXd Hy = H * y;
      H += (rho * rho * y.dot(Hy) + rho) * s * s.transpose() -
           rho * (Hy * s.transpose() + s * Hy.transpose());
    }
    if (step <= opt.step_tol * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      res.converged = g.lpNorm<Eigen::Infinity>() <= opt.grad_tol;
      res.status = "step tolerance";
      ++it;
      break;
    }
  }
  if (it >= opt.max_iter && res.status.empty()) res.status = "iteration limit";
  res.iterations = it;
  res.x = x;
  res.f = f;
  res.g = g;
  return res;
}

}  // namespace discat
