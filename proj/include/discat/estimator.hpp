#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "discat/disparity.hpp"
#include "discat/model.hpp"
#include "discat/optimizer.hpp"
#include "discat/tables.hpp"

namespace discat {

struct FitConfig {
  TuningConstant c{1.6};
  int max_iter = 500;
  double grad_tol = 1e-8;
  double step_tol = 1e-10;
  int multistart = 1;
  std::uint64_t seed = 1;
};

struct FitResult {
  Vec theta;  // natural parametrization
  Vec u;      // unconstrained coordinates
  double loss = 0;
  double grad_norm = 0;  // sup-norm of the loss gradient in u
  bool converged = false;
  int iterations = 0;
  std::string status;
  Vec probs;
  Vec residuals;  // NaN outside the model support
  std::vector<std::size_t> downweighted;
  std::vector<std::size_t> near_kink;  // residual within 1e-8 of c
  std::vector<std::string> warnings;
  std::vector<double> loss_trace;
  double n_obs = 0;
  TuningConstant c{1.6};

  void require_converged() const {
    if (!converged)
      throw Error(ErrorKind::NonConvergence, status + ", gradient norm " + std::to_string(grad_norm));
  }
};

namespace detail {

inline void check_freq(const Vec& f) {
  double s = f.sum();
  if (!(s > 0)) throw Error(ErrorKind::EmptyTable, "table has N = 0");
  if (std::fabs(s - 1.0) > 1e-9) throw Error(ErrorKind::BadInput, "frequencies must sum to 1");
}

// per-cell loss term rho(f/p) p + (p - f). The added part sums to zero over the support
// but removes the first-order cancellation, so tiny losses near an exact fit stay accurate.
inline double loss_term(double f, double p, double c) {
  if (f <= 0.0) return p;
  if (f <= c * p) {
    double d = (f - p) / p;
    return p * ((1.0 + d) * std::log1p(d) - d);
  }
  return f * std::log(c) + (1.0 - c) * p;
}

// per-cell multiplier m with gradient contribution -m * dp/dtheta: f w(f/p) / p
inline double grad_mult(double f, double p, double c) {
  if (f <= 0.0) return 0.0;
  if (f <= c * p) return f / p;
  return c;
}

// loss and gradient in u; +inf when the point is outside the domain
template <CategoricalModel M>
double loss_grad_u(const M& model, const Vec& u, const Vec& f, double c, Vec& gu) {
  Vec theta = model.from_unconstrained(u);
  Vec p;
  Mat G;
  try {
    model.validate(theta);
    model.probs_grad(theta, p, G);
  } catch (const Error&) {
    gu = Vec::Zero(u.size());
    return std::numeric_limits<double>::infinity();
  }
  Vec g = Vec::Zero(model.dim());
  double L = 0.0;
  for (auto z : model.support()) {
    if (!(p[z] > kProbFloor)) {
      if (f[z] > 0.0) {
        gu = Vec::Zero(u.size());
        return std::numeric_limits<double>::infinity();
      }
      continue;
    }
    L += loss_term(f[z], p[z], c);
    double m = grad_mult(f[z], p[z], c);
    if (m != 0.0) g -= m * G.row(z).transpose();
  }
  gu = model.jacobian(u).transpose() * g;
  if (!std::isfinite(L)) return std::numeric_limits<double>::infinity();
  return L;
}

}  // namespace detail

template <CategoricalModel M>
double loss(const M& model, const Vec& theta, const Vec& fhat, TuningConstant c) {
  detail::check_freq(fhat);
  auto e = evaluate(model, theta);
  double L = 0.0;
  for (auto z : e.support) {
    double x = pearson_residual(fhat[z], e.probs[z]);
    L += rho(x, c) * e.probs[z];
  }
  return L;
}

template <CategoricalModel M>
Vec loss_gradient(const M& model, const Vec& theta, const Vec& fhat, TuningConstant c) {
  detail::check_freq(fhat);
  auto e = evaluate(model, theta);
  Vec g = Vec::Zero(model.dim());
  for (auto z : e.support) {
    double x = pearson_residual(fhat[z], e.probs[z]);
    if (!c.is_mle() && x == c.c) throw Error(ErrorKind::AtKink, "residual exactly at c");
    g -= score_vector(e, z) * fhat[z] * weight(x, c);
  }
  return g;
}

template <CategoricalModel M>
double loss(const M& model, const Vec& theta, const ContingencyTable& t, TuningConstant c) {
  return loss(model, theta, t.frequencies(), c);
}

template <CategoricalModel M>
Vec loss_gradient(const M& model, const Vec& theta, const ContingencyTable& t, TuningConstant c) {
  return loss_gradient(model, theta, t.frequencies(), c);
}

namespace detail {

// Newton iterations with a finite-difference Hessian of the u-gradient
template <CategoricalModel M>
void newton_polish(const M& model, Vec& u, double& L, Vec& g, const Vec& f, double c,
                   const FitConfig& cfg, int& iters, double target) {
  const auto d = u.size();
  for (int it = 0; it < 25 && iters < cfg.max_iter && g.lpNorm<Eigen::Infinity>() > target; ++it) {
    Mat H(d, d);
    // stencil shrinks with the gradient so it does not straddle kinks near the optimum
    const double eps = std::clamp(100.0 * g.lpNorm<Eigen::Infinity>(), 1e-8,
                                  std::cbrt(std::numeric_limits<double>::epsilon()));
    bool bad = false;
    for (Eigen::Index j = 0; j < d; ++j) {
      double h = eps * std::max(1.0, std::fabs(u[j]));
      Vec up = u, um = u, gp, gm;
      up[j] += h;
      um[j] -= h;
      double fp = loss_grad_u(model, up, f, c, gp);
      double fm = loss_grad_u(model, um, f, c, gm);
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        bad = true;
        break;
      }
      H.col(j) = (gp - gm) / (up[j] - um[j]);
    }
    if (bad) return;
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    Vec ev = es.eigenvalues();
    double top = ev.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < d; ++i) ev[i] = std::max(std::fabs(ev[i]), 1e-10 * top + 1e-300);
    Vec step = -(es.eigenvectors() * (es.eigenvectors().transpose() * g).cwiseQuotient(ev));
    double t = 1.0;
    bool ok = false;
    for (int ls = 0; ls < 30; ++ls) {
      Vec un = u + t * step, gn;
      double Ln = loss_grad_u(model, un, f, c, gn);
      bool smaller_grad = gn.lpNorm<Eigen::Infinity>() < g.lpNorm<Eigen::Infinity>();
      if (std::isfinite(Ln) &&
          (Ln < L || (smaller_grad && Ln <= L + 1e-13 * (1.0 + std::fabs(L))))) {
        u = un;
        L = Ln;
        g = gn;
        ok = true;
        break;
      }
      t *= 0.5;
    }
    ++iters;
    if (!ok) return;
  }
}

}  // namespace detail

// Minimise the disparity loss. fhat is a probability vector over the dense sample
// space; n_obs is the sample size used by downstream inference.
template <CategoricalModel M>
FitResult fit(const M& model, const Vec& fhat, double n_obs, const FitConfig& cfg = {},
              const Vec* start = nullptr) {
  detail::check_freq(fhat);
  if (cfg.max_iter < 1 || !(cfg.grad_tol > 0) || !(cfg.step_tol > 0))
    throw Error(ErrorKind::InvalidParameter, "tolerances must be positive");
  const double c = cfg.c.c;
  FitResult best;
  best.loss = std::numeric_limits<double>::infinity();

  std::size_t populated = 0;
  for (auto z : model.support()) populated += fhat[z] > 0;
  if (populated < model.dim())
    throw Error(ErrorKind::InsufficientCells,
                std::to_string(populated) + " populated cells for " + std::to_string(model.dim()) +
                    " parameters");

  Vec theta0 = start ? *start : model.start(fhat);
  Vec u0 = model.to_unconstrained(theta0);
  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  BfgsOptions opt{cfg.max_iter, cfg.grad_tol, cfg.step_tol};
  for (int s = 0; s < std::max(1, cfg.multistart); ++s) {
    Vec u = u0;
    if (s > 0)
      for (Eigen::Index i = 0; i < u.size(); ++i) u[i] += 0.1 * std::max(1.0, std::fabs(u[i])) * unif(gen);
    auto fg = [&](const Vec& x, Vec& g) { return detail::loss_grad_u(model, x, fhat, c, g); };
    auto r = bfgs(fg, u, opt);
    Vec uu = r.x, gg = r.g;
    double LL = r.f;
    int iters = r.iterations;
    // polish past grad_tol: near c = 1 the loss is flat on one side of each cell and a
    // small gradient alone leaves theta loose
    if (std::isfinite(LL)) detail::newton_polish(model, uu, LL, gg, fhat, c, cfg, iters, 1e-3 * cfg.grad_tol);
    if (std::isfinite(LL) && (LL < best.loss || !std::isfinite(best.loss))) {
      best.u = uu;
      best.loss = LL;
      best.grad_norm = gg.lpNorm<Eigen::Infinity>();
      best.converged = best.grad_norm <= cfg.grad_tol;
      best.iterations = iters;
      best.status = best.converged ? "converged" : r.status;
      best.loss_trace = r.trace;
    }
  }
  if (!std::isfinite(best.loss))
    throw Error(ErrorKind::DegenerateProbability, "no start point gave a finite loss");

  best.theta = model.from_unconstrained(best.u);
  best.c = cfg.c;
  best.n_obs = n_obs;
  Mat G;
  model.probs_grad(best.theta, best.probs, G);
  best.residuals = Vec::Constant(fhat.size(), std::numeric_limits<double>::quiet_NaN());
  for (auto z : model.support()) {
    double p = best.probs[z];
    best.residuals[z] = p > 0 ? fhat[z] / p : std::numeric_limits<double>::infinity();
    if (best.residuals[z] > c) best.downweighted.push_back(z);
    if (!cfg.c.is_mle() && std::fabs(best.residuals[z] - c) < 1e-8) best.near_kink.push_back(z);
  }
  if (populated == model.dim())
    best.warnings.push_back("populated cells equal the parameter count");
  if (!best.near_kink.empty())
    best.warnings.push_back("residual within 1e-8 of c at the optimum");
  return best;
}

template <CategoricalModel M>
FitResult fit(const M& model, const ContingencyTable& t, const FitConfig& cfg = {},
              const Vec* start = nullptr) {
  if (t.total() == 0) throw Error(ErrorKind::EmptyTable, "table has N = 0");
  return fit(model, t.frequencies(), static_cast<double>(t.total()), cfg, start);
}

// product-moment correlation of paired integer codes
inline double pearson_sample_corr(const std::vector<std::pair<int, int>>& rows) {
  const double n = static_cast<double>(rows.size());
  if (rows.size() < 2) throw Error(ErrorKind::ZeroVariance, "need at least two observations");
  double mx = 0, my = 0;
  for (auto [x, y] : rows) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (auto [x, y] : rows) {
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
    sxy += (x - mx) * (y - my);
  }
  if (sxx <= 0 || syy <= 0) throw Error(ErrorKind::ZeroVariance, "a column has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// same from a two-way table
inline double pearson_sample_corr(const ContingencyTable& t) {
  if (t.arity() != 2) throw Error(ErrorKind::BadInput, "need a two-way table");
  double n = 0, mx = 0, my = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto z = t.space().outcome(i);
    double w = static_cast<double>(t.count(i));
    n += w;
    mx += w * z[0];
    my += w * z[1];
  }
  if (n < 2) throw Error(ErrorKind::ZeroVariance, "need at least two observations");
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto z = t.space().outcome(i);
    double w = static_cast<double>(t.count(i));
    sxx += w * (z[0] - mx) * (z[0] - mx);
    syy += w * (z[1] - my) * (z[1] - my);
    sxy += w * (z[0] - mx) * (z[1] - my);
  }
  if (sxx <= 0 || syy <= 0) throw Error(ErrorKind::ZeroVariance, "a column has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace discat
