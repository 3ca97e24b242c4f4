#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "discat/disparity.hpp"
#include "discat/estimator.hpp"
#include "discat/model.hpp"
#include "discat/normal.hpp"

namespace discat {

struct CovarianceReport {
  Mat Sigma;    // natural parametrization, asymptotic (not divided by N)
  Mat Sigma_u;  // unconstrained parametrization
  Mat U;        // in u
  Mat M;        // in u
  Vec se;       // sqrt(diag(Sigma) / N)
  double n_obs = 0;
  double condition = 0;  // of M
  bool jacobian_applied = true;
  // per-cell pieces for the variance of p_z(theta_hat) - fhat_z, all in u
  Mat M_inv;
  Mat Gu;       // n x d, dp_z/du
  Mat A_cent;   // n x d, s_z 1{x_z <= c} minus its f-weighted mean
};

namespace detail {

struct SymInverse {
  Mat inv;
  double condition;
};

inline SymInverse sym_inverse(const Mat& A, double max_cond, ErrorKind kind, const char* what) {
  Mat S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  Vec ev = es.eigenvalues();
  double big = ev.cwiseAbs().maxCoeff();
  double small = ev.cwiseAbs().minCoeff();
  double cond = small > 0 ? big / small : std::numeric_limits<double>::infinity();
  if (!(cond <= max_cond))
    throw Error(kind, std::string(what) + " condition number " + std::to_string(cond));
  Mat inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  return {0.5 * (inv + inv.transpose()), cond};
}

}  // namespace detail

// Sandwich covariance M^-1 U M^-1, formed in u and mapped to theta by the delta method.
template <CategoricalModel Model>
CovarianceReport plugin_covariance(const Model& model, const Vec& theta_hat, const Vec& fhat,
                                   double n_obs, TuningConstant c) {
  detail::check_freq(fhat);
  model.validate(theta_hat);
  const Vec u = model.to_unconstrained(theta_hat);
  const auto d = static_cast<Eigen::Index>(model.dim());
  Vec p;
  Mat Gu;
  probs_grad_u(model, u, p, Gu);
  const std::size_t n = model.space().size();
  auto H = fd_hessians(
      [&](const Vec& x) {
        Vec pp;
        Mat gg;
        probs_grad_u(model, x, pp, gg);
        return gg;
      },
      u, n);

  Mat M = Mat::Zero(d, d);
  Vec mean_a = Vec::Zero(d);
  Mat Saa = Mat::Zero(d, d);
  for (auto z : model.support()) {
    if (!(p[z] > kProbFloor)) throw Error(ErrorKind::DegenerateProbability, "p_z below floor");
    double f = fhat[z];
    double x = f / p[z];
    if (!c.is_mle() && std::fabs(x - c.c) < 1e-8)
      throw Error(ErrorKind::AtKink, "cell " + std::to_string(z) + " has residual at c");
    Vec s = Gu.row(z).transpose() / p[z];
    if (f > 0.0) {
      Mat Q = H[z] / p[z] - s * s.transpose();
      M += f * (weight_prime(x, c) * x * s * s.transpose() - weight(x, c) * Q);
    }
    if (x <= c.c && f > 0.0) {
      mean_a += f * s;
      Saa += f * s * s.transpose();
    }
  }
  CovarianceReport rep;
  rep.U = Saa - mean_a * mean_a.transpose();  // W (diag f - f f^T) W^T
  rep.Gu = Gu;
  rep.A_cent = Mat::Zero(static_cast<Eigen::Index>(n), d);
  for (auto z : model.support()) {
    Vec a = Vec::Zero(d);
    if (fhat[z] / p[z] <= c.c) a = Gu.row(z).transpose() / p[z];
    rep.A_cent.row(z) = (a - mean_a).transpose();
  }
  M = 0.5 * (M + M.transpose()).eval();
  rep.M = M;
  auto inv = detail::sym_inverse(M, 1e12, ErrorKind::SingularM, "M");
  rep.condition = inv.condition;
  rep.M_inv = inv.inv;
  rep.Sigma_u = inv.inv * rep.U * inv.inv;
  rep.Sigma_u = 0.5 * (rep.Sigma_u + rep.Sigma_u.transpose()).eval();
  Mat Jc = model.jacobian(u);
  rep.Sigma = Jc * rep.Sigma_u * Jc.transpose();
  rep.Sigma = 0.5 * (rep.Sigma + rep.Sigma.transpose()).eval();
  rep.n_obs = n_obs;
  rep.se = (rep.Sigma.diagonal().cwiseMax(0.0) / n_obs).cwiseSqrt();
  return rep;
}

template <CategoricalModel Model>
CovarianceReport plugin_covariance(const Model& model, const FitResult& fr, const Vec& fhat) {
  return plugin_covariance(model, fr.theta, fhat, fr.n_obs, fr.c);
}

struct Interval {
  double lower = 0;
  double upper = 0;
  double length() const { return upper - lower; }
  bool contains(double v) const { return lower <= v && v <= upper; }
};

inline Interval confidence_interval(double estimate, double se, double alpha = 0.05) {
  if (!(se >= 0)) throw Error(ErrorKind::InvalidParameter, "standard error must be nonnegative");
  if (!(alpha > 0 && alpha < 1)) throw Error(ErrorKind::InvalidParameter, "alpha must be in (0,1)");
  double q = norm_quantile(1.0 - alpha / 2.0);
  return {estimate - q * se, estimate + q * se};
}

// step-up adjusted p-values, returned in input order
inline std::vector<double> benjamini_hochberg(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> ord(m);
  std::iota(ord.begin(), ord.end(), 0);
  std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double run = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    double v = p[ord[r]] * static_cast<double>(m) / static_cast<double>(r + 1);
    run = std::min(run, v);
    adj[ord[r]] = std::min(run, 1.0);
  }
  return adj;
}

enum class Adjust { BH, None };

// Model: sigma_z^2 = g' Sigma g, the variability of p_z(theta_hat) only (the default).
// Difference: variance of p_z(theta_hat) - fhat_z, adding the sampling variance of fhat_z
// and its covariance with theta_hat.
enum class CellVariance { Model, Difference };

struct CellTestRow {
  std::size_t cell = 0;
  Outcome outcome;
  double fhat = 0;
  double p = 0;
  double residual = 0;
  double statistic = 0;
  double variance = 0;  // g' Sigma g
  double p_raw = 1;
  double p_adj = 1;
  bool reject = false;
  bool tested = false;
  std::string note;
};

struct CellTestReport {
  std::vector<CellTestRow> rows;  // one per support cell
  std::size_t m = 0;              // cells entering the adjustment
  double alpha = 0.001;
  Adjust adjust = Adjust::BH;

  std::vector<std::size_t> rejected() const {
    std::vector<std::size_t> r;
    for (auto& row : rows)
      if (row.reject) r.push_back(row.cell);
    return r;
  }
};

// One-sided test of H0 p_z = fhat_z against p_z < fhat_z for every cell with fhat > 0.
template <CategoricalModel Model>
CellTestReport cell_test(const Model& model, const Vec& theta_hat, const Vec& fhat,
                         const CovarianceReport& cov, double alpha = 0.001,
                         Adjust adjust = Adjust::BH, CellVariance kind = CellVariance::Model) {
  if (!(alpha > 0 && alpha < 1)) throw Error(ErrorKind::InvalidParameter, "alpha must be in (0,1)");
  auto e = evaluate(model, theta_hat);
  CellTestReport rep;
  rep.alpha = alpha;
  rep.adjust = adjust;
  std::vector<double> raw;
  std::vector<std::size_t> idx;
  for (auto z : e.support) {
    CellTestRow row;
    row.cell = z;
    row.outcome = model.space().outcome(z);
    row.fhat = fhat[z];
    row.p = e.probs[z];
    row.residual = fhat[z] / e.probs[z];
    if (fhat[z] <= 0.0) {
      row.note = "empty cell, not tested";
      rep.rows.push_back(row);
      continue;
    }
    Vec g = e.grads.row(z).transpose();
    row.variance = g.dot(cov.Sigma * g);
    if (kind == CellVariance::Difference) {
      if (cov.M_inv.size() == 0 || cov.Gu.rows() != e.probs.size())
        throw Error(ErrorKind::InvalidParameter, "covariance report lacks the per-cell pieces");
      Vec v = cov.M_inv * cov.Gu.row(z).transpose();
      row.variance += fhat[z] * (1.0 - fhat[z]) - 2.0 * fhat[z] * v.dot(cov.A_cent.row(z).transpose());
    }
    double scale = std::max(e.probs[z], fhat[z]);
    if (!(row.variance > 1e-28 * scale * scale)) {
      if (e.probs[z] == fhat[z]) {
        row.note = "cell fitted exactly by construction, not tested";
        rep.rows.push_back(row);
        continue;
      }
      throw Error(ErrorKind::ZeroVariance, "cell " + std::to_string(z) + " has zero variance");
    }
    row.statistic = (e.probs[z] - fhat[z]) / std::sqrt(row.variance / cov.n_obs);
    row.p_raw = norm_cdf(row.statistic);
    row.tested = true;
    raw.push_back(row.p_raw);
    idx.push_back(rep.rows.size());
    rep.rows.push_back(row);
  }
  rep.m = raw.size();
  std::vector<double> adj = adjust == Adjust::BH ? benjamini_hochberg(raw) : raw;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto& row = rep.rows[idx[i]];
    row.p_adj = adj[i];
    row.reject = row.p_adj <= alpha;
  }
  return rep;
}

// Closed-form influence of a point mass at cell y on the estimator at theta_star.
// For c = 1 the point mass pushes cell y above the kink; any other cell whose residual
// also rises (s_z' IF < -1) is downweighted too. The active set A starts at {y} and is
// grown until consistent, giving IF = [J - sum_A p s s']^{-1} sum_A p s. With A = {y}
// this is the bracketed form [J - p_y s_y s_y']^{-1} s_y p_y.
template <CategoricalModel Model>
Vec influence_function(const Model& model, const Vec& theta_star, std::size_t y, TuningConstant c) {
  auto e = evaluate(model, theta_star);
  Mat J = fisher_information(e);
  if (y >= static_cast<std::size_t>(e.probs.size()) || !(e.probs[y] > 0))
    throw Error(ErrorKind::ZeroModelProbability, "cell outside the model support");
  Vec s = score_vector(e, y);
  if (c.c > 1.0) {
    auto inv = detail::sym_inverse(J, 1e12, ErrorKind::SingularInformation, "information");
    return inv.inv * s;
  }
  std::vector<char> active(e.probs.size(), 0);
  active[y] = 1;
  Vec IF;
  for (std::size_t round = 0; round <= e.support.size(); ++round) {
    Mat A = J;
    Vec rhs = Vec::Zero(J.rows());
    for (auto z : e.support) {
      if (!active[z]) continue;
      Vec sz = score_vector(e, z);
      A -= e.probs[z] * sz * sz.transpose();
      rhs += e.probs[z] * sz;
    }
    Eigen::FullPivLU<Mat> lu(A);
    if (!lu.isInvertible())
      throw Error(ErrorKind::SingularInformation, "J - sum p s s^T is singular");
    if (lu.rcond() < 1e-12) throw Error(ErrorKind::SingularInformation, "J - sum p s s^T is ill-conditioned");
    IF = lu.solve(rhs);
    bool changed = false;
    for (auto z : e.support) {
      if (z == y) continue;
      bool up = score_vector(e, z).dot(IF) < -1.0;
      if (up != static_cast<bool>(active[z])) {
        active[z] = up;
        changed = true;
      }
    }
    if (!changed) return IF;
  }
  throw Error(ErrorKind::SingularInformation, "no consistent downweighted set for the influence function");
}

}  // namespace discat
