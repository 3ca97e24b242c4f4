#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "discat/error.hpp"
#include "discat/tables.hpp"

namespace discat {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kProbFloor = 1e-300;

// A parametric model over a dense finite sample space.
//   probs_grad(theta, p, G): p is n-vector, G is n x d with rows dp_z/dtheta.
//   to_unconstrained / from_unconstrained / jacobian: jacobian(u) = dtheta/du.
//   support(): cells entering the loss (all cells for most models).
template <class M>
concept CategoricalModel = requires(const M& m, const Vec& v, Vec& p, Mat& g) {
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.space() } -> std::convertible_to<const SampleSpace&>;
  { m.support() } -> std::convertible_to<const std::vector<std::size_t>&>;
  m.probs_grad(v, p, g);
  { m.to_unconstrained(v) } -> std::convertible_to<Vec>;
  { m.from_unconstrained(v) } -> std::convertible_to<Vec>;
  { m.jacobian(v) } -> std::convertible_to<Mat>;
  m.validate(v);
  { m.start(v) } -> std::convertible_to<Vec>;
};

struct ModelEval {
  Vec probs;
  Mat grads;                  // n x d
  std::vector<Mat> hessians;  // empty unless requested
  std::vector<std::size_t> support;
  bool has_hessians() const { return !hessians.empty(); }
};

inline std::vector<std::size_t> all_cells(std::size_t n) {
  std::vector<std::size_t> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = i;
  return s;
}

// Central-difference Jacobian of a vector function g: R^d -> R^{n x d} flattened per cell.
// Returns one d x d matrix per cell, symmetrised.
template <class GradFn>
std::vector<Mat> fd_hessians(GradFn&& grad_at, const Vec& x, std::size_t n) {
  const std::size_t d = static_cast<std::size_t>(x.size());
  const double eps = std::cbrt(std::numeric_limits<double>::epsilon());
  std::vector<Mat> H(n, Mat::Zero(d, d));
  for (std::size_t j = 0; j < d; ++j) {
    double h = eps * std::max(1.0, std::fabs(x[j]));
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    h = xp[j] - xm[j];
    Mat Gp = grad_at(xp);
    Mat Gm = grad_at(xm);
    for (std::size_t z = 0; z < n; ++z) H[z].col(j) = (Gp.row(z) - Gm.row(z)).transpose() / h;
  }
  for (auto& m : H) m = 0.5 * (m + m.transpose()).eval();
  return H;
}

template <CategoricalModel M>
ModelEval evaluate(const M& model, const Vec& theta, bool need_hessian = false) {
  model.validate(theta);
  ModelEval e;
  model.probs_grad(theta, e.probs, e.grads);
  e.support = model.support();
  for (auto z : e.support) {
    if (!(e.probs[z] > kProbFloor))
      throw Error(ErrorKind::DegenerateProbability,
                  "cell " + std::to_string(z) + " has probability below floor");
  }
  if (need_hessian) {
    const std::size_t n = model.space().size();
    e.hessians = fd_hessians(
        [&](const Vec& t) {
          Vec p;
          Mat g;
          model.probs_grad(t, p, g);
          return g;
        },
        theta, n);
  }
  return e;
}

inline Vec score_vector(const ModelEval& e, std::size_t z) {
  double p = e.probs[z];
  if (!(p > 0.0)) throw Error(ErrorKind::ZeroModelProbability, "p_z = 0");
  return e.grads.row(z).transpose() / p;
}

inline Mat hessian_log(const ModelEval& e, std::size_t z) {
  if (!e.has_hessians()) throw Error(ErrorKind::HessianUnavailable, "evaluate without Hessians");
  double p = e.probs[z];
  if (!(p > 0.0)) throw Error(ErrorKind::ZeroModelProbability, "p_z = 0");
  Vec s = score_vector(e, z);
  Mat q = e.hessians[z] / p - s * s.transpose();
  return 0.5 * (q + q.transpose());
}

// Fisher information sum_z p_z s_z s_z^T over the support
inline Mat fisher_information(const ModelEval& e) {
  const auto d = e.grads.cols();
  Mat J = Mat::Zero(d, d);
  for (auto z : e.support) {
    double p = e.probs[z];
    if (p <= 0.0) continue;
    Vec g = e.grads.row(z).transpose();
    J += g * g.transpose() / p;
  }
  return J;
}

// Model probabilities/gradients expressed in the unconstrained coordinates u.
template <CategoricalModel M>
void probs_grad_u(const M& model, const Vec& u, Vec& p, Mat& Gu) {
  Vec theta = model.from_unconstrained(u);
  Mat G;
  model.probs_grad(theta, p, G);
  Gu = G * model.jacobian(u);
}

}  // namespace discat
