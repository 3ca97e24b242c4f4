#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "discat/estimator.hpp"
#include "discat/optimizer.hpp"
#include "discat/parallel.hpp"
#include "discat/polychoric.hpp"

namespace discat {

enum class CorrMethod { Robust, MLE, Pearson };

inline const char* method_name(CorrMethod m) {
  switch (m) {
    case CorrMethod::Robust: return "robust";
    case CorrMethod::MLE: return "mle";
    case CorrMethod::Pearson: return "pearson";
  }
  return "?";
}

inline CorrMethod parse_method(const std::string& s) {
  if (s == "robust") return CorrMethod::Robust;
  if (s == "mle" || s == "ml") return CorrMethod::MLE;
  if (s == "pearson") return CorrMethod::Pearson;
  throw Error(ErrorKind::BadInput, "unknown estimator '" + s + "'");
}

struct PairLog {
  int i = 0, j = 0;
  bool converged = true;
  bool fallback = false;
  std::string message;
};

struct PolyMatrix {
  int q = 0;
  Mat R;
  CorrMethod method = CorrMethod::Robust;
  double c = 1.6;
  std::vector<PairLog> pairs;
  bool psd_corrected = false;
  double min_eigen_before = 0;

  bool any_fallback() const {
    return std::any_of(pairs.begin(), pairs.end(), [](const PairLog& p) { return p.fallback; });
  }
};

struct FactorFit {
  Vec loadings;
  Vec uniquenesses;
  double proportion_variance = 0;
  bool converged = false;
  bool informative = true;
  std::vector<int> heywood;  // items whose uniqueness hit the floor
  double discrepancy = 0;
};

namespace detail {

inline double code_corr(const std::vector<std::vector<int>>& rows, int i, int j) {
  std::vector<std::pair<int, int>> pr;
  pr.reserve(rows.size());
  for (auto& r : rows) pr.emplace_back(r[i], r[j]);
  return pearson_sample_corr(pr);
}

inline void check_corr_input(const Mat& R) {
  if (R.rows() != R.cols() || R.rows() < 1) throw Error(ErrorKind::BadInput, "matrix must be square");
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    if (std::fabs(R(i, i) - 1.0) > 1e-9) throw Error(ErrorKind::BadInput, "diagonal must be 1");
    for (Eigen::Index j = 0; j < i; ++j)
      if (std::fabs(R(i, j) - R(j, i)) > 1e-9) throw Error(ErrorKind::BadInput, "matrix not symmetric");
  }
}

}  // namespace detail

inline Mat nearest_psd(const Mat& R, double tol = 1e-7, int max_sweeps = 200) {
  detail::check_corr_input(R);
  Eigen::SelfAdjointEigenSolver<Mat> es0(R);
  if (es0.eigenvalues().minCoeff() >= 0.0) return R;
  const auto q = R.rows();
  Mat Y = R, dS = Mat::Zero(q, q), X = R;
  bool done = false;
  for (int it = 0; it < max_sweeps; ++it) {
    Mat Rk = Y - dS;
    Eigen::SelfAdjointEigenSolver<Mat> es(Rk);
    X = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
    dS = X - Rk;
    Mat Yn = X;
    Yn.diagonal().setOnes();
    double change = (Yn - Y).norm() / std::max(1.0, Y.norm());
    Y = Yn;
    if (change < tol && (Y - X).norm() / std::max(1.0, Y.norm()) < tol) {
      done = true;
      break;
    }
  }
  if (!done) throw Error(ErrorKind::NonConvergence, "nearest_psd did not converge in 200 sweeps");
  // final clip at a small positive floor and rescale to unit diagonal
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Y + Y.transpose()));
  Mat Z = es.eigenvectors() * es.eigenvalues().cwiseMax(1e-10).asDiagonal() * es.eigenvectors().transpose();
  Vec dinv = Z.diagonal().cwiseSqrt().cwiseInverse();
  Z = dinv.asDiagonal() * Z * dinv.asDiagonal();
  Z = 0.5 * (Z + Z.transpose()).eval();
  Z.diagonal().setOnes();
  return Z;
}

// Pairwise correlations of raw 1-based codes (N x q). Empty categories of an item
// are dropped before fitting so thresholds stay identified.
inline PolyMatrix poly_matrix(const std::vector<std::vector<int>>& rows, CorrMethod method,
                              TuningConstant c = TuningConstant(1.6), int threads = 1,
                              const FitConfig& base = {}) {
  if (rows.empty()) throw Error(ErrorKind::EmptyTable, "no observations");
  const int q = static_cast<int>(rows.front().size());
  if (q < 2) throw Error(ErrorKind::BadInput, "need at least two items");
  for (auto& r : rows)
    if (static_cast<int>(r.size()) != q) throw Error(ErrorKind::RaggedRow, "row of wrong length");

  // per-item code to rank maps
  std::vector<std::vector<int>> rank(q);
  std::vector<int> levels(q);
  for (int j = 0; j < q; ++j) {
    std::set<int> seen;
    for (auto& r : rows) {
      if (r[j] < 1) throw Error(ErrorKind::OutOfRangeCategory, "category codes are 1-based");
      seen.insert(r[j]);
    }
    if (seen.size() < 2)
      throw Error(ErrorKind::DegenerateMargin, "item " + std::to_string(j + 1) + " has one category");
    rank[j].assign(*seen.rbegin() + 1, 0);
    int k = 0;
    for (int v : seen) rank[j][v] = ++k;
    levels[j] = k;
  }

  PolyMatrix pm;
  pm.q = q;
  pm.method = method;
  pm.c = c.c;
  pm.R = Mat::Identity(q, q);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < q; ++i)
    for (int j = i + 1; j < q; ++j) pairs.emplace_back(i, j);
  pm.pairs.resize(pairs.size());
  std::vector<double> val(pairs.size());

  parallel_for(pairs.size(), threads, [&](std::size_t k) {
    auto [i, j] = pairs[k];
    PairLog log;
    log.i = i;
    log.j = j;
    double pearson = detail::code_corr(rows, i, j);
    if (method == CorrMethod::Pearson) {
      val[k] = pearson;
    } else {
      ContingencyTable t({levels[i], levels[j]});
      for (auto& r : rows) t.add({rank[i][r[i]], rank[j][r[j]]}, 1);
      FitConfig cfg = base;
      cfg.c = method == CorrMethod::MLE ? TuningConstant::infinity() : c;
      try {
        PolychoricModel m(levels[i], levels[j]);
        auto fr = fit(m, t, cfg);
        log.converged = fr.converged;
        if (fr.converged) {
          val[k] = fr.theta[0];
        } else {
          log.fallback = true;
          log.message = "not converged (" + fr.status + "), Pearson fallback";
          val[k] = pearson;
        }
      } catch (const Error& e) {
        log.converged = false;
        log.fallback = true;
        log.message = std::string(e.what()) + ", Pearson fallback";
        val[k] = pearson;
      }
    }
    pm.pairs[k] = log;
  });
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    auto [i, j] = pairs[k];
    pm.R(i, j) = pm.R(j, i) = val[k];
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(pm.R);
  pm.min_eigen_before = es.eigenvalues().minCoeff();
  if (pm.min_eigen_before < -1e-8) {
    pm.R = nearest_psd(pm.R);
    pm.psd_corrected = true;
  }
  return pm;
}

inline double cronbach_alpha(const Mat& R) {
  const auto q = R.rows();
  if (q < 2 || R.cols() != q) throw Error(ErrorKind::BadInput, "need a square matrix with q >= 2");
  double s = 0;
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = 0; j < q; ++j)
      if (i != j) s += R(i, j);
  double rbar = s / static_cast<double>(q * (q - 1));
  return q * rbar / (1.0 + (q - 1) * rbar);
}

inline double cronbach_alpha(const PolyMatrix& pm) { return cronbach_alpha(pm.R); }

namespace detail {

struct FaState {
  Vec lambda;
  Mat Sigma;
  double F;
  Vec grad_psi;
};

// Loadings concentrated out for fixed uniquenesses; returns discrepancy and its psi-gradient
inline FaState fa_eval(const Mat& R, const Vec& psi, double logdetR) {
  const auto q = R.rows();
  Vec is = psi.cwiseSqrt().cwiseInverse();
  Mat S = is.asDiagonal() * R * is.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  double g1 = es.eigenvalues()[q - 1];
  Vec v = es.eigenvectors().col(q - 1);
  FaState st;
  st.lambda = psi.cwiseSqrt().cwiseProduct(v) * std::sqrt(std::max(g1 - 1.0, 0.0));
  st.Sigma = st.lambda * st.lambda.transpose();
  st.Sigma.diagonal() += psi;
  Eigen::LDLT<Mat> ldlt(st.Sigma);
  Mat Si = ldlt.solve(Mat::Identity(q, q));
  double logdet = ldlt.vectorD().array().log().sum();
  st.F = logdet + (R * Si).trace() - logdetR - static_cast<double>(q);
  Mat D = Si * (st.Sigma - R) * Si;
  st.grad_psi = D.diagonal();
  return st;
}

}  // namespace detail

// One-factor maximum-likelihood factor analysis of a correlation matrix.
inline FactorFit factor_fit(const Mat& R_in, int r = 1) {
  if (r != 1) throw Error(ErrorKind::BadInput, "only one-factor models are supported");
  detail::check_corr_input(R_in);
  const auto q = R_in.rows();
  if (q <= r) throw Error(ErrorKind::BadInput, "need more items than factors");
  Eigen::LLT<Mat> llt(R_in);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::BadInput, "matrix is not positive definite");
  const double floor = 0.005;
  double logdetR = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();

  auto psi_of = [&](const Vec& t) {
    return (floor + (1.0 - floor) / (1.0 + (-t.array()).exp())).matrix().eval();
  };
  Mat Ri = llt.solve(Mat::Identity(q, q));
  Vec t0(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    double psi = std::clamp(1.0 / Ri(j, j), floor + 0.01, 0.99);  // 1 - SMC
    double u = (psi - floor) / (1.0 - floor);
    t0[j] = std::log(u / (1.0 - u));
  }
  auto fg = [&](const Vec& t, Vec& g) {
    Vec psi = psi_of(t);
    auto st = detail::fa_eval(R_in, psi, logdetR);
    Vec dpsi = (psi.array() - floor) * (1.0 - (psi.array() - floor) / (1.0 - floor));
    g = st.grad_psi.cwiseProduct(dpsi);
    return st.F;
  };
  BfgsOptions opt;
  opt.max_iter = 2000;
  opt.grad_tol = 1e-10;
  opt.step_tol = 1e-14;
  auto res = bfgs(fg, t0, opt);
  Vec psi = psi_of(res.x);
  auto st = detail::fa_eval(R_in, psi, logdetR);

  FactorFit out;
  out.converged = res.converged || res.g.lpNorm<Eigen::Infinity>() < 1e-7;
  out.discrepancy = st.F;
  Vec lam = st.lambda;
  if (lam.sum() < 0) lam = -lam;
  Vec uniq(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    double u = 1.0 - lam[j] * lam[j];
    if (u <= floor + 1e-9 || psi[j] <= floor + 1e-6) {
      out.heywood.push_back(static_cast<int>(j));
      u = floor;
      lam[j] = (lam[j] < 0 ? -1.0 : 1.0) * std::sqrt(1.0 - floor);
    }
    uniq[j] = u;
  }
  // a "factor" loading on a single item is no common factor; R near I fits the
  // zero-loading solution equally well
  int loaded = 0;
  for (Eigen::Index j = 0; j < q; ++j) loaded += std::fabs(lam[j]) > 1e-3;
  if (loaded < 2) {
    double f0 = R_in.trace() - logdetR - static_cast<double>(q);
    if (f0 <= st.F + 1e-8) {
      lam.setZero();
      uniq.setOnes();
      out.heywood.clear();
      out.discrepancy = f0;
    }
  }
  out.loadings = lam;
  out.uniquenesses = uniq;
  out.proportion_variance = lam.squaredNorm() / static_cast<double>(q);
  out.informative = lam.cwiseAbs().maxCoeff() > 1e-3;
  return out;
}

inline FactorFit factor_fit(const PolyMatrix& pm, int r = 1) { return factor_fit(pm.R, r); }

}  // namespace discat
