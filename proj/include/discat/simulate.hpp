#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "discat/estimator.hpp"
#include "discat/inference.hpp"
#include "discat/multivariate.hpp"
#include "discat/parallel.hpp"
#include "discat/polychoric.hpp"

namespace discat {

// ---------------- random numbers ----------------

inline constexpr const char* kRngName =
    "mt19937_64 per stream, seeded by splitmix64(seed, stream); uniforms (x>>11)*2^-53; "
    "normals by Box-Muller";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent stream per (seed, replication, tag). Output is fixed by the algorithms,
// not by the standard library's distribution objects.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag = 0)
      : gen_(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x2545F4914F6CDD1Dull + tag))) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n)
  std::size_t below(std::size_t n) {
    return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0;
};

// category x when thr[x-2] < v <= thr[x-1]
inline int discretize(double v, const std::vector<double>& thr) {
  int x = 1;
  for (double t : thr)
    if (v > t) ++x;
  return x;
}

// ---------------- designs ----------------

struct PolycorDesign {
  int n = 1000;
  std::vector<double> a{-1.5, -0.5, 0.5, 1.5};
  std::vector<double> b{-1.5, -0.5, 0.5, 1.5};
  double rho = 0.5;
  std::vector<double> eps{0.0, 0.1, 0.2};
  double contam_mean_x = 2.0, contam_mean_y = -2.0;
  double contam_var_x = 0.2, contam_var_y = 0.2;
  // true: exactly floor(eps*n) contaminated draws; false: each draw contaminated w.p. eps
  bool fixed_count = true;
  int reps = 1000;
  std::uint64_t seed = 1;

  Vec theta_star() const {
    PolychoricParams p{rho, a, b};
    return p.to_vector();
  }
};

struct SemDesign {
  int n = 1000;
  int q = 4;
  double loading = 0.75;
  std::vector<double> thresholds{-1.5, -0.5, 0.5, 1.5};
  std::vector<double> eps{0.0, 0.1, 0.2};
  std::vector<int> leverage{1, 5, 1, 5};
  int reps = 1000;
  std::uint64_t seed = 1;

  Mat sigma() const {
    Mat S = Mat::Constant(q, q, loading * loading);
    S.diagonal().setOnes();
    return S;
  }
  double true_corr() const { return loading * loading; }
  double true_alpha() const { return cronbach_alpha(sigma()); }
};

inline std::uint64_t eps_tag(double eps) { return static_cast<std::uint64_t>(std::llround(eps * 1e6)); }

inline ContingencyTable draw_polycor(const PolycorDesign& d, double eps, Rng& rng) {
  if (!(eps >= 0 && eps <= 1)) throw Error(ErrorKind::InvalidParameter, "eps must be in [0,1]");
  ContingencyTable t({static_cast<int>(d.a.size()) + 1, static_cast<int>(d.b.size()) + 1});
  const double sr = std::sqrt(1.0 - d.rho * d.rho);
  const int m = static_cast<int>(std::floor(eps * d.n + 1e-9));
  for (int i = 0; i < d.n; ++i) {
    double u = rng.uniform();
    double z1 = rng.normal(), z2 = rng.normal();
    double xi, eta;
    if (d.fixed_count ? i < m : u < eps) {
      xi = d.contam_mean_x + std::sqrt(d.contam_var_x) * z1;
      eta = d.contam_mean_y + std::sqrt(d.contam_var_y) * z2;
    } else {
      xi = z1;
      eta = d.rho * z1 + sr * z2;
    }
    t.add({discretize(xi, d.a), discretize(eta, d.b)}, 1);
  }
  return t;
}

inline std::vector<std::vector<int>> draw_sem(const SemDesign& d, double eps, Rng& rng) {
  if (!(eps >= 0 && eps <= 1)) throw Error(ErrorKind::InvalidParameter, "eps must be in [0,1]");
  Eigen::LLT<Mat> llt(d.sigma());
  Mat L = llt.matrixL();
  std::vector<std::vector<int>> rows(d.n, std::vector<int>(d.q));
  Vec z(d.q);
  for (int i = 0; i < d.n; ++i) {
    for (int j = 0; j < d.q; ++j) z[j] = rng.normal();
    Vec x = L * z;
    for (int j = 0; j < d.q; ++j) rows[i][j] = discretize(x[j], d.thresholds);
  }
  auto m = static_cast<std::size_t>(std::floor(eps * d.n + 1e-9));
  std::vector<std::size_t> idx(d.n);
  for (int i = 0; i < d.n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j = i + rng.below(d.n - i);
    std::swap(idx[i], idx[j]);
    rows[idx[i]] = d.leverage;
  }
  return rows;
}

// ---------------- metrics ----------------

enum class Estimator { Robust, MLE, Pearson };

inline const char* estimator_name(Estimator e) {
  switch (e) {
    case Estimator::Robust: return "robust";
    case Estimator::MLE: return "mle";
    case Estimator::Pearson: return "pearson";
  }
  return "?";
}

struct RepRecord {
  double eps = 0;
  int rep = 0;
  Estimator est = Estimator::Robust;
  bool ok = false;
  std::string note;
  // polycor design
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
  double sq_err_theta = std::numeric_limits<double>::quiet_NaN();
  // sem design
  double rmse_lambda = std::numeric_limits<double>::quiet_NaN();
  double rmse_sigma = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double rmse_alpha = std::numeric_limits<double>::quiet_NaN();
};

struct MetricsRow {
  std::string design;
  double eps = 0;
  Estimator est = Estimator::Robust;
  int n_ok = 0;
  int n_fail = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double bias = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double ci_length = std::numeric_limits<double>::quiet_NaN();
  double median_se = std::numeric_limits<double>::quiet_NaN();
  double mse_theta = std::numeric_limits<double>::quiet_NaN();
  double rmse_lambda = std::numeric_limits<double>::quiet_NaN();
  double rmse_sigma = std::numeric_limits<double>::quiet_NaN();
  double rmse_alpha = std::numeric_limits<double>::quiet_NaN();
  double mean_alpha = std::numeric_limits<double>::quiet_NaN();

  double failure_rate() const {
    int n = n_ok + n_fail;
    return n == 0 ? 0.0 : static_cast<double>(n_fail) / n;
  }
};

struct RunResult {
  std::vector<MetricsRow> rows;
  std::vector<RepRecord> reps;
  bool failed = false;  // some estimator exceeded 2% failures
};

struct SimConfig {
  std::vector<Estimator> estimators{Estimator::Robust, Estimator::MLE, Estimator::Pearson};
  TuningConstant c{1.6};
  double alpha = 0.05;
  int threads = 1;
  FitConfig fit;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / v.size();
}

inline double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double m = mean_of(v), s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<MetricsRow> aggregate(const std::string& design, const std::vector<double>& eps,
                                         const std::vector<Estimator>& ests,
                                         const std::vector<RepRecord>& recs, double truth) {
  std::vector<MetricsRow> out;
  for (double e : eps)
    for (auto est : ests) {
      MetricsRow row;
      row.design = design;
      row.eps = e;
      row.est = est;
      std::vector<double> v, se, len, mse, rl, rs, ra, al;
      int cover = 0;
      for (auto& r : recs) {
        if (r.eps != e || r.est != est) continue;
        if (!r.ok) {
          ++row.n_fail;
          continue;
        }
        ++row.n_ok;
        if (std::isfinite(r.estimate)) {
          v.push_back(r.estimate);
          se.push_back(r.se);
          len.push_back(r.upper - r.lower);
          cover += (r.lower <= truth && truth <= r.upper);
        }
        if (std::isfinite(r.sq_err_theta)) mse.push_back(r.sq_err_theta);
        if (std::isfinite(r.rmse_lambda)) {
          rl.push_back(r.rmse_lambda);
          rs.push_back(r.rmse_sigma);
          ra.push_back(r.rmse_alpha);
          al.push_back(r.alpha);
        }
      }
      if (!v.empty()) {
        row.mean = mean_of(v);
        row.bias = row.mean - truth;
        row.sd = sd_of(v);
        row.coverage = static_cast<double>(cover) / v.size();
        row.ci_length = mean_of(len);
        row.median_se = median_of(se);
      }
      if (!mse.empty()) row.mse_theta = mean_of(mse);
      if (!rl.empty()) {
        row.rmse_lambda = mean_of(rl);
        row.rmse_sigma = mean_of(rs);
        row.rmse_alpha = mean_of(ra);
        row.mean_alpha = mean_of(al);
      }
      out.push_back(row);
    }
  return out;
}

}  // namespace detail

// One replication of the pairwise design for one estimator.
inline RepRecord polycor_rep(const PolycorDesign& d, const ContingencyTable& t, Estimator est,
                             const SimConfig& cfg) {
  RepRecord r;
  try {
    if (est == Estimator::Pearson) {
      double rr = pearson_sample_corr(t);
      double zse = 1.0 / std::sqrt(static_cast<double>(t.total()) - 3.0);
      double q = norm_quantile(1.0 - cfg.alpha / 2.0);
      double z = std::atanh(std::clamp(rr, -1.0 + 1e-15, 1.0 - 1e-15));
      r.estimate = rr;
      r.se = (1.0 - rr * rr) * zse;
      r.lower = std::tanh(z - q * zse);
      r.upper = std::tanh(z + q * zse);
      r.ok = true;
      return r;
    }
    PolychoricModel m(static_cast<int>(d.a.size()) + 1, static_cast<int>(d.b.size()) + 1);
    FitConfig fc = cfg.fit;
    fc.c = est == Estimator::MLE ? TuningConstant::infinity() : cfg.c;
    Vec f = t.frequencies();
    auto fr = fit(m, f, static_cast<double>(t.total()), fc);
    if (!fr.converged) {
      r.note = "not converged: " + fr.status;
      return r;
    }
    auto cov = plugin_covariance(m, fr, f);
    auto ci = confidence_interval(fr.theta[0], cov.se[0], cfg.alpha);
    r.estimate = fr.theta[0];
    r.se = cov.se[0];
    r.lower = ci.lower;
    r.upper = ci.upper;
    r.sq_err_theta = (fr.theta - d.theta_star()).squaredNorm();
    r.ok = true;
  } catch (const Error& e) {
    r.note = e.what();
  }
  return r;
}

inline RunResult run_polycor(const PolycorDesign& d, const SimConfig& cfg) {
  if (d.reps < 1) throw Error(ErrorKind::InvalidParameter, "reps must be >= 1");
  const std::size_t ne = cfg.estimators.size();
  std::vector<RepRecord> recs(d.eps.size() * d.reps * ne);
  parallel_for(d.eps.size() * d.reps, cfg.threads, [&](std::size_t k) {
    std::size_t ie = k / d.reps;
    int rep = static_cast<int>(k % d.reps);
    double eps = d.eps[ie];
    Rng rng(d.seed, static_cast<std::uint64_t>(rep), eps_tag(eps));
    auto t = draw_polycor(d, eps, rng);
    for (std::size_t j = 0; j < ne; ++j) {
      auto r = polycor_rep(d, t, cfg.estimators[j], cfg);
      r.eps = eps;
      r.rep = rep;
      r.est = cfg.estimators[j];
      recs[k * ne + j] = r;
    }
  });
  RunResult out;
  out.reps = std::move(recs);
  out.rows = detail::aggregate("polycor", d.eps, cfg.estimators, out.reps, d.rho);
  for (auto& row : out.rows)
    if (row.failure_rate() > 0.02) out.failed = true;
  return out;
}

inline RepRecord sem_rep(const SemDesign& d, const std::vector<std::vector<int>>& rows, Estimator est,
                         const SimConfig& cfg) {
  RepRecord r;
  try {
    CorrMethod m = est == Estimator::Robust ? CorrMethod::Robust
                   : est == Estimator::MLE  ? CorrMethod::MLE
                                            : CorrMethod::Pearson;
    auto pm = poly_matrix(rows, m, cfg.c, 1, cfg.fit);
    if (pm.any_fallback()) {
      r.note = "pairwise fit failed";
      return r;
    }
    auto ff = factor_fit(pm.R, 1);
    double sl = 0, ss = 0;
    int cnt = 0;
    for (int i = 0; i < d.q; ++i) {
      sl += std::pow(ff.loadings[i] - d.loading, 2);
      for (int j = i + 1; j < d.q; ++j, ++cnt) ss += std::pow(pm.R(i, j) - d.true_corr(), 2);
    }
    r.rmse_lambda = std::sqrt(sl / d.q);
    r.rmse_sigma = std::sqrt(ss / cnt);
    r.alpha = cronbach_alpha(pm.R);
    r.rmse_alpha = std::fabs(r.alpha - d.true_alpha());
    r.ok = true;
  } catch (const Error& e) {
    r.note = e.what();
  }
  return r;
}

inline RunResult run_sem(const SemDesign& d, const SimConfig& cfg) {
  if (d.reps < 1) throw Error(ErrorKind::InvalidParameter, "reps must be >= 1");
  const std::size_t ne = cfg.estimators.size();
  std::vector<RepRecord> recs(d.eps.size() * d.reps * ne);
  parallel_for(d.eps.size() * d.reps, cfg.threads, [&](std::size_t k) {
    std::size_t ie = k / d.reps;
    int rep = static_cast<int>(k % d.reps);
    double eps = d.eps[ie];
    Rng rng(d.seed, static_cast<std::uint64_t>(rep), eps_tag(eps));
    auto rows = draw_sem(d, eps, rng);
    for (std::size_t j = 0; j < ne; ++j) {
      auto r = sem_rep(d, rows, cfg.estimators[j], cfg);
      r.eps = eps;
      r.rep = rep;
      r.est = cfg.estimators[j];
      recs[k * ne + j] = r;
    }
  });
  RunResult out;
  out.reps = std::move(recs);
  out.rows = detail::aggregate("sem", d.eps, cfg.estimators, out.reps, d.true_corr());
  for (auto& row : out.rows)
    if (row.failure_rate() > 0.02) out.failed = true;
  return out;
}

// ---------------- output ----------------

namespace detail {
inline std::ostream& num(std::ostream& os, double v) {
  if (std::isnan(v)) return os << "NA";
  return os << std::setprecision(17) << v;
}
}  // namespace detail

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "design,eps,estimator,n_ok,n_fail,mean,bias,sd,coverage,ci_length,median_se,mse_theta,"
        "rmse_lambda,rmse_sigma,rmse_alpha,mean_alpha\n";
  for (auto& r : rows) {
    os << r.design << ',';
    detail::num(os, r.eps) << ',' << estimator_name(r.est) << ',' << r.n_ok << ',' << r.n_fail;
    for (double v : {r.mean, r.bias, r.sd, r.coverage, r.ci_length, r.median_se, r.mse_theta,
                     r.rmse_lambda, r.rmse_sigma, r.rmse_alpha, r.mean_alpha}) {
      os << ',';
      detail::num(os, v);
    }
    os << '\n';
  }
}

inline void write_reps_csv(std::ostream& os, const std::vector<RepRecord>& recs) {
  os << "eps,rep,estimator,ok,estimate,se,lower,upper,sq_err_theta,rmse_lambda,rmse_sigma,alpha,"
        "rmse_alpha,note\n";
  for (auto& r : recs) {
    detail::num(os, r.eps) << ',' << r.rep << ',' << estimator_name(r.est) << ',' << (r.ok ? 1 : 0);
    for (double v : {r.estimate, r.se, r.lower, r.upper, r.sq_err_theta, r.rmse_lambda,
                     r.rmse_sigma, r.alpha, r.rmse_alpha}) {
      os << ',';
      detail::num(os, v);
    }
    std::string note = r.note;
    std::replace(note.begin(), note.end(), ',', ';');
    std::replace(note.begin(), note.end(), '\n', ' ');
    os << ',' << note << '\n';
  }
}

}  // namespace discat
