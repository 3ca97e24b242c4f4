#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "discat/model.hpp"
#include "discat/tables.hpp"

namespace discat {

// ---------------- conditional Rasch ----------------

struct RaschSpec {
  int k = 0;
  Vec theta;  // k difficulties, theta[0] == 0
};

namespace detail {

// elementary symmetric functions e_0..e_n of v, skipping index `skip` (-1 keeps all)
inline std::vector<double> esf(const std::vector<double>& v, int skip = -1) {
  std::vector<double> e(v.size() + 1, 0.0);
  e[0] = 1.0;
  int n = 0;
  for (int j = 0; j < static_cast<int>(v.size()); ++j) {
    if (j == skip) continue;
    ++n;
    for (int s = n; s >= 1; --s) e[s] += v[j] * e[s - 1];
  }
  return e;
}

}  // namespace detail

inline double rasch_prob(const RaschSpec& spec, const std::vector<int>& x, int s) {
  if (static_cast<int>(x.size()) != spec.k || spec.theta.size() != static_cast<Eigen::Index>(spec.k))
    throw Error(ErrorKind::BadInput, "response vector length must equal k");
  int sum = 0;
  for (int v : x) {
    if (v != 0 && v != 1) throw Error(ErrorKind::BadInput, "responses must be 0/1");
    sum += v;
  }
  if (s < 0 || s > spec.k || sum != s)
    throw Error(ErrorKind::ScoreMismatch, "score does not equal the sum of responses");
  std::vector<double> eps(spec.k);
  double num = 1.0;
  for (int j = 0; j < spec.k; ++j) {
    eps[j] = std::exp(-spec.theta[j]);
    if (x[j]) num *= eps[j];
  }
  return num / detail::esf(eps)[s];
}

// Outcome z = (x, s). Codes: 1 means x_j = 0, 2 means x_j = 1.
// p_z = P(x | s; theta) * pi(s), pi the score distribution held fixed.
// Free parameters are theta_2..theta_k.
class RaschModel {
 public:
  RaschModel(int k, std::vector<double> score_dist)
      : k_(k), space_(std::vector<int>(std::max(k, 0), 2)), pi_(std::move(score_dist)) {
    if (k < 2) throw Error(ErrorKind::BadInput, "Rasch model needs k >= 2 items");
    if (k > 20) throw Error(ErrorKind::TooManyItems, "Rasch enumeration limited to k <= 20");
    if (static_cast<int>(pi_.size()) != k + 1)
      throw Error(ErrorKind::BadInput, "score distribution must have k + 1 entries");
    double tot = 0;
    for (double v : pi_) {
      if (v < 0) throw Error(ErrorKind::BadInput, "negative score weight");
      tot += v;
    }
    if (!(tot > 0)) throw Error(ErrorKind::EmptyTable, "empty score distribution");
    for (double& v : pi_) v /= tot;
    for (std::size_t z = 0; z < space_.size(); ++z)
      if (pi_[score(z)] > 0) support_.push_back(z);
  }

  static std::vector<double> score_distribution(const Vec& fhat, int k) {
    RaschModel probe(k, std::vector<double>(k + 1, 1.0));
    std::vector<double> pi(k + 1, 0.0);
    for (std::size_t z = 0; z < probe.space_.size(); ++z) pi[probe.score(z)] += fhat[z];
    return pi;
  }

  static RaschModel from_table(const ContingencyTable& t) {
    int k = static_cast<int>(t.arity());
    if (k > 20) throw Error(ErrorKind::TooManyItems, "Rasch enumeration limited to k <= 20");
    for (int lv : t.levels())
      if (lv != 2) throw Error(ErrorKind::BadInput, "Rasch tables must be binary");
    return RaschModel(k, score_distribution(t.frequencies(), k));
  }

  std::size_t dim() const { return static_cast<std::size_t>(k_ - 1); }
  const SampleSpace& space() const { return space_; }
  const std::vector<std::size_t>& support() const { return support_; }
  const std::vector<double>& score_weights() const { return pi_; }
  int items() const { return k_; }

  int score(std::size_t z) const {
    int s = 0;
    for (int j = k_ - 1; j >= 0; --j) {
      s += static_cast<int>(z & 1u);
      z >>= 1;
    }
    return s;
  }
  bool bit(std::size_t z, int j) const { return (z >> (k_ - 1 - j)) & 1u; }

  void validate(const Vec& theta) const {
    if (static_cast<std::size_t>(theta.size()) != dim())
      throw Error(ErrorKind::InvalidParameter, "parameter vector has wrong length");
    for (int i = 0; i < theta.size(); ++i)
      if (!std::isfinite(theta[i])) throw Error(ErrorKind::InvalidParameter, "non-finite difficulty");
  }

  Vec full_theta(const Vec& theta) const {
    Vec f(k_);
    f[0] = 0.0;
    f.tail(k_ - 1) = theta;
    return f;
  }

  void probs_grad(const Vec& theta, Vec& p, Mat& G) const {
    const std::size_t n = space_.size();
    p = Vec::Zero(n);
    G = Mat::Zero(n, dim());
    Vec th = full_theta(theta);
    // centre for numerical range; conditional probs are shift invariant
    double mid = th.mean();
    std::vector<double> eps(k_);
    for (int j = 0; j < k_; ++j) eps[j] = std::exp(-(th[j] - mid));
    auto gam = detail::esf(eps);
    std::vector<std::vector<double>> gam_j(k_);
    for (int j = 0; j < k_; ++j) gam_j[j] = detail::esf(eps, j);
    for (auto z : support_) {
      int s = score(z);
      double num = 1.0;
      for (int j = 0; j < k_; ++j)
        if (bit(z, j)) num *= eps[j];
      double pz = num / gam[s] * pi_[s];
      p[z] = pz;
      for (int j = 1; j < k_; ++j) {
        double e = s > 0 ? eps[j] * gam_j[j][s - 1] / gam[s] : 0.0;
        G(z, j - 1) = pz * ((bit(z, j) ? -1.0 : 0.0) + e);
      }
    }
  }

  Vec to_unconstrained(const Vec& theta) const { return theta; }
  Vec from_unconstrained(const Vec& u) const { return u; }
  Mat jacobian(const Vec&) const { return Mat::Identity(dim(), dim()); }

  Vec start(const Vec& fhat) const {
    std::vector<double> m(k_, 0.0);
    for (std::size_t z = 0; z < space_.size(); ++z)
      for (int j = 0; j < k_; ++j)
        if (bit(z, j)) m[j] += fhat[z];
    auto lg = [](double q) {
      q = std::clamp(q, 0.01, 0.99);
      return -std::log(q / (1.0 - q));
    };
    Vec t(dim());
    for (int j = 1; j < k_; ++j) t[j - 1] = lg(m[j]) - lg(m[0]);
    return t;
  }

 private:
  int k_;
  SampleSpace space_;
  std::vector<double> pi_;
  std::vector<std::size_t> support_;
};

// ---------------- stationary Poisson process ----------------

struct PoissonSpec {
  std::vector<std::pair<double, double>> periods;  // (a_j, b_j]
  int zmax = 10;
  double lambda = 1.0;

  std::vector<double> lengths() const {
    std::vector<double> t;
    for (std::size_t j = 0; j < periods.size(); ++j) {
      auto [a, b] = periods[j];
      if (!(a < b)) throw Error(ErrorKind::InvalidParameter, "period must have a < b");
      if (j > 0 && a < periods[j - 1].second)
        throw Error(ErrorKind::InvalidParameter, "periods must not overlap");
      t.push_back(b - a);
    }
    if (t.empty()) throw Error(ErrorKind::InvalidParameter, "need at least one period");
    return t;
  }
};

namespace detail {

// log q(n) and d log q / d lambda for one period of length t
inline std::pair<double, double> poisson_cell(int n, int zmax, double lambda, double t) {
  double mu = lambda * t;
  if (n < zmax) {
    double lq = n * std::log(mu) - mu - std::lgamma(n + 1.0);
    return {lq, n / lambda - t};
  }
  double tail = boost::math::gamma_p(static_cast<double>(zmax), mu);
  double dens = boost::math::gamma_p_derivative(static_cast<double>(zmax), mu);
  return {std::log(tail), t * dens / tail};
}

}  // namespace detail

inline double poisson_prob(const PoissonSpec& spec, const std::vector<int>& z) {
  auto t = spec.lengths();
  if (z.size() != t.size()) throw Error(ErrorKind::RaggedRow, "count vector length mismatch");
  if (!(spec.lambda > 0)) throw Error(ErrorKind::InvalidParameter, "lambda must be positive");
  double lp = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (z[j] < 0) throw Error(ErrorKind::BadInput, "negative count");
    if (z[j] > spec.zmax)
      throw Error(ErrorKind::CountExceedsTruncation, "count above truncation bound");
    lp += detail::poisson_cell(z[j], spec.zmax, spec.lambda, t[j]).first;
  }
  return std::exp(lp);
}

// Codes are count + 1, so every period has zmax + 1 levels.
class PoissonModel {
 public:
  PoissonModel(std::vector<std::pair<double, double>> periods, int zmax)
      : spec_{std::move(periods), zmax, 1.0} {
    if (zmax < 1) throw Error(ErrorKind::InvalidParameter, "zmax must be >= 1");
    t_ = spec_.lengths();
    space_ = SampleSpace(std::vector<int>(t_.size(), zmax + 1));
    support_ = all_cells(space_.size());
  }

  static int default_zmax(int max_observed) { return max_observed + 10; }

  std::size_t dim() const { return 1; }
  const SampleSpace& space() const { return space_; }
  const std::vector<std::size_t>& support() const { return support_; }
  const std::vector<double>& lengths() const { return t_; }
  int zmax() const { return spec_.zmax; }

  void validate(const Vec& theta) const {
    if (theta.size() != 1 || !(theta[0] > 0) || !std::isfinite(theta[0]))
      throw Error(ErrorKind::InvalidParameter, "lambda must be positive and finite");
  }

  void probs_grad(const Vec& theta, Vec& p, Mat& G) const {
    const double lambda = theta[0];
    const int zm = spec_.zmax;
    const std::size_t k = t_.size();
    std::vector<std::vector<std::pair<double, double>>> tab(k);
    for (std::size_t j = 0; j < k; ++j)
      for (int n = 0; n <= zm; ++n) tab[j].push_back(detail::poisson_cell(n, zm, lambda, t_[j]));
    p.resize(space_.size());
    G.resize(space_.size(), 1);
    for (std::size_t z = 0; z < space_.size(); ++z) {
      std::size_t rem = z;
      double lp = 0, dl = 0;
      for (std::size_t j = k; j-- > 0;) {
        int n = static_cast<int>(rem % (zm + 1));
        rem /= (zm + 1);
        lp += tab[j][n].first;
        dl += tab[j][n].second;
      }
      p[z] = std::exp(lp);
      G(z, 0) = p[z] * dl;
    }
  }

  Vec to_unconstrained(const Vec& theta) const { return Vec::Constant(1, std::log(theta[0])); }
  Vec from_unconstrained(const Vec& u) const {
    return Vec::Constant(1, std::exp(std::clamp(u[0], -30.0, 30.0)));
  }
  Mat jacobian(const Vec& u) const { return Mat::Constant(1, 1, std::exp(std::clamp(u[0], -30.0, 30.0))); }

  Vec start(const Vec& fhat) const {
    const int zm = spec_.zmax;
    double events = 0, len = 0;
    for (double t : t_) len += t;
    for (std::size_t z = 0; z < space_.size(); ++z) {
      std::size_t rem = z;
      double tot = 0;
      for (std::size_t j = 0; j < t_.size(); ++j) {
        tot += static_cast<double>(rem % (zm + 1));
        rem /= (zm + 1);
      }
      events += fhat[z] * tot;
    }
    return Vec::Constant(1, std::max(events / len, 1e-3));
  }

 private:
  PoissonSpec spec_;
  std::vector<double> t_;
  SampleSpace space_;
  std::vector<std::size_t> support_;
};

}  // namespace discat
