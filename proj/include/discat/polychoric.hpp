#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "discat/model.hpp"
#include "discat/normal.hpp"
#include "discat/tables.hpp"

namespace discat {

struct PolychoricParams {
  double rho = 0.0;
  std::vector<double> a;  // Jx - 1 increasing thresholds
  std::vector<double> b;  // Jy - 1

  int jx() const { return static_cast<int>(a.size()) + 1; }
  int jy() const { return static_cast<int>(b.size()) + 1; }

  Vec to_vector() const {
    Vec t(1 + a.size() + b.size());
    t[0] = rho;
    for (std::size_t i = 0; i < a.size(); ++i) t[1 + i] = a[i];
    for (std::size_t i = 0; i < b.size(); ++i) t[1 + a.size() + i] = b[i];
    return t;
  }

  static PolychoricParams from_vector(const Vec& t, int jx, int jy) {
    PolychoricParams p;
    p.rho = t[0];
    p.a.assign(t.data() + 1, t.data() + jx);
    p.b.assign(t.data() + jx, t.data() + jx + jy - 1);
    return p;
  }

  void validate() const {
    if (!(std::fabs(rho) <= 1.0 - 1e-9))
      throw Error(ErrorKind::InvalidParameter, "|rho| must be below 1");
    auto inc = [](const std::vector<double>& v, const char* nm) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i]))
          throw Error(ErrorKind::InvalidParameter, std::string("non-finite threshold in ") + nm);
        if (i > 0 && !(v[i] > v[i - 1]))
          throw Error(ErrorKind::InvalidParameter,
                      std::string("thresholds ") + nm + " must be strictly increasing");
      }
    };
    inc(a, "a");
    inc(b, "b");
  }

  // cut points with the infinite ends, index 0..J
  static double cut(const std::vector<double>& t, int i) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (i <= 0) return -inf;
    if (i > static_cast<int>(t.size())) return inf;
    return t[i - 1];
  }
};

inline double cell_prob(const PolychoricParams& p, int x, int y) {
  if (x < 1 || x > p.jx() || y < 1 || y > p.jy())
    throw Error(ErrorKind::OutOfRangeCategory, "cell outside table");
  return bvn_rect(PolychoricParams::cut(p.a, x - 1), PolychoricParams::cut(p.a, x),
                  PolychoricParams::cut(p.b, y - 1), PolychoricParams::cut(p.b, y), p.rho);
}

// d = Jx + Jy - 1 gradient, ordered (rho, a, b)
inline Vec cell_grad(const PolychoricParams& p, int x, int y) {
  if (x < 1 || x > p.jx() || y < 1 || y > p.jy())
    throw Error(ErrorKind::OutOfRangeCategory, "cell outside table");
  const int jx = p.jx();
  Vec g = Vec::Zero(jx + p.jy() - 1);
  const double r = p.rho;
  const double sd = std::sqrt(1.0 - r * r);
  double h1 = PolychoricParams::cut(p.a, x - 1), h2 = PolychoricParams::cut(p.a, x);
  double k1 = PolychoricParams::cut(p.b, y - 1), k2 = PolychoricParams::cut(p.b, y);

  g[0] = bvn_pdf(h2, k2, r) - bvn_pdf(h1, k2, r) - bvn_pdf(h2, k1, r) + bvn_pdf(h1, k1, r);

  // derivative of P(h1<U<=h2, k1<V<=k2) wrt a finite bound h on U
  auto du = [&](double h, double lo, double hi) {
    return norm_pdf(h) * norm_interval((lo - r * h) / sd, (hi - r * h) / sd);
  };
  if (x < jx) g[x] += du(h2, k1, k2);
  if (x > 1) g[x - 1] -= du(h1, k1, k2);
  if (y < p.jy()) g[jx - 1 + y] += du(k2, h1, h2);
  if (y > 1) g[jx - 1 + y - 1] -= du(k1, h1, h2);
  return g;
}

namespace detail {

inline std::vector<double> start_thresholds(const std::vector<double>& margin) {
  double tot = 0;
  for (double m : margin) tot += m;
  std::vector<double> t;
  double cum = 0;
  for (std::size_t j = 0; j + 1 < margin.size(); ++j) {
    cum += margin[j];
    double v = std::clamp(norm_quantile(cum / tot), -8.0, 8.0);
    if (!t.empty() && v < t.back() + 1e-3) v = t.back() + 1e-3;
    t.push_back(v);
  }
  return t;
}

// frequencies laid out as a dense jx x jy table, x slowest
inline PolychoricParams initial_params_freq(const Vec& f, int jx, int jy) {
  std::vector<double> mx(jx, 0.0), my(jy, 0.0);
  for (int x = 0; x < jx; ++x)
    for (int y = 0; y < jy; ++y) {
      mx[x] += f[x * jy + y];
      my[y] += f[x * jy + y];
    }
  auto populated = [](const std::vector<double>& m) {
    return std::count_if(m.begin(), m.end(), [](double v) { return v > 0; });
  };
  if (populated(mx) < 2 || populated(my) < 2)
    throw Error(ErrorKind::DegenerateMargin, "a variable has a single observed category");
  PolychoricParams p;
  p.a = start_thresholds(mx);
  p.b = start_thresholds(my);

  double tot = 0, ex = 0, ey = 0;
  for (int x = 0; x < jx; ++x)
    for (int y = 0; y < jy; ++y) {
      double w = f[x * jy + y];
      tot += w;
      ex += w * (x + 1);
      ey += w * (y + 1);
    }
  ex /= tot;
  ey /= tot;
  double sxx = 0, syy = 0, sxy = 0;
  for (int x = 0; x < jx; ++x)
    for (int y = 0; y < jy; ++y) {
      double w = f[x * jy + y] / tot;
      sxx += w * (x + 1 - ex) * (x + 1 - ex);
      syy += w * (y + 1 - ey) * (y + 1 - ey);
      sxy += w * (x + 1 - ex) * (y + 1 - ey);
    }
  p.rho = std::clamp(sxy / std::sqrt(sxx * syy), -0.95, 0.95);
  return p;
}

}  // namespace detail

inline PolychoricParams initial_params(const ContingencyTable& t) {
  if (t.arity() != 2) throw Error(ErrorKind::BadInput, "polychoric model needs a two-way table");
  return detail::initial_params_freq(t.frequencies(), t.levels()[0], t.levels()[1]);
}

class PolychoricModel {
 public:
  PolychoricModel(int jx, int jy) : jx_(jx), jy_(jy), space_({jx, jy}) {
    if (jx < 2 || jy < 2) throw Error(ErrorKind::BadInput, "need at least two categories");
    support_ = all_cells(space_.size());
  }

  std::size_t dim() const { return static_cast<std::size_t>(jx_ + jy_ - 1); }
  const SampleSpace& space() const { return space_; }
  const std::vector<std::size_t>& support() const { return support_; }
  int jx() const { return jx_; }
  int jy() const { return jy_; }

  PolychoricParams params(const Vec& theta) const {
    return PolychoricParams::from_vector(theta, jx_, jy_);
  }

  void validate(const Vec& theta) const {
    if (static_cast<std::size_t>(theta.size()) != dim())
      throw Error(ErrorKind::InvalidParameter, "parameter vector has wrong length");
    params(theta).validate();
  }

  void probs_grad(const Vec& theta, Vec& p, Mat& G) const {
    auto par = params(theta);
    p.resize(space_.size());
    G.resize(space_.size(), dim());
    for (int x = 1; x <= jx_; ++x)
      for (int y = 1; y <= jy_; ++y) {
        std::size_t z = (x - 1) * jy_ + (y - 1);
        p[z] = cell_prob(par, x, y);
        G.row(z) = cell_grad(par, x, y).transpose();
      }
  }

  Vec to_unconstrained(const Vec& theta) const {
    Vec u(dim());
    u[0] = std::atanh(theta[0]);
    auto block = [&](int off, int n) {
      for (int i = 0; i < n; ++i)
        u[off + i] = i == 0 ? theta[off] : std::log(theta[off + i] - theta[off + i - 1]);
    };
    block(1, jx_ - 1);
    block(jx_, jy_ - 1);
    return u;
  }

  Vec from_unconstrained(const Vec& u) const {
    Vec t(dim());
    t[0] = std::tanh(u[0]);
    auto block = [&](int off, int n) {
      for (int i = 0; i < n; ++i) t[off + i] = i == 0 ? u[off] : t[off + i - 1] + std::exp(u[off + i]);
    };
    block(1, jx_ - 1);
    block(jx_, jy_ - 1);
    return t;
  }

  Mat jacobian(const Vec& u) const {
    Mat J = Mat::Zero(dim(), dim());
    double th = std::tanh(u[0]);
    J(0, 0) = 1.0 - th * th;
    auto block = [&](int off, int n) {
      for (int i = 0; i < n; ++i) {
        J(off + i, off) = 1.0;
        for (int m = 1; m <= i; ++m) J(off + i, off + m) = std::exp(u[off + m]);
      }
    };
    block(1, jx_ - 1);
    block(jx_, jy_ - 1);
    return J;
  }

  Vec start(const Vec& fhat) const { return detail::initial_params_freq(fhat, jx_, jy_).to_vector(); }

 private:
  int jx_, jy_;
  SampleSpace space_;
  std::vector<std::size_t> support_;
};

}  // namespace discat
