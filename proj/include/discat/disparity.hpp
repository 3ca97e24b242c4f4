#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "discat/error.hpp"

namespace discat {

// c in [1, inf]; inf means maximum likelihood
struct TuningConstant {
  double c = 1.6;

  TuningConstant() = default;
  TuningConstant(double v) : c(v) {  // NOLINT implicit on purpose
    if (!(v >= 1.0)) throw Error(ErrorKind::InvalidParameter, "tuning constant must be >= 1");
  }
  static TuningConstant infinity() { return TuningConstant(std::numeric_limits<double>::infinity()); }
  bool is_mle() const { return std::isinf(c); }
  operator double() const { return c; }
};

inline TuningConstant parse_tuning(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "INF") return TuningConstant::infinity();
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw Error(ErrorKind::BadInput, "bad tuning constant '" + s + "'");
  }
  if (pos != s.size()) throw Error(ErrorKind::BadInput, "bad tuning constant '" + s + "'");
  return TuningConstant(v);
}

namespace detail {
inline void check_nonneg(double x) {
  if (!(x >= 0.0)) throw Error(ErrorKind::NegativeResidual, "residual must be nonnegative");
}
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }
}  // namespace detail

// x log x up to c, then the tangent line at c
inline double rho(double x, TuningConstant c) {
  detail::check_nonneg(x);
  if (x <= c.c) return detail::xlogx(x);
  return x * (std::log(c.c) + 1.0) - c.c;
}

inline double rho_prime(double x, TuningConstant c) {
  detail::check_nonneg(x);
  if (x <= c.c) return std::log(x) + 1.0;
  return std::log(c.c) + 1.0;
}

inline double weight(double x, TuningConstant c) {
  detail::check_nonneg(x);
  return x <= c.c ? 1.0 : c.c / x;
}

inline double weight_prime(double x, TuningConstant c) {
  detail::check_nonneg(x);
  if (c.is_mle()) return 0.0;
  if (x == c.c) throw Error(ErrorKind::AtKink, "w' undefined at x = c");
  return x < c.c ? 0.0 : -c.c / (x * x);
}

inline double pearson_residual(double fhat, double p) {
  if (!(p > 0.0)) throw Error(ErrorKind::ZeroModelProbability, "model probability is zero");
  if (fhat < 0.0) throw Error(ErrorKind::NegativeResidual, "negative frequency");
  return fhat / p;
}

}  // namespace discat
