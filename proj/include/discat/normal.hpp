#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

namespace discat {

inline double norm_pdf(double x) {
  if (std::isinf(x)) return 0.0;
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double norm_cdf(double x) {
  if (x == std::numeric_limits<double>::infinity()) return 1.0;
  if (x == -std::numeric_limits<double>::infinity()) return 0.0;
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// P(lo < Z <= hi) without cancellation in the upper tail
inline double norm_interval(double lo, double hi) {
  if (lo >= hi) return 0.0;
  if (lo > 0.0) return norm_cdf(-lo) - norm_cdf(-hi);
  return norm_cdf(hi) - norm_cdf(lo);
}

inline double norm_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  static const boost::math::normal_distribution<double> std_normal(0.0, 1.0);
  return boost::math::quantile(std_normal, p);
}

// bivariate standard normal density
inline double bvn_pdf(double h, double k, double r) {
  if (std::isinf(h) || std::isinf(k)) return 0.0;
  double s = 1.0 - r * r;
  return std::exp(-(h * h - 2.0 * r * h * k + k * k) / (2.0 * s)) /
         (2.0 * std::numbers::pi * std::sqrt(s));
}

namespace detail {

// P(X > h, Y > k), Genz's double-precision scheme (Drezner-Wesolowsky representation)
inline double bvnu(double h, double k, double r) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (h == inf || k == inf) return 0.0;
  if (h == -inf) return k == -inf ? 1.0 : norm_cdf(-k);
  if (k == -inf) return norm_cdf(-h);
  if (r == 0.0) return norm_cdf(-h) * norm_cdf(-k);

  static constexpr double w6[3] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static constexpr double x6[3] = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
  static constexpr double w12[6] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                    0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
  static constexpr double x12[6] = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                    0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
  static constexpr double w20[10] = {0.01761400713915212, 0.04060142980038694,
                                     0.06267204833410906, 0.08327674157670475,
                                     0.1019301198172404,  0.1181945319615184,
                                     0.1316886384491766,  0.1420961093183821,
                                     0.1491729864726037,  0.1527533871307259};
  static constexpr double x20[10] = {0.9931285991850949, 0.9639719272779138,
                                     0.9122344282513259, 0.8391169718222188,
                                     0.7463319064601508, 0.6360536807265150,
                                     0.5108670019508271, 0.3737060887154196,
                                     0.2277858511416451, 0.07652652113349733};
  const double* w;
  const double* x;
  int lg;
  double ar = std::fabs(r);
  if (ar < 0.3) {
    w = w6; x = x6; lg = 3;
  } else if (ar < 0.75) {
    w = w12; x = x12; lg = 6;
  } else {
    w = w20; x = x20; lg = 10;
  }
  constexpr double tp = 2.0 * std::numbers::pi;
  double hk = h * k;
  double bvn = 0.0;
  if (ar < 0.925) {
    double hs = (h * h + k * k) / 2.0;
    double asr = std::asin(r) / 2.0;
    for (int i = 0; i < lg; ++i) {
      for (int sgn : {-1, 1}) {
        double sn = std::sin(asr * (1.0 + sgn * x[i]));
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / tp + norm_cdf(-h) * norm_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (ar < 1.0) {
      double as = 1.0 - r * r;
      double a = std::sqrt(as);
      double bs = (h - k) * (h - k);
      double asr = -(bs / as + hk) / 2.0;
      double c = (4.0 - hk) / 8.0;
      double d = (12.0 - hk) / 80.0;
      if (asr > -100.0)
        bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
      if (hk > -100.0) {
        double b = std::sqrt(bs);
        double sp = std::sqrt(tp) * norm_cdf(-b / a);
        bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
      }
      a /= 2.0;
      double sum = 0.0;
      for (int i = 0; i < lg; ++i) {
        for (int sgn : {-1, 1}) {
          double xs = a * (1.0 + sgn * x[i]);
          xs *= xs;
          double asr2 = -(bs / xs + hk) / 2.0;
          if (asr2 > -100.0) {
            double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
            double rs = std::sqrt(1.0 - xs);
            double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
            sum += w[i] * std::exp(asr2) * (sp - ep);
          }
        }
      }
      bvn = (a * sum - bvn) / tp;
    }
    if (r > 0.0) {
      bvn += norm_cdf(-std::max(h, k));
    } else if (h >= k) {
      bvn = -bvn;
    } else {
      double L = h < 0.0 ? norm_cdf(k) - norm_cdf(h) : norm_cdf(-h) - norm_cdf(-k);
      bvn = L - bvn;
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

}  // namespace detail

// P(U <= h, V <= k) for a standard bivariate normal with correlation r
inline double bvn_cdf(double h, double k, double r) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (h == -inf || k == -inf) return 0.0;
  if (h == inf) return norm_cdf(k);
  if (k == inf) return norm_cdf(h);
  return detail::bvnu(-h, -k, r);
}

// P(h1 < U <= h2, k1 < V <= k2). Reflects each axis so the rectangle sits in the
// lower tails, which keeps the inclusion-exclusion terms small.
inline double bvn_rect(double h1, double h2, double k1, double k2, double r) {
  if (h1 >= h2 || k1 >= k2) return 0.0;
  if (h1 + h2 > 0.0) {
    double t = h1;
    h1 = -h2;
    h2 = -t;
    r = -r;
  }
  if (k1 + k2 > 0.0) {
    double t = k1;
    k1 = -k2;
    k2 = -t;
    r = -r;
  }
  double p = bvn_cdf(h2, k2, r) - bvn_cdf(h1, k2, r) - bvn_cdf(h2, k1, r) + bvn_cdf(h1, k1, r);
  return std::max(p, 0.0);
}

}  // namespace discat
