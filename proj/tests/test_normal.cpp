#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "discat/discat.hpp"
#include "oracles.hpp"

using namespace discat;

const double kInf = std::numeric_limits<double>::infinity();

TEST(Normal, Univariate) {
  EXPECT_NEAR(norm_cdf(0), 0.5, 1e-16);
  EXPECT_NEAR(norm_cdf(-1.5), 0.066807201268858057, 1e-15);
  EXPECT_NEAR(norm_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(norm_interval(-0.5, 0.5), 0.38292492254802624, 1e-14);
  EXPECT_NEAR(norm_interval(9, 10), oracle::Phi(-9) - oracle::Phi(-10), 1e-25);
}

TEST(Normal, BvnExamples) {
  EXPECT_NEAR(bvn_cdf(0, 0, 0), 0.25, 1e-15);
  EXPECT_NEAR(bvn_cdf(0, 0, 0.5), 1.0 / 3.0, 1e-13);
  EXPECT_NEAR(bvn_cdf(0, 0, 0.5), oracle::bvn_quad(0, 0, 0.5), 1e-12);
  for (double r : {-0.9, 0.0, 0.7})
    for (double y : {-2.0, 0.3, 1.1}) {
      EXPECT_NEAR(bvn_cdf(kInf, y, r), oracle::Phi(y), 1e-15);
      EXPECT_NEAR(bvn_cdf(y, kInf, r), oracle::Phi(y), 1e-15);
      EXPECT_EQ(bvn_cdf(-kInf, y, r), 0.0);
    }
}

TEST(Normal, BvnAsinAtOrigin) {
  for (double r = -0.999; r <= 0.999; r += 0.0333)
    EXPECT_NEAR(bvn_cdf(0, 0, r), oracle::bvn_asin_origin(r), 1e-13) << r;
  EXPECT_NEAR(bvn_cdf(0, 0, 0.999), oracle::bvn_asin_origin(0.999), 1e-13);
  EXPECT_NEAR(bvn_cdf(0, 0, -0.999), oracle::bvn_asin_origin(-0.999), 1e-13);
}

TEST(Normal, BvnAgainstQuadratureGrid) {
  double worst = 0;
  for (double h : {-3.0, -1.5, -0.5, 0.0, 0.4, 1.5, 2.7})
    for (double k : {-2.5, -1.0, 0.0, 0.5, 1.5, 3.0})
      for (double r : {-0.999, -0.95, -0.6, -0.2, 0.0, 0.3, 0.8, 0.93, 0.999}) {
        double d = std::fabs(bvn_cdf(h, k, r) - oracle::bvn_quad(h, k, r));
        worst = std::max(worst, d);
      }
  EXPECT_LT(worst, 1e-12);
}

TEST(Normal, Reflection) {
  for (double h : {-2.0, -0.3, 0.8})
    for (double k : {-1.0, 0.2, 2.2})
      for (double r : {-0.97, -0.4, 0.1, 0.95})
        EXPECT_NEAR(bvn_cdf(h, k, r) + bvn_cdf(-h, k, -r), oracle::Phi(k), 1e-13);
}

TEST(Normal, PlackettDerivative) {
  double h = 1e-5;
  double d = (bvn_cdf(0, 0, h) - bvn_cdf(0, 0, -h)) / (2 * h);
  EXPECT_NEAR(d, 1.0 / (2 * M_PI), 1e-8);
  EXPECT_NEAR(bvn_pdf(0, 0, 0), 1.0 / (2 * M_PI), 1e-15);
}

TEST(Normal, RectNonNegativeInTails) {
  double p = bvn_rect(6, kInf, 6, kInf, 0.5);
  EXPECT_GE(p, 0.0);
  EXPECT_NEAR(bvn_rect(-kInf, kInf, -kInf, kInf, 0.3), 1.0, 1e-15);
}
