#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "discat/discat.hpp"
#include "oracles.hpp"

using namespace discat;

TEST(Simulate, Discretize) {
  std::vector<double> t = {-1.5, -0.5, 0.5, 1.5};
  EXPECT_EQ(discretize(-2.0, t), 1);
  EXPECT_EQ(discretize(-1.5, t), 1);
  EXPECT_EQ(discretize(-1.4, t), 2);
  EXPECT_EQ(discretize(0.5, t), 3);
  EXPECT_EQ(discretize(0.0, t), 3);
  EXPECT_EQ(discretize(9.0, t), 5);
}

TEST(Simulate, CleanDrawMatchesModel) {
  PolycorDesign d;
  d.n = 200000;
  Rng rng(1, 0);
  auto t = draw_polycor(d, 0.0, rng);
  Vec f = t.frequencies();
  PolychoricModel m(5, 5);
  auto e = evaluate(m, d.theta_star());
  double chi2 = 0;
  for (int z = 0; z < 25; ++z) chi2 += std::pow(t.count(z) - d.n * e.probs[z], 2) / (d.n * e.probs[z]);
  // 24 df, 0.999 quantile is about 51.2
  EXPECT_LT(chi2, 51.2);
}

TEST(Simulate, MixtureExpectation) {
  PolycorDesign d;
  d.n = 200000;
  Rng rng(2, 0);
  auto t = draw_polycor(d, 0.2, rng);
  PolychoricModel m(5, 5);
  auto e = evaluate(m, d.theta_star());
  // contamination cell mass by quadrature of independent normals
  double cut[6] = {-40, -1.5, -0.5, 0.5, 1.5, 40};
  auto mass = [&](double mu, double var, int k) {
    double s = std::sqrt(var);
    return oracle::Phi((cut[k] - mu) / s) - oracle::Phi((cut[k - 1] - mu) / s);
  };
  double chi2 = 0;
  for (int x = 1; x <= 5; ++x)
    for (int y = 1; y <= 5; ++y) {
      int z = (x - 1) * 5 + (y - 1);
      double h = mass(2, 0.2, x) * mass(-2, 0.2, y);
      double p = 0.8 * e.probs[z] + 0.2 * h;
      chi2 += std::pow(t.count(z) - d.n * p, 2) / (d.n * p);
    }
  EXPECT_LT(chi2, 51.2);
}

TEST(Simulate, Determinism) {
  PolycorDesign d;
  Rng a(7, 3, 100), b(7, 3, 100), c(7, 4, 100);
  auto ta = draw_polycor(d, 0.1, a);
  auto tb = draw_polycor(d, 0.1, b);
  auto tc = draw_polycor(d, 0.1, c);
  EXPECT_TRUE(ta == tb);
  EXPECT_FALSE(ta == tc);
}

TEST(Simulate, SemDraw) {
  SemDesign d;
  EXPECT_NEAR(d.true_alpha(), 0.8372, 1e-4);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(d.sigma()(i, i), 1.0, 1e-15);
  Rng rng(5, 0);
  auto rows = draw_sem(d, 0.1, rng);
  int lev = 0;
  for (auto& r : rows) lev += r == d.leverage;
  // organic (1,5,1,5) rows are rare under a positive equicorrelation
  EXPECT_GE(lev, 100);
  EXPECT_LE(lev, 102);
  Rng again(5, 0);
  EXPECT_EQ(draw_sem(d, 0.1, again), rows);
}

TEST(Simulate, SemLatentCorrelation) {
  // latent draws via the same Cholesky path: sample correlation within 3 SE of 0.5625
  SemDesign d;
  Eigen::LLT<Mat> llt(d.sigma());
  Mat L = llt.matrixL();
  Rng rng(6, 0);
  int n = 20000;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    Vec z(4);
    for (int j = 0; j < 4; ++j) z[j] = rng.normal();
    Vec x = L * z;
    sxy += x[0] * x[1];
    sxx += x[0] * x[0];
    syy += x[1] * x[1];
  }
  double r = sxy / std::sqrt(sxx * syy);
  double se = (1 - 0.5625 * 0.5625) / std::sqrt(n);
  EXPECT_NEAR(r, 0.5625, 3 * se);
}

TEST(Simulate, RunIsByteIdentical) {
  PolycorDesign d;
  d.reps = 6;
  d.n = 500;
  d.seed = 11;
  SimConfig cfg;
  auto a = run_polycor(d, cfg);
  cfg.threads = 3;
  auto b = run_polycor(d, cfg);
  std::stringstream sa, sb;
  write_metrics_csv(sa, a.rows);
  write_metrics_csv(sb, b.rows);
  EXPECT_EQ(sa.str(), sb.str());
  std::stringstream ra, rb;
  write_reps_csv(ra, a.reps);
  write_reps_csv(rb, b.reps);
  EXPECT_EQ(ra.str(), rb.str());
}

TEST(Simulate, MetricsInvariants) {
  PolycorDesign d;
  d.reps = 10;
  SimConfig cfg;
  auto res = run_polycor(d, cfg);
  EXPECT_EQ(res.rows.size(), 9u);
  for (auto& r : res.rows) {
    EXPECT_GE(r.coverage, 0.0);
    EXPECT_LE(r.coverage, 1.0);
    EXPECT_GE(r.sd, 0.0);
    EXPECT_NEAR(r.bias, r.mean - 0.5, 1e-12);
  }
  EXPECT_FALSE(res.failed);
}

TEST(Simulate, SemSmoke) {
  SemDesign d;
  d.reps = 4;
  d.eps = {0.2};
  SimConfig cfg;
  auto res = run_sem(d, cfg);
  ASSERT_EQ(res.rows.size(), 3u);
  EXPECT_LT(res.rows[0].rmse_sigma, 0.5 * res.rows[1].rmse_sigma);
  EXPECT_LT(res.rows[0].rmse_alpha, 0.5 * res.rows[2].rmse_alpha);
}

TEST(Simulate, InvalidDesign) {
  PolycorDesign d;
  Rng rng(1, 1);
  EXPECT_THROW(draw_polycor(d, 1.5, rng), Error);
  d.reps = 0;
  EXPECT_THROW(run_polycor(d, SimConfig{}), Error);
}
