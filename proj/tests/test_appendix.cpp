#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "discat/discat.hpp"
#include "oracles.hpp"

using namespace discat;

namespace {
Vec one(double v) { return Vec::Constant(1, v); }

// brute force conditional probability by enumerating D(s)
double rasch_enum(const Vec& th, const std::vector<int>& x) {
  int k = static_cast<int>(x.size()), s = 0;
  for (int v : x) s += v;
  double num = 0, den = 0;
  for (int m = 0; m < (1 << k); ++m) {
    int cnt = 0;
    double e = 0;
    for (int j = 0; j < k; ++j)
      if (m >> j & 1) {
        ++cnt;
        e += th[j];
      }
    if (cnt != s) continue;
    den += std::exp(-e);
  }
  double ex = 0;
  for (int j = 0; j < k; ++j) ex += x[j] * th[j];
  num = std::exp(-ex);
  return num / den;
}
}  // namespace

// ---- model-core contract examples ----

TEST(ModelCore, PoissonUnitPeriod) {
  PoissonModel m({{0, 1}}, 10);
  auto e = evaluate(m, one(1.0));
  EXPECT_NEAR(e.probs[0], std::exp(-1.0), 1e-15);
  EXPECT_NEAR(e.probs.sum(), 1.0, 1e-12);
}

TEST(ModelCore, PoissonScoreAndHessian) {
  PoissonModel m({{0, 1}}, 30);
  auto e = evaluate(m, one(2.0), true);
  EXPECT_NEAR(score_vector(e, 3)[0], 0.5, 1e-12);
  auto lp = [&](double l) { return std::log(poisson_prob({{{0, 1}}, 30, l}, {3})); };
  double h = 1e-5;
  EXPECT_NEAR(score_vector(e, 3)[0], (lp(2 + h) - lp(2 - h)) / (2 * h), 1e-8);
  Mat Q = hessian_log(e, 3);
  EXPECT_NEAR(Q(0, 0), -3.0 / 4.0, 1e-6);
  double h2 = 1e-4;
  EXPECT_NEAR(Q(0, 0), (lp(2 + h2) - 2 * lp(2) + lp(2 - h2)) / (h2 * h2), 1e-5);
}

TEST(ModelCore, RaschSymmetricPair) {
  RaschModel m(2, {1, 1, 1});
  auto e = evaluate(m, one(0.0));
  // score weight pi(1) = 1/3; conditional probability 1/2
  EXPECT_NEAR(e.probs[m.space().index({2, 1})] / (1.0 / 3), 0.5, 1e-15);
  EXPECT_NEAR(e.probs[m.space().index({1, 2})] / (1.0 / 3), 0.5, 1e-15);
}

TEST(ModelCore, PolychoricIndependentCorner) {
  PolychoricModel m(5, 5);
  Vec t(9);
  t << 0, -1.5, -0.5, 0.5, 1.5, -1.5, -0.5, 0.5, 1.5;
  auto e = evaluate(m, t);
  EXPECT_NEAR(e.probs[0], std::pow(oracle::Phi(-1.5), 2), 1e-15);
  EXPECT_NEAR(e.probs[0], 0.004463, 1e-6);
}

TEST(ModelCore, ScoreIdentities) {
  PolychoricModel m(4, 3);
  Vec t(6);
  t << 0.35, -1, 0.1, 0.8, -0.3, 0.9;
  auto e = evaluate(m, t, true);
  Vec acc = Vec::Zero(6);
  Mat fisher_q = Mat::Zero(6, 6);
  for (auto z : e.support) {
    Vec s = score_vector(e, z);
    EXPECT_LT((s * e.probs[z] - e.grads.row(z).transpose()).cwiseAbs().maxCoeff(), 1e-15);
    acc += e.probs[z] * s;
    Mat Q = hessian_log(e, z);
    EXPECT_EQ((Q - Q.transpose()).cwiseAbs().maxCoeff(), 0.0);
    fisher_q -= e.probs[z] * Q;
  }
  EXPECT_LT(acc.cwiseAbs().maxCoeff(), 1e-12);
  Mat J = fisher_information(e);
  EXPECT_LT((fisher_q - J).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ModelCore, HessianAgainstRichardson) {
  // Poisson log pmf second derivative: Richardson-extrapolated difference quotient
  PoissonModel m({{0, 1}, {1, 3}}, 12);
  double lam = 1.3;
  auto e = evaluate(m, one(lam), true);
  for (std::size_t z : {0ul, 5ul, 40ul, 100ul}) {
    auto pz = [&](double l) {
      Vec p;
      Mat g;
      m.probs_grad(one(l), p, g);
      return p[z];
    };
    auto d2 = [&](double h) { return (pz(lam + h) - 2 * pz(lam) + pz(lam - h)) / (h * h); };
    double rich = (4 * d2(1e-3) - d2(2e-3)) / 3;
    EXPECT_LT(oracle::rel_err(e.hessians[z](0, 0), rich, 1e-6), 1e-5) << z;
  }
  PolychoricModel pm(3, 3);
  Vec t(5);
  t << 0.4, -0.6, 0.7, -0.2, 1.0;
  EXPECT_THROW(hessian_log(evaluate(pm, t), 0), Error);
}

TEST(ModelCore, DegenerateProbability) {
  PolychoricModel m(3, 3);
  Vec t(5);
  t << 0.0, -40, -39, -0.5, 0.5;
  try {
    evaluate(m, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateProbability);
  }
}

TEST(ModelCore, AnalyticGradientsMatchFiniteDifferences) {
  std::mt19937 g(17);
  std::uniform_real_distribution<double> u(-1, 1);
  RaschModel rm(5, {0.1, 0.2, 0.3, 0.2, 0.1, 0.1});
  for (int rep = 0; rep < 10; ++rep) {
    Vec th(4);
    for (int i = 0; i < 4; ++i) th[i] = 2 * u(g);
    auto e = evaluate(rm, th);
    for (std::size_t z = 0; z < rm.space().size(); z += 3)
      for (int i = 0; i < 4; ++i) {
        double num = oracle::fd(
            [&](const Vec& v) {
              Vec p;
              Mat gg;
              rm.probs_grad(v, p, gg);
              return p[z];
            },
            th, i);
        EXPECT_LT(std::fabs(num - e.grads(z, i)), 1e-5 * std::max(std::fabs(num), 1e-3));
      }
  }
}

// ---- Rasch ----

TEST(Rasch, Examples) {
  RaschSpec s2{2, Vec::Zero(2)};
  EXPECT_NEAR(rasch_prob(s2, {1, 0}, 1), 0.5, 1e-15);
  EXPECT_NEAR(rasch_prob(s2, {0, 1}, 1), 0.5, 1e-15);
  Vec th(3);
  th << 0, std::log(2.0), std::log(2.0);
  RaschSpec s3{3, th};
  EXPECT_NEAR(rasch_prob(s3, {1, 0, 0}, 1), 0.5, 1e-15);
  EXPECT_NEAR(rasch_prob(s3, {1, 0, 0}, 1), rasch_enum(th, {1, 0, 0}), 1e-15);
  EXPECT_NEAR(rasch_prob(s3, {0, 0, 0}, 0), 1.0, 1e-15);
  EXPECT_NEAR(rasch_prob(s3, {1, 1, 1}, 3), 1.0, 1e-15);
  try {
    rasch_prob(s3, {1, 0, 0}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ScoreMismatch);
  }
}

TEST(Rasch, ClassSumsAndShiftInvariance) {
  std::mt19937 g(4);
  std::normal_distribution<double> n01;
  int k = 6;
  Vec th(k);
  th[0] = 0;
  for (int j = 1; j < k; ++j) th[j] = n01(g);
  std::vector<double> sums(k + 1, 0.0);
  for (int m = 0; m < (1 << k); ++m) {
    std::vector<int> x(k);
    int s = 0;
    for (int j = 0; j < k; ++j) s += x[j] = m >> j & 1;
    double p = rasch_prob({k, th}, x, s);
    sums[s] += p;
    EXPECT_NEAR(p, rasch_enum(th, x), 1e-13);
    Vec sh = th.array() + 2.7;
    EXPECT_NEAR(rasch_prob({k, sh}, x, s), p, 1e-13);
  }
  for (double v : sums) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Rasch, TooManyItems) {
  try {
    RaschModel m(21, std::vector<double>(22, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooManyItems);
  }
}

TEST(Rasch, FitRecoversDifficulties) {
  int k = 4;
  Vec th(3);
  th << 0.5, -0.4, 1.0;
  std::vector<double> pi = {0.1, 0.25, 0.3, 0.25, 0.1};
  RaschModel m(k, pi);
  auto e = evaluate(m, th);
  auto r = fit(m, e.probs, 1000.0, FitConfig{TuningConstant::infinity()});
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.theta - th).cwiseAbs().maxCoeff(), 1e-6);
}

// ---- Poisson ----

TEST(Poisson, Examples) {
  EXPECT_NEAR(poisson_prob({{{0, 1}}, 10, 1.0}, {0}), 0.367879, 1e-6);
  EXPECT_NEAR(poisson_prob({{{0, 1}, {1, 2}}, 10, 1.0}, {0, 0}), 0.135335, 1e-6);
  EXPECT_NEAR(poisson_prob({{{0, 1}}, 10, 1e-12}, {0}), 1.0, 1e-11);
  try {
    poisson_prob({{{0, 1}}, 10, 1.0}, {11});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CountExceedsTruncation);
  }
  EXPECT_THROW(poisson_prob({{{0, 1}, {0.5, 2}}, 10, 1.0}, {0, 0}), Error);
}

TEST(Poisson, TruncationFoldsTail) {
  PoissonModel m({{0, 2}}, 4);
  auto e = evaluate(m, one(1.5));
  EXPECT_NEAR(e.probs.sum(), 1.0, 1e-14);
  double head = 0;
  for (int n = 0; n < 4; ++n) head += std::exp(n * std::log(3.0) - 3.0 - std::lgamma(n + 1.0));
  EXPECT_NEAR(e.probs[4], 1.0 - head, 1e-14);
}

TEST(Poisson, MleMatchesClosedForm) {
  // single period of length 2, counts drawn from a fixed table
  std::vector<std::int64_t> cnt = {5, 12, 20, 18, 10, 6, 2, 1};
  int zmax = static_cast<int>(cnt.size()) - 1 + 10;
  cnt.resize(zmax + 1, 0);
  auto t = ContingencyTable::from_counts({zmax + 1}, cnt);
  PoissonModel m({{0, 2}}, zmax);
  auto r = fit(m, t, FitConfig{TuningConstant::infinity()});
  double events = 0;
  for (int n = 0; n <= zmax; ++n) events += n * cnt[n];
  EXPECT_NEAR(r.theta[0], events / (t.total() * 2.0), 1e-6);
}
