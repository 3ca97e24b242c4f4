#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "discat/discat.hpp"
#include "oracles.hpp"

using namespace discat;

TEST(Tables, FromRawCounts) {
  auto t = from_raw({{1, 1}, {1, 1}, {2, 1}}, {2, 2});
  EXPECT_EQ(t.total(), 3);
  EXPECT_EQ(t.count(Outcome{1, 1}), 2);
  EXPECT_EQ(t.count(Outcome{2, 1}), 1);
  EXPECT_EQ(t.count(Outcome{1, 2}), 0);
  EXPECT_EQ(t.populated(), 2u);
}

TEST(Tables, EmptyRowsGiveZeroTotal) {
  auto t = from_raw({}, {5, 5});
  EXPECT_EQ(t.total(), 0);
  EXPECT_EQ(t.size(), 25u);
  try {
    frequency(t, {1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyTable);
  }
  PolychoricModel m(5, 5);
  EXPECT_THROW(fit(m, t), Error);
}

TEST(Tables, Errors) {
  try {
    from_raw({{1, 3}}, {2, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfRangeCategory);
  }
  try {
    from_raw({{1, 1, 1}}, {2, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RaggedRow);
  }
  try {
    from_raw({{0, 1}}, {2, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfRangeCategory);
  }
}

TEST(Tables, Frequency) {
  auto t = from_raw({{1, 1}, {1, 1}, {2, 1}, {1, 2}}, {2, 2});
  EXPECT_DOUBLE_EQ(frequency(t, {1, 1}), 0.5);
  EXPECT_DOUBLE_EQ(frequency(t, {2, 2}), 0.0);
}

TEST(Tables, A3RowsCellFourTwo) {
  // 725 respondents expanded from the dense counts
  std::vector<std::int64_t> c = {14, 5, 2, 20, 16, 5, 29, 36, 100, 10, 4, 34, 104,
                                 22, 2, 39, 137, 21, 14, 5, 78, 13, 4, 6, 5};
  std::vector<std::vector<int>> rows;
  for (int x = 1; x <= 5; ++x)
    for (int y = 1; y <= 5; ++y)
      for (int i = 0; i < c[(x - 1) * 5 + (y - 1)]; ++i) rows.push_back({x, y});
  ASSERT_EQ(rows.size(), 725u);
  auto t = from_raw(rows, {5, 5});
  EXPECT_NEAR(frequency(t, {4, 2}), 0.189, 5e-4);
}

TEST(Tables, ClearCellThreeThreeFrequency) {
  PolycorDesign d;
  d.n = 1000;
  Rng rng(11, 0, 0);
  auto t = draw_polycor(d, 0.0, rng);
  // independent oracle: rectangle probability by quadrature differences
  double r = 0.5;
  auto F = [&](double h, double k) { return oracle::bvn_quad(h, k, r); };
  double p33 = F(0.5, 0.5) - F(-0.5, 0.5) - F(0.5, -0.5) + F(-0.5, -0.5);
  EXPECT_NEAR(p33, 0.16508526069133, 1e-10);
  double se = std::sqrt(p33 * (1 - p33) / 1000);
  EXPECT_NEAR(frequency(t, {3, 3}), p33, 3 * se);
}

TEST(Tables, FrequenciesSumToOne) {
  std::mt19937 g(3);
  std::uniform_int_distribution<int> u(1, 4);
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 997; ++i) rows.push_back({u(g), u(g), u(g)});
  auto t = from_raw(rows, {4, 4, 4});
  std::int64_t s = 0;
  for (auto v : t.counts()) s += v;
  EXPECT_EQ(s, t.total());
  EXPECT_NEAR(t.frequencies().sum(), 1.0, 1e-14);
}

TEST(Tables, PermutationInvariant) {
  std::mt19937 g(5);
  std::uniform_int_distribution<int> u(1, 3);
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 200; ++i) rows.push_back({u(g), u(g)});
  auto a = from_raw(rows, {3, 3});
  std::shuffle(rows.begin(), rows.end(), g);
  auto b = from_raw(rows, {3, 3});
  EXPECT_TRUE(a == b);
}

TEST(Tables, LongCsvRoundTrip) {
  auto t = from_raw({{1, 2, 1}, {2, 2, 3}, {2, 2, 3}}, {2, 2, 3});
  std::stringstream ss;
  write_long_csv(ss, t);
  auto back = read_long_csv(ss, {2, 2, 3});
  EXPECT_TRUE(back == t);
}

TEST(Tables, CsvErrors) {
  std::stringstream missing("a,b\n1,2\n");
  try {
    read_long_csv(missing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingColumn);
  }
  std::stringstream empty_field("x,y\n1,\n");
  EXPECT_THROW(csv::read_raw(empty_field), Error);
  std::stringstream raw("x,y\n1,2\n");
  auto r = csv::read_raw(raw);
  try {
    select_columns(r, {"x", "zz"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingColumn);
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

TEST(Tables, OutcomeIndexRoundTrip) {
  SampleSpace s({3, 4, 2});
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s.index(s.outcome(i)), i);
  EXPECT_EQ(s.index({1, 1, 2}), 1u);
}
