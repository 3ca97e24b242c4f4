#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "discat/error.hpp"

namespace discat {

// 1-based category codes, one per variable
using Outcome = std::vector<int>;

// Dense cartesian sample space. First variable varies slowest.
class SampleSpace {
 public:
  SampleSpace() = default;
  explicit SampleSpace(std::vector<int> levels) : levels_(std::move(levels)) {
    size_ = 1;
    for (int j : levels_) {
      if (j < 1) throw Error(ErrorKind::BadInput, "level count must be >= 1");
      size_ *= static_cast<std::size_t>(j);
    }
  }

  std::size_t arity() const { return levels_.size(); }
  std::size_t size() const { return size_; }
  const std::vector<int>& levels() const { return levels_; }

  void check(const Outcome& z) const {
    if (z.size() != levels_.size())
      throw Error(ErrorKind::RaggedRow, "outcome has length " + std::to_string(z.size()) +
                                            ", expected " + std::to_string(levels_.size()));
    for (std::size_t j = 0; j < z.size(); ++j)
      if (z[j] < 1 || z[j] > levels_[j])
        throw Error(ErrorKind::OutOfRangeCategory,
                    "value " + std::to_string(z[j]) + " in column " + std::to_string(j + 1) +
                        " outside 1.." + std::to_string(levels_[j]));
  }

  std::size_t index(const Outcome& z) const {
    check(z);
    std::size_t idx = 0;
    for (std::size_t j = 0; j < z.size(); ++j) idx = idx * levels_[j] + (z[j] - 1);
    return idx;
  }

  Outcome outcome(std::size_t idx) const {
    Outcome z(levels_.size());
    for (std::size_t j = levels_.size(); j-- > 0;) {
      z[j] = static_cast<int>(idx % levels_[j]) + 1;
      idx /= levels_[j];
    }
    return z;
  }

 private:
  std::vector<int> levels_;
  std::size_t size_ = 0;
};

class ContingencyTable {
 public:
  ContingencyTable() = default;
  explicit ContingencyTable(std::vector<int> levels)
      : space_(std::move(levels)), counts_(space_.size(), 0) {}

  static ContingencyTable from_raw(const std::vector<std::vector<int>>& rows,
                                   const std::vector<int>& levels) {
    ContingencyTable t(levels);
    for (const auto& r : rows) t.add(r, 1);
    return t;
  }

  static ContingencyTable from_counts(const std::vector<int>& levels,
                                      const std::vector<std::int64_t>& dense) {
    ContingencyTable t(levels);
    if (dense.size() != t.space_.size())
      throw Error(ErrorKind::BadInput, "dense count vector has wrong size");
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (dense[i] < 0) throw Error(ErrorKind::BadInput, "negative count");
      t.counts_[i] = dense[i];
      t.total_ += dense[i];
    }
    return t;
  }

  void add(const Outcome& z, std::int64_t n) {
    if (n < 0) throw Error(ErrorKind::BadInput, "negative count");
    counts_[space_.index(z)] += n;
    total_ += n;
  }

  const SampleSpace& space() const { return space_; }
  const std::vector<int>& levels() const { return space_.levels(); }
  std::size_t arity() const { return space_.arity(); }
  std::size_t size() const { return space_.size(); }
  std::int64_t total() const { return total_; }
  std::int64_t count(std::size_t idx) const { return counts_.at(idx); }
  std::int64_t count(const Outcome& z) const { return counts_[space_.index(z)]; }
  const std::vector<std::int64_t>& counts() const { return counts_; }

  double frequency(const Outcome& z) const {
    if (total_ == 0) throw Error(ErrorKind::EmptyTable, "table has N = 0");
    return static_cast<double>(count(z)) / static_cast<double>(total_);
  }

  Eigen::VectorXd frequencies() const {
    if (total_ == 0) throw Error(ErrorKind::EmptyTable, "table has N = 0");
    Eigen::VectorXd f(counts_.size());
    for (std::size_t i = 0; i < counts_.size(); ++i)
      f[i] = static_cast<double>(counts_[i]) / static_cast<double>(total_);
    return f;
  }

  // marginal counts of variable j (0-based), indexed by category - 1
  std::vector<std::int64_t> margin(std::size_t j) const {
    std::vector<std::int64_t> m(levels()[j], 0);
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      if (counts_[i] == 0) continue;
      m[space_.outcome(i)[j] - 1] += counts_[i];
    }
    return m;
  }

  std::size_t populated() const {
    std::size_t n = 0;
    for (auto c : counts_) n += (c > 0);
    return n;
  }

  bool operator==(const ContingencyTable& o) const {
    return levels() == o.levels() && counts_ == o.counts_;
  }

 private:
  SampleSpace space_;
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

inline double frequency(const ContingencyTable& t, const Outcome& z) { return t.frequency(z); }

inline ContingencyTable from_raw(const std::vector<std::vector<int>>& rows,
                                 const std::vector<int>& levels) {
  return ContingencyTable::from_raw(rows, levels);
}

// ---- CSV ----

namespace csv {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline long long to_int(const std::string& s, std::size_t line_no) {
  if (s.empty())
    throw Error(ErrorKind::BadInput, "empty field on line " + std::to_string(line_no));
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size())
    throw Error(ErrorKind::BadInput,
                "non-integer field '" + s + "' on line " + std::to_string(line_no));
  return v;
}

struct Raw {
  std::vector<std::string> header;
  std::vector<std::vector<long long>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error(ErrorKind::MissingColumn, "column '" + name + "' not found");
  }
};

inline Raw read_raw(std::istream& in) {
  Raw r;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    r.header = split(line);
    break;
  }
  if (r.header.empty()) throw Error(ErrorKind::BadInput, "missing header row");
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = split(line);
    if (f.size() != r.header.size())
      throw Error(ErrorKind::RaggedRow, "line " + std::to_string(line_no) + " has " +
                                            std::to_string(f.size()) + " fields, expected " +
                                            std::to_string(r.header.size()));
    std::vector<long long> row;
    row.reserve(f.size());
    for (auto& s : f) row.push_back(to_int(s, line_no));
    r.rows.push_back(std::move(row));
  }
  return r;
}

}  // namespace csv

// Long form: c1..ck,count. Levels default to the max code seen per column.
inline ContingencyTable read_long_csv(std::istream& in, std::vector<int> levels = {}) {
  auto raw = csv::read_raw(in);
  if (raw.header.size() < 2 || raw.header.back() != "count")
    throw Error(ErrorKind::MissingColumn, "long-form table needs a trailing 'count' column");
  std::size_t k = raw.header.size() - 1;
  if (levels.empty()) {
    levels.assign(k, 1);
    for (auto& r : raw.rows)
      for (std::size_t j = 0; j < k; ++j)
        if (r[j] > levels[j]) levels[j] = static_cast<int>(r[j]);
  }
  if (levels.size() != k) throw Error(ErrorKind::RaggedRow, "levels do not match arity");
  ContingencyTable t(levels);
  for (auto& r : raw.rows) {
    Outcome z(r.begin(), r.begin() + k);
    t.add(z, r[k]);
  }
  return t;
}

inline ContingencyTable read_long_csv(const std::string& path, std::vector<int> levels = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::BadInput, "cannot open " + path);
  return read_long_csv(in, std::move(levels));
}

inline void write_long_csv(std::ostream& out, const ContingencyTable& t) {
  for (std::size_t j = 0; j < t.arity(); ++j) out << 'c' << (j + 1) << ',';
  out << "count\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto z = t.space().outcome(i);
    for (int v : z) out << v << ',';
    out << t.count(i) << '\n';
  }
}

// Raw observations for named columns; shift is added to every code (use 1 for 0-based data).
inline std::vector<std::vector<int>> select_columns(const csv::Raw& raw,
                                                    const std::vector<std::string>& cols,
                                                    int shift = 0) {
  std::vector<std::size_t> idx;
  for (auto& c : cols) idx.push_back(raw.column(c));
  std::vector<std::vector<int>> out;
  out.reserve(raw.rows.size());
  for (auto& r : raw.rows) {
    std::vector<int> row;
    for (auto i : idx) row.push_back(static_cast<int>(r[i]) + shift);
    out.push_back(std::move(row));
  }
  return out;
}

inline std::vector<int> observed_levels(const std::vector<std::vector<int>>& rows, std::size_t k) {
  std::vector<int> lv(k, 1);
  for (auto& r : rows) {
    if (r.size() != k) throw Error(ErrorKind::RaggedRow, "row of wrong length");
    for (std::size_t j = 0; j < k; ++j)
      if (r[j] > lv[j]) lv[j] = r[j];
  }
  return lv;
}

}  // namespace discat
