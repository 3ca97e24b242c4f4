// discat command-line front end
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "discat/discat.hpp"

using json = nlohmann::ordered_json;
using namespace discat;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::BadInput, "cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = csv::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> v;
  for (auto& t : split_list(s)) {
    std::size_t pos = 0;
    double x = 0;
    try {
      x = std::stod(t, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != t.size()) throw Error(ErrorKind::BadInput, "bad number '" + t + "'");
    v.push_back(x);
  }
  return v;
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Manifest {
  std::string command;
  json config = json::object();
  json inputs = json::array();
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void digest(const std::string& path) { inputs.push_back({{"path", path}, {"sha256", sha256_file(path)}}); }

  json to_json(int threads) const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["inputs"] = inputs;
    j["seed"] = has_seed ? json(seed) : json(nullptr);
    j["version"] = kVersion;
    j["threads"] = threads;
    j["rng"] = kRngName;
    j["seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return j;
  }
};

// ---------------- shared input handling ----------------

struct InputOpts {
  std::string input, raw, cols, model = "polychoric", c = "1.6", levels, periods;
  int zmax = -1;
  int max_iter = 500;
  double grad_tol = 1e-8;
  int multistart = 1;
};

void add_input_opts(CLI::App* sub, InputOpts& o) {
  sub->add_option("--input", o.input, "long-form table CSV (c1..ck,count)");
  sub->add_option("--raw", o.raw, "raw observation CSV, one row per respondent");
  sub->add_option("--cols", o.cols, "comma-separated columns of --raw to tabulate");
  sub->add_option("--model", o.model, "polychoric | rasch | poisson")
      ->check(CLI::IsMember({"polychoric", "rasch", "poisson"}));
  sub->add_option("--c", o.c, "tuning constant, real >= 1 or inf");
  sub->add_option("--levels", o.levels, "categories per variable (polychoric), default observed max");
  sub->add_option("--periods", o.periods, "poisson periods a:b,a:b (default unit periods)");
  sub->add_option("--zmax", o.zmax, "poisson truncation bound (default max count + 10)");
  sub->add_option("--max-iter", o.max_iter, "optimizer iteration cap");
  sub->add_option("--grad-tol", o.grad_tol, "gradient tolerance");
  sub->add_option("--multistart", o.multistart, "number of starts");
}

void echo(Manifest& m, const CLI::App* sub) {
  for (const auto* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
    auto res = opt->results();
    std::string key = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (res.empty()) {
      auto def = opt->get_default_str();
      m.config[key] = def.empty() ? json(nullptr) : json(def);
    } else {
      m.config[key] = res.size() == 1 ? json(res.front()) : json(res);
    }
  }
}

// Reads the table. Rasch and Poisson inputs hold 0-based responses / counts and
// are shifted to 1-based codes here.
ContingencyTable load_table(const InputOpts& o, Manifest& man, int& k_out, int& zmax_out) {
  const bool shifted = o.model != "polychoric";
  std::vector<std::vector<int>> rows;
  std::vector<std::int64_t> weights;
  std::size_t k = 0;
  if (!o.input.empty() && !o.raw.empty()) throw Error(ErrorKind::BadInput, "use --input or --raw, not both");
  if (!o.input.empty()) {
    man.digest(o.input);
    std::ifstream in(o.input);
    if (!in) throw Error(ErrorKind::BadInput, "cannot open " + o.input);
    auto raw = csv::read_raw(in);
    if (raw.header.size() < 2 || raw.header.back() != "count")
      throw Error(ErrorKind::MissingColumn, "column 'count' not found in " + o.input);
    k = raw.header.size() - 1;
    for (auto& r : raw.rows) {
      std::vector<int> row;
      for (std::size_t j = 0; j < k; ++j) row.push_back(static_cast<int>(r[j]) + (shifted ? 1 : 0));
      rows.push_back(row);
      weights.push_back(r[k]);
    }
  } else if (!o.raw.empty()) {
    man.digest(o.raw);
    std::ifstream in(o.raw);
    if (!in) throw Error(ErrorKind::BadInput, "cannot open " + o.raw);
    auto raw = csv::read_raw(in);
    auto cols = split_list(o.cols);
    if (cols.empty()) cols = raw.header;
    rows = select_columns(raw, cols, shifted ? 1 : 0);
    weights.assign(rows.size(), 1);
    k = cols.size();
  } else {
    throw Error(ErrorKind::BadInput, "need --input or --raw");
  }
  for (auto& r : rows)
    for (int v : r)
      if (v < 1) throw Error(ErrorKind::OutOfRangeCategory, "category codes must be positive");
  std::vector<int> levels;
  if (o.model == "polychoric") {
    if (k != 2) throw Error(ErrorKind::BadInput, "polychoric model needs exactly two columns");
    levels = o.levels.empty() ? observed_levels(rows, k) : std::vector<int>{};
    if (!o.levels.empty())
      for (double v : parse_doubles(o.levels)) levels.push_back(static_cast<int>(v));
  } else if (o.model == "rasch") {
    levels.assign(k, 2);
  } else {
    int mx = 0;
    for (auto& r : rows)
      for (int v : r) mx = std::max(mx, v - 1);
    zmax_out = o.zmax >= 0 ? o.zmax : PoissonModel::default_zmax(mx);
    if (mx > zmax_out) throw Error(ErrorKind::CountExceedsTruncation, "count above --zmax");
    levels.assign(k, zmax_out + 1);
  }
  ContingencyTable t(levels);
  for (std::size_t i = 0; i < rows.size(); ++i) t.add(rows[i], weights[i]);
  if (t.total() == 0) throw Error(ErrorKind::EmptyTable, "table has N = 0");
  k_out = static_cast<int>(k);
  return t;
}

std::vector<std::pair<double, double>> parse_periods(const std::string& s, int k) {
  std::vector<std::pair<double, double>> out;
  if (s.empty()) {
    for (int j = 0; j < k; ++j) out.emplace_back(j, j + 1);
    return out;
  }
  for (auto& item : split_list(s)) {
    auto colon = item.find(':');
    if (colon == std::string::npos) throw Error(ErrorKind::BadInput, "period must be a:b");
    auto ab = parse_doubles(item.substr(0, colon) + "," + item.substr(colon + 1));
    out.emplace_back(ab[0], ab[1]);
  }
  if (static_cast<int>(out.size()) != k) throw Error(ErrorKind::BadInput, "one period per column required");
  return out;
}

std::vector<std::string> param_names(const std::string& model, int k, std::size_t d) {
  std::vector<std::string> n;
  if (model == "polychoric") {
    n.push_back("rho");
    std::size_t na = static_cast<std::size_t>(k);  // k holds jx here
    for (std::size_t i = 1; i < na; ++i) n.push_back("a" + std::to_string(i));
    for (std::size_t i = 1; n.size() < d; ++i) n.push_back("b" + std::to_string(i));
  } else if (model == "rasch") {
    for (std::size_t i = 0; i < d; ++i) n.push_back("theta" + std::to_string(i + 2));
  } else {
    n.push_back("lambda");
  }
  return n;
}

json outcome_json(const Outcome& z, bool shifted) {
  json a = json::array();
  for (int v : z) a.push_back(shifted ? v - 1 : v);
  return a;
}

struct FitOutput {
  json body;
  bool converged = false;
};

template <CategoricalModel M>
FitOutput fit_json(const M& model, const ContingencyTable& t, const InputOpts& o, int name_k,
                   bool with_cells_test, double alpha, Adjust adj, CellVariance var) {
  FitConfig cfg;
  cfg.c = parse_tuning(o.c);
  cfg.max_iter = o.max_iter;
  cfg.grad_tol = o.grad_tol;
  cfg.multistart = o.multistart;
  Vec f = t.frequencies();
  auto fr = fit(model, f, static_cast<double>(t.total()), cfg);
  const bool shifted = o.model != "polychoric";
  auto names = param_names(o.model, name_k, model.dim());

  json j;
  j["model"] = o.model;
  j["c"] = cfg.c.is_mle() ? json("inf") : json(cfg.c.c);
  j["n"] = t.total();
  json th = json::object();
  for (std::size_t i = 0; i < model.dim(); ++i) th[names[i]] = fr.theta[i];
  j["theta"] = th;
  j["loss"] = fr.loss;
  j["convergence"] = {{"converged", fr.converged},
                      {"iterations", fr.iterations},
                      {"gradient_norm", fr.grad_norm},
                      {"status", fr.status}};
  json warnings = json::array();
  for (auto& w : fr.warnings) warnings.push_back(w);

  std::optional<CovarianceReport> cov;
  try {
    cov = plugin_covariance(model, fr, f);
  } catch (const Error& e) {
    warnings.push_back(std::string("covariance unavailable: ") + e.what());
  }
  if (cov) {
    json se = json::object();
    for (std::size_t i = 0; i < model.dim(); ++i) se[names[i]] = cov->se[i];
    j["se"] = se;
    j["covariance"] = mat_json(cov->Sigma / cov->n_obs);
    j["covariance_condition"] = cov->condition;
  } else {
    j["se"] = nullptr;
    j["covariance"] = nullptr;
    j["covariance_condition"] = nullptr;
  }
  json cells = json::array();
  json down = json::array();
  for (auto z : model.support()) {
    auto oc = model.space().outcome(z);
    bool dw = fr.residuals[z] > cfg.c.c;
    cells.push_back({{"cell", outcome_json(oc, shifted)},
                     {"count", t.count(z)},
                     {"fhat", f[z]},
                     {"p", fr.probs[z]},
                     {"residual", num_or_null(fr.residuals[z])},
                     {"downweighted", dw}});
    if (dw) down.push_back(outcome_json(oc, shifted));
  }
  j["cells"] = cells;
  j["downweighted"] = down;

  if (with_cells_test) {
    if (!cov) throw Error(ErrorKind::SingularM, "cell test needs the covariance");
    auto rep = cell_test(model, fr.theta, f, *cov, alpha, adj, var);
    json rows = json::array();
    for (auto& r : rep.rows) {
      rows.push_back({{"cell", outcome_json(r.outcome, shifted)},
                      {"fhat", r.fhat},
                      {"p", r.p},
                      {"residual", r.residual},
                      {"tested", r.tested},
                      {"statistic", r.tested ? json(r.statistic) : json(nullptr)},
                      {"variance", r.tested ? json(r.variance) : json(nullptr)},
                      {"p_raw", r.tested ? json(r.p_raw) : json(nullptr)},
                      {"p_adj", r.tested ? json(r.p_adj) : json(nullptr)},
                      {"reject", r.reject},
                      {"note", r.note}});
    }
    j["alpha"] = alpha;
    j["adjust"] = adj == Adjust::BH ? "bh" : "none";
    j["variance"] = var == CellVariance::Model ? "model" : "difference";
    j["m"] = rep.m;
    j["tests"] = rows;
  }
  j["warnings"] = warnings;
  for (auto& w : warnings) std::cerr << "warning: " << w.get<std::string>() << "\n";
  return {j, fr.converged};
}

FitOutput dispatch_fit(const InputOpts& o, Manifest& man, bool cells, double alpha, Adjust adj,
                       CellVariance var = CellVariance::Model) {
  int k = 0, zmax = 0;
  auto t = load_table(o, man, k, zmax);
  if (o.model == "polychoric") {
    PolychoricModel m(t.levels()[0], t.levels()[1]);
    return fit_json(m, t, o, t.levels()[0], cells, alpha, adj, var);
  }
  if (o.model == "rasch") {
    auto m = RaschModel::from_table(t);
    return fit_json(m, t, o, k, cells, alpha, adj, var);
  }
  PoissonModel m(parse_periods(o.periods, k), zmax);
  return fit_json(m, t, o, k, cells, alpha, adj, var);
}

// ---------------- multivariate ----------------

struct MvOpts {
  std::string raw, cols, estimator = "robust", c = "1.6", reverse, from_matrix, matrix_out;
  int factors = 1;
  int threads = 0;
};

std::vector<std::string> read_header(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  return split_list(line);
}

Mat read_matrix_csv(const std::string& path, std::vector<std::string>& names) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::BadInput, "cannot open " + path);
  std::string line;
  std::vector<std::vector<double>> vals;
  bool first = true;
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    auto f = split_list(line);
    if (first) {
      first = false;
      bool numeric = true;
      try {
        parse_doubles(line);
      } catch (const Error&) {
        numeric = false;
      }
      if (!numeric) {
        names = f;
        continue;
      }
    }
    vals.push_back(parse_doubles(line));
  }
  const auto q = static_cast<Eigen::Index>(vals.size());
  Mat R(q, q);
  for (Eigen::Index i = 0; i < q; ++i) {
    if (static_cast<Eigen::Index>(vals[i].size()) != q) throw Error(ErrorKind::RaggedRow, "matrix must be square");
    for (Eigen::Index j = 0; j < q; ++j) R(i, j) = vals[i][j];
  }
  if (names.empty())
    for (Eigen::Index i = 0; i < q; ++i) names.push_back("V" + std::to_string(i + 1));
  return R;
}

void write_matrix_csv(const std::string& path, const Mat& R, const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::BadInput, "cannot write " + path);
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << "\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    for (Eigen::Index j = 0; j < R.cols(); ++j) out << (j ? "," : "") << R(i, j);
    out << "\n";
  }
}

struct MvResult {
  json body;
  bool hard_fail = false;
};

MvResult run_mv(const MvOpts& o, Manifest& man, bool with_cfa, int threads) {
  Mat R;
  std::vector<std::string> names;
  json j;
  bool hard_fail = false;
  if (!o.from_matrix.empty()) {
    if (!with_cfa) throw Error(ErrorKind::BadInput, "--from-matrix is only valid for cfa");
    man.digest(o.from_matrix);
    R = read_matrix_csv(o.from_matrix, names);
    if (R.rows() < 2) throw Error(ErrorKind::BadInput, "need at least two items");
    auto rev = split_list(o.reverse);
    for (auto& r : rev) {
      auto it = std::find(names.begin(), names.end(), r);
      if (it == names.end()) throw Error(ErrorKind::MissingColumn, "column '" + r + "' not found");
      auto idx = it - names.begin();
      R.row(idx) *= -1.0;
      R.col(idx) *= -1.0;
    }
    j["source"] = "matrix";
  } else {
    if (o.raw.empty()) throw Error(ErrorKind::BadInput, "need --raw or --from-matrix");
    man.digest(o.raw);
    std::ifstream in(o.raw);
    if (!in) throw Error(ErrorKind::BadInput, "cannot open " + o.raw);
    auto raw = csv::read_raw(in);
    names = split_list(o.cols);
    if (names.empty()) names = raw.header;
    if (names.size() < 2) throw Error(ErrorKind::BadInput, "need at least two items");
    auto rows = select_columns(raw, names);
    for (auto& r : split_list(o.reverse)) {
      auto it = std::find(names.begin(), names.end(), r);
      if (it == names.end()) throw Error(ErrorKind::MissingColumn, "column '" + r + "' not found");
      auto idx = static_cast<std::size_t>(it - names.begin());
      int mx = 0;
      for (auto& row : rows) mx = std::max(mx, row[idx]);
      for (auto& row : rows) row[idx] = mx + 1 - row[idx];
    }
    auto method = parse_method(o.estimator);
    auto pm = poly_matrix(rows, method, parse_tuning(o.c), threads);
    R = pm.R;
    json pairs = json::array();
    for (auto& p : pm.pairs) {
      pairs.push_back({{"items", {names[p.i], names[p.j]}},
                       {"converged", p.converged},
                       {"fallback", p.fallback},
                       {"message", p.message}});
      if (p.fallback) {
        hard_fail = true;
        std::cerr << "warning: pair " << names[p.i] << "," << names[p.j] << ": " << p.message << "\n";
      }
    }
    j["source"] = "raw";
    j["estimator"] = o.estimator;
    j["n"] = rows.size();
    j["pairs"] = pairs;
    j["psd_corrected"] = pm.psd_corrected;
    j["min_eigenvalue_before"] = pm.min_eigen_before;
  }
  j["items"] = names;
  j["matrix"] = mat_json(R);
  if (!o.matrix_out.empty()) write_matrix_csv(o.matrix_out, R, names);
  j["cronbach_alpha"] = cronbach_alpha(R);
  if (with_cfa) {
    Mat Rf = R;
    Eigen::SelfAdjointEigenSolver<Mat> es(Rf);
    if (es.eigenvalues().minCoeff() <= 0) Rf = nearest_psd(Rf);
    auto ff = factor_fit(Rf, o.factors);
    j["factors"] = o.factors;
    j["loadings"] = vec_json(ff.loadings);
    j["uniquenesses"] = vec_json(ff.uniquenesses);
    j["proportion_variance"] = ff.proportion_variance;
    j["factor_converged"] = ff.converged;
    j["informative"] = ff.informative;
    json hw = json::array();
    for (int h : ff.heywood) hw.push_back(names[h]);
    j["heywood"] = hw;
    if (!ff.heywood.empty()) std::cerr << "warning: Heywood case, uniqueness clamped\n";
  }
  return {j, hard_fail};
}

// ---------------- config file ----------------

// key=value lines become --key value, inserted after the subcommand unless the flag was given
std::vector<std::string> apply_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + i);
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::BadInput, "cannot open config " + path);
  std::string line;
  std::vector<std::string> extra;
  while (std::getline(in, line)) {
    line = csv::trim(line);
    if (line.empty() || line[0] == '#' || line[0] == '[') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::BadInput, "config line without '=': " + line);
    std::string key = csv::trim(line.substr(0, eq)), val = csv::trim(line.substr(eq + 1));
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"') val = val.substr(1, val.size() - 2);
    std::string flag = "--" + key;
    bool given = false;
    for (auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
    if (given) continue;
    extra.push_back(flag);
    extra.push_back(val);
  }
  std::size_t pos = args.size() > 1 ? 2 : args.size();
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(pos), extra.begin(), extra.end());
  return args;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args;
  try {
    args = apply_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App app{"Robust minimum-disparity estimation for categorical data"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  int threads_flag = 0;
  app.add_option("--threads", threads_flag, "worker threads (DISCAT_THREADS overrides)");

  InputOpts fo;
  auto* fit_cmd = app.add_subcommand("fit", "fit a model to a table");
  add_input_opts(fit_cmd, fo);

  InputOpts co;
  double alpha = 0.001;
  std::string adjust = "bh", format = "json", variance = "model";
  auto* ct_cmd = app.add_subcommand("celltest", "cellwise misfit test");
  add_input_opts(ct_cmd, co);
  ct_cmd->add_option("--alpha", alpha, "level for rejections");
  ct_cmd->add_option("--adjust", adjust, "bh | none")->check(CLI::IsMember({"bh", "none"}));
  ct_cmd->add_option("--format", format, "json | csv")->check(CLI::IsMember({"json", "csv"}));
  ct_cmd->add_option("--variance", variance, "model: g'Sigma g; difference: also the sampling variance of fhat")
      ->check(CLI::IsMember({"model", "difference"}));

  MvOpts po, cfo;
  auto add_mv = [](CLI::App* sub, MvOpts& o) {
    sub->add_option("--raw", o.raw, "raw item CSV");
    sub->add_option("--cols", o.cols, "item columns (default all)");
    sub->add_option("--estimator", o.estimator, "robust | mle | pearson")
        ->check(CLI::IsMember({"robust", "mle", "pearson"}));
    sub->add_option("--c", o.c, "tuning constant for the robust estimator");
    sub->add_option("--reverse", o.reverse, "columns to reverse-code");
    sub->add_option("--matrix-out", o.matrix_out, "write the correlation matrix as CSV");
    sub->add_option("--threads", o.threads, "worker threads");
  };
  auto* pm_cmd = app.add_subcommand("polymat", "pairwise correlation matrix");
  add_mv(pm_cmd, po);
  auto* cfa_cmd = app.add_subcommand("cfa", "one-factor analysis of a correlation matrix");
  add_mv(cfa_cmd, cfo);
  cfa_cmd->add_option("--factors", cfo.factors, "number of factors (1)");
  cfa_cmd->add_option("--from-matrix", cfo.from_matrix, "correlation matrix CSV instead of raw data");

  std::string design = "polycor", eps_s = "0,0.1,0.2", sc = "1.6", out_dir, estimators = "robust,mle,pearson";
  int reps = 1000, n = 1000, sim_threads = 0;
  std::uint64_t seed = 1;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo designs");
  sim_cmd->add_option("--design", design, "polycor | sem")->check(CLI::IsMember({"polycor", "sem"}));
  sim_cmd->add_option("--eps", eps_s, "contamination fractions");
  sim_cmd->add_option("--reps", reps, "replications");
  sim_cmd->add_option("--n", n, "sample size");
  sim_cmd->add_option("--seed", seed, "seed");
  sim_cmd->add_option("--c", sc, "tuning constant for the robust estimator");
  sim_cmd->add_option("--estimators", estimators, "subset of robust,mle,pearson");
  sim_cmd->add_option("--out-dir", out_dir, "directory for reps.csv and manifest.json");
  sim_cmd->add_option("--threads", sim_threads, "worker threads");

  std::vector<const char*> cargv;
  for (auto& a : args) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  Manifest man;
  try {
    if (*fit_cmd || *ct_cmd) {
      bool cells = static_cast<bool>(*ct_cmd);
      auto& o = cells ? co : fo;
      auto* sub = cells ? ct_cmd : fit_cmd;
      man.command = sub->get_name();
      echo(man, sub);
      auto out = dispatch_fit(o, man, cells, alpha, adjust == "bh" ? Adjust::BH : Adjust::None,
                              variance == "model" ? CellVariance::Model : CellVariance::Difference);
      if (cells && format == "csv") {
        std::cout << "cell,fhat,p,residual,tested,statistic,p_raw,p_adj,reject\n" << std::setprecision(17);
        for (auto& r : out.body["tests"]) {
          std::string cell;
          for (auto& v : r["cell"]) cell += (cell.empty() ? "" : " ") + std::to_string(v.get<int>());
          auto val = [](const json& v) { return v.is_null() ? std::string("NA") : v.dump(); };
          std::cout << cell << ',' << r["fhat"].get<double>() << ',' << r["p"].get<double>() << ','
                    << r["residual"].get<double>() << ',' << (r["tested"].get<bool>() ? 1 : 0) << ','
                    << val(r["statistic"]) << ',' << val(r["p_raw"]) << ',' << val(r["p_adj"]) << ','
                    << (r["reject"].get<bool>() ? 1 : 0) << "\n";
        }
        std::cerr << man.to_json(1).dump() << "\n";
      } else {
        out.body["manifest"] = man.to_json(1);
        print_json(out.body);
      }
      if (!out.converged) {
        std::cerr << "error: NonConvergence: optimizer did not reach the gradient tolerance\n";
        return 2;
      }
      return 0;
    }
    if (*pm_cmd || *cfa_cmd) {
      bool cfa = static_cast<bool>(*cfa_cmd);
      auto& o = cfa ? cfo : po;
      auto* sub = cfa ? cfa_cmd : pm_cmd;
      man.command = sub->get_name();
      echo(man, sub);
      int th = resolve_threads(o.threads > 0 ? o.threads : threads_flag);
      auto res = run_mv(o, man, cfa, th);
      res.body["manifest"] = man.to_json(th);
      print_json(res.body);
      return res.hard_fail ? 2 : 0;
    }
    if (*sim_cmd) {
      man.command = "simulate";
      echo(man, sim_cmd);
      man.seed = seed;
      man.has_seed = true;
      int th = resolve_threads(sim_threads > 0 ? sim_threads : threads_flag);
      SimConfig cfg;
      cfg.c = parse_tuning(sc);
      cfg.threads = th;
      cfg.estimators.clear();
      for (auto& e : split_list(estimators)) {
        if (e == "robust") cfg.estimators.push_back(Estimator::Robust);
        else if (e == "mle") cfg.estimators.push_back(Estimator::MLE);
        else if (e == "pearson") cfg.estimators.push_back(Estimator::Pearson);
        else throw Error(ErrorKind::BadInput, "unknown estimator '" + e + "'");
      }
      auto eps = parse_doubles(eps_s);
      RunResult rr;
      if (design == "polycor") {
        PolycorDesign d;
        d.eps = eps;
        d.reps = reps;
        d.n = n;
        d.seed = seed;
        rr = run_polycor(d, cfg);
      } else {
        SemDesign d;
        d.eps = eps;
        d.reps = reps;
        d.n = n;
        d.seed = seed;
        rr = run_sem(d, cfg);
      }
      write_metrics_csv(std::cout, rr.rows);
      json mj = man.to_json(th);
      mj["pearson_ci"] = "Fisher z interval, tanh(atanh(r) -+ q/sqrt(N-3))";
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream mo(out_dir + "/metrics.csv");
        write_metrics_csv(mo, rr.rows);
        std::ofstream ro(out_dir + "/reps.csv");
        write_reps_csv(ro, rr.reps);
        std::ofstream jo(out_dir + "/manifest.json");
        jo << mj.dump(2) << "\n";
      } else {
        std::cerr << mj.dump() << "\n";
      }
      if (rr.failed) {
        std::cerr << "error: more than 2% of replications failed\n";
        return 2;
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
