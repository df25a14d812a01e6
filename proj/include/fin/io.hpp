#pragma once

// Run configuration, CSV ingestion and result files for the command line.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fin/diagnostics.hpp"
#include "fin/sampler.hpp"
#include "fin/simulation.hpp"
#include "fin/transform.hpp"

namespace fin {

using Json = nlohmann::ordered_json;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  Index column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return static_cast<Index>(c);
    return -1;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(trim(cell));
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error(ErrorKind::data, path + ": line " + std::to_string(line_no) + " has " +
                                       std::to_string(cells.size()) + " cells, header has " +
                                       std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw Error(ErrorKind::data, path + ": empty file");
  return t;
}

/// Parses a numeric cell; anything else is a data error naming its place.
inline double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != cell.size() || !std::isfinite(v))
    throw Error(ErrorKind::data, "row " + std::to_string(row + 1) + ", column '" + column +
                                     "': cannot parse '" + cell + "' as a number");
  return v;
}

struct RunConfig {
  std::string data;
  std::string covariate_file;  ///< optional; rows align with data
  std::string lod_file;        ///< optional; two columns: column,lod
  std::string output = "fin_out";
  std::string response;
  std::vector<std::string> exposures;  ///< empty: every column except response and covariates
  std::vector<std::string> covariates;
  std::vector<std::string> log10_columns;
  bool standardize = true;
  std::optional<int> k;  ///< empty: rule of thumb
  double k_threshold = 0.9;
  int n_chains = 1;
  double level = 0.95;
  int higher_order = 2;
  Hyperparams hyper;

  void validate() const {
    const auto fail = [](const std::string& m) { throw Error(ErrorKind::config, m); };
    if (data.empty()) fail("config: data path is required");
    if (response.empty()) fail("config: response column is required");
    if (n_chains < 1) fail("config: n_chains must be at least 1");
    if (!(level > 0.0 && level < 1.0)) fail("config: level must lie in (0, 1)");
    if (!(k_threshold > 0.0 && k_threshold < 1.0)) fail("config: k_threshold must lie in (0, 1)");
    if (higher_order != 2) fail("config: fitting supports higher_order = 2 only");
    if (k && *k < 1) fail("config: k must be positive or \"auto\"");
  }
};

inline Json to_json(const RunConfig& c) {
  const Hyperparams& h = c.hyper;
  Json j;
  j["data"] = c.data;
  j["covariate_file"] = c.covariate_file;
  j["lod_file"] = c.lod_file;
  j["output"] = c.output;
  j["response"] = c.response;
  j["exposures"] = c.exposures;
  j["covariates"] = c.covariates;
  j["log10"] = c.log10_columns;
  j["standardize"] = c.standardize;
  if (c.k) {
    j["k"] = *c.k;
  } else {
    j["k"] = "auto";
  }
  j["k_threshold"] = c.k_threshold;
  j["n_chains"] = c.n_chains;
  j["level"] = c.level;
  j["higher_order"] = c.higher_order;
  j["n_iter"] = h.n_iter;
  j["n_burn"] = h.n_burn;
  j["seed"] = h.seed;
  j["threads"] = h.n_threads;
  j["dl_a"] = h.dl_a;
  j["prior_var_coef"] = h.prior_var_coef;
  j["inv_gamma_shape"] = h.inv_gamma_shape;
  j["inv_gamma_rate"] = h.inv_gamma_rate;
  j["mala_step"] = h.mala_step;
  j["mala_target_accept"] = h.mala_target_accept;
  j["mala_metric"] = h.mala_metric == MalaMetric::identity ? "identity" : "gauss_newton";
  j["adapt_step"] = h.adapt_step;
  j["local_scale_update"] =
      h.local_scale_update == LocalScaleUpdate::printed ? "printed" : "dirichlet_laplace";
  return j;
}

inline RunConfig config_from_json(const Json& j) {
  RunConfig c;
  const auto fail = [](const std::string& m) { throw Error(ErrorKind::config, m); };
  static const std::vector<std::string> known = {
      "data", "covariate_file", "lod_file", "output", "response", "exposures", "covariates", "log10",
      "standardize", "k", "k_threshold", "n_chains", "level", "higher_order", "n_iter", "n_burn", "seed",
      "threads", "dl_a", "prior_var_coef", "inv_gamma_shape", "inv_gamma_rate", "mala_step",
      "mala_target_accept", "mala_metric", "adapt_step", "local_scale_update"};
  if (!j.is_object()) fail("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) fail("config: unknown key '" + key + "'");
  try {
    c.data = j.value("data", c.data);
    c.covariate_file = j.value("covariate_file", c.covariate_file);
    c.lod_file = j.value("lod_file", c.lod_file);
    c.output = j.value("output", c.output);
    c.response = j.value("response", c.response);
    c.exposures = j.value("exposures", c.exposures);
    c.covariates = j.value("covariates", c.covariates);
    c.log10_columns = j.value("log10", c.log10_columns);
    c.standardize = j.value("standardize", c.standardize);
    if (j.contains("k")) {
      if (j["k"].is_string()) {
        if (j["k"].get<std::string>() != "auto") fail("config: k must be an integer or \"auto\"");
      } else {
        c.k = j["k"].get<int>();
      }
    }
    c.k_threshold = j.value("k_threshold", c.k_threshold);
    c.n_chains = j.value("n_chains", c.n_chains);
    c.level = j.value("level", c.level);
    c.higher_order = j.value("higher_order", c.higher_order);
    Hyperparams& h = c.hyper;
    h.n_iter = j.value("n_iter", h.n_iter);
    h.n_burn = j.value("n_burn", h.n_burn);
    h.seed = j.value("seed", h.seed);
    h.n_threads = j.value("threads", h.n_threads);
    h.dl_a = j.value("dl_a", h.dl_a);
    h.prior_var_coef = j.value("prior_var_coef", h.prior_var_coef);
    h.inv_gamma_shape = j.value("inv_gamma_shape", h.inv_gamma_shape);
    h.inv_gamma_rate = j.value("inv_gamma_rate", h.inv_gamma_rate);
    h.mala_step = j.value("mala_step", h.mala_step);
    h.mala_target_accept = j.value("mala_target_accept", h.mala_target_accept);
    h.adapt_step = j.value("adapt_step", h.adapt_step);
    const std::string metric = j.value("mala_metric", std::string("gauss_newton"));
    if (metric == "identity") {
      h.mala_metric = MalaMetric::identity;
    } else if (metric == "gauss_newton") {
      h.mala_metric = MalaMetric::gauss_newton;
    } else {
      fail("config: mala_metric must be identity or gauss_newton");
    }
    const std::string scales = j.value("local_scale_update", std::string("dirichlet_laplace"));
    if (scales == "printed") {
      h.local_scale_update = LocalScaleUpdate::printed;
    } else if (scales == "dirichlet_laplace") {
      h.local_scale_update = LocalScaleUpdate::dirichlet_laplace;
    } else {
      fail("config: local_scale_update must be dirichlet_laplace or printed");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, path + ": " + e.what());
  }
  return config_from_json(j);
}

struct LoadedData {
  Dataset data;
  Standardization transform;  ///< maps the log10-transformed scale to the modeling scale
  std::vector<std::string> exposures;
  std::vector<std::string> covariates;
};

inline std::map<std::string, double> read_lod_file(const std::string& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() != 2) throw Error(ErrorKind::data, path + ": expected two columns (column,lod)");
  std::map<std::string, double> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double v = parse_cell(t.rows[r][1], r, t.header[1]);
    out[t.rows[r][0]] = v;
  }
  return out;
}

/// Reads the response, exposures and covariates named by the config. Empty
/// cells and "NA" are missing, "<LOD" is below the column's detection limit.
/// log10 applies to flagged exposures (and their limits) before centering and
/// scaling, which use the observed entries only.
inline LoadedData load_dataset(const RunConfig& config) {
  config.validate();
  const CsvTable table = read_csv(config.data);
  const auto need = [&](const CsvTable& t, const std::string& name, const std::string& file) {
    const Index c = t.column(name);
    if (c < 0) throw Error(ErrorKind::data, "column '" + name + "' not found in " + file);
    return c;
  };
  const Index response_col = need(table, config.response, config.data);

  std::optional<CsvTable> cov_table;
  if (!config.covariate_file.empty()) {
    cov_table = read_csv(config.covariate_file);
    if (cov_table->rows.size() != table.rows.size())
      throw Error(ErrorKind::data, config.covariate_file + " has a different number of rows than " + config.data);
  }

  LoadedData out;
  out.covariates = config.covariates;
  out.exposures = config.exposures;
  if (out.exposures.empty()) {
    for (const auto& name : table.header) {
      if (name == config.response) continue;
      if (!cov_table && std::find(out.covariates.begin(), out.covariates.end(), name) != out.covariates.end())
        continue;
      out.exposures.push_back(name);
    }
  }
  if (out.exposures.size() < 2) throw Error(ErrorKind::config, "need at least two exposure columns");
  for (const auto& name : config.log10_columns)
    if (std::find(out.exposures.begin(), out.exposures.end(), name) == out.exposures.end())
      throw Error(ErrorKind::config, "log10 column '" + name + "' is not an exposure");

  const std::map<std::string, double> lod_raw =
      config.lod_file.empty() ? std::map<std::string, double>{} : read_lod_file(config.lod_file);

  const Index n = static_cast<Index>(table.rows.size());
  const Index p = static_cast<Index>(out.exposures.size());
  const Index q = static_cast<Index>(out.covariates.size());
  if (n < 2) throw Error(ErrorKind::data, config.data + ": need at least two rows");

  Vector y(n);
  Matrix X = Matrix::Constant(n, p, std::numeric_limits<double>::quiet_NaN());
  StatusGrid status(n, p);
  Vector lod = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
  Matrix Z(n, q);

  for (Index j = 0; j < p; ++j) {
    const std::string& name = out.exposures[static_cast<std::size_t>(j)];
    const Index col = need(table, name, config.data);
    const bool use_log = std::find(config.log10_columns.begin(), config.log10_columns.end(), name) !=
                         config.log10_columns.end();
    const auto forward = [&](double v, std::size_t row) {
      if (!use_log) return v;
      if (!(v > 0.0))
        throw Error(ErrorKind::data, "row " + std::to_string(row + 1) + ", column '" + name +
                                         "': log10 needs a positive value");
      return std::log10(v);
    };
    if (auto it = lod_raw.find(name); it != lod_raw.end()) {
      if (use_log && !(it->second > 0.0))
        throw Error(ErrorKind::config, "detection limit of '" + name + "' must be positive for log10");
      lod[j] = forward(it->second, 0);
    }
    for (Index i = 0; i < n; ++i) {
      const std::string& cell = table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)];
      if (cell.empty() || cell == "NA") {
        status(i, j) = EntryStatus::missing;
      } else if (cell == "<LOD") {
        if (!std::isfinite(lod[j]))
          throw Error(ErrorKind::config, "column '" + name + "' has <LOD cells but no detection limit");
        status(i, j) = EntryStatus::below_lod;
      } else {
        X(i, j) = forward(parse_cell(cell, static_cast<std::size_t>(i), name), static_cast<std::size_t>(i));
      }
    }
  }
  for (Index i = 0; i < n; ++i) {
    const std::string& cell = table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(response_col)];
    if (cell.empty() || cell == "NA")
      throw Error(ErrorKind::data, "row " + std::to_string(i + 1) + ": response '" + config.response + "' is missing");
    y[i] = parse_cell(cell, static_cast<std::size_t>(i), config.response);
  }
  for (Index c = 0; c < q; ++c) {
    const std::string& name = out.covariates[static_cast<std::size_t>(c)];
    const CsvTable& src = cov_table ? *cov_table : table;
    const Index col = need(src, name, cov_table ? config.covariate_file : config.data);
    for (Index i = 0; i < n; ++i)
      Z(i, c) = parse_cell(src.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(col)],
                           static_cast<std::size_t>(i), name);
  }

  if (config.standardize) {
    try {
      out.transform = fit_standardization(y, X);
    } catch (const Error& e) {
      std::string what = e.what();
      for (Index j = p - 1; j >= 0; --j) {
        const std::string tag = "column " + std::to_string(j) + " ";
        if (what.rfind(tag, 0) == 0) what = "column '" + out.exposures[static_cast<std::size_t>(j)] + "' " + what.substr(tag.size());
      }
      throw Error(e.kind(), what);
    }
  } else {
    out.transform = Standardization::identity(p);
  }
  for (Index i = 0; i < n; ++i) y[i] = out.transform.response(y[i]);
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < n; ++i)
      if (status(i, j) == EntryStatus::observed) X(i, j) = out.transform.predictor(j, X(i, j));
    if (std::isfinite(lod[j])) lod[j] = out.transform.predictor(j, lod[j]);
  }

  out.data.y = std::move(y);
  out.data.X = std::move(X);
  out.data.status = std::move(status);
  out.data.lod = std::move(lod);
  out.data.Z = std::move(Z);
  out.data.validate();
  return out;
}

/// Pearson correlations over pairwise-complete entries (non-finite = unobserved).
inline Matrix pairwise_complete_correlation(const Matrix& X, const std::vector<std::string>& names = {}) {
  const Index p = X.cols();
  Matrix c = Matrix::Identity(p, p);
  const auto label = [&](Index j) {
    return names.empty() ? "column " + std::to_string(j) : "column '" + names[static_cast<std::size_t>(j)] + "'";
  };
  for (Index j = 0; j < p; ++j) {
    std::vector<double> col;
    for (Index i = 0; i < X.rows(); ++i)
      if (std::isfinite(X(i, j))) col.push_back(X(i, j));
    if (col.size() < 2 || !(variance_of(col) > 0.0))
      throw Error(ErrorKind::data, label(j) + " has zero observed variance");
  }
  for (Index j = 0; j < p; ++j)
    for (Index l = j + 1; l < p; ++l) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0, m = 0;
      for (Index i = 0; i < X.rows(); ++i) {
        const double a = X(i, j), b = X(i, l);
        if (!std::isfinite(a) || !std::isfinite(b)) continue;
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
        m += 1.0;
      }
      double r = 0.0;
      if (m >= 2.0) {
        const double cov = sab - sa * sb / m;
        const double va = saa - sa * sa / m, vb = sbb - sb * sb / m;
        if (va > 0.0 && vb > 0.0) r = cov / std::sqrt(va * vb);
      }
      c(j, l) = c(l, j) = r;
    }
  return c;
}

struct KSelection {
  int k = 1;
  double explained = 0.0;  ///< share of the leading k singular values
  Vector singular_values;
};

inline KSelection auto_select_k(const Matrix& X_with_nan, double threshold = 0.9,
                                const std::vector<std::string>& names = {}) {
  require(X_with_nan.cols() >= 2, "auto_select_k: need at least two exposure columns");
  const Matrix c = pairwise_complete_correlation(X_with_nan, names);
  KSelection out;
  out.singular_values = Eigen::JacobiSVD<Matrix>(c).singularValues();
  const std::span<const double> values(out.singular_values.data(), static_cast<std::size_t>(out.singular_values.size()));
  out.k = select_k(values, threshold);
  out.explained = out.singular_values.head(out.k).sum() / out.singular_values.sum();
  return out;
}

/// Exposure matrix with every non-observed cell set to NaN.
inline Matrix observed_exposures(const Dataset& d) {
  Matrix X = d.X;
  for (Index i = 0; i < d.n(); ++i)
    for (Index j = 0; j < d.p(); ++j)
      if (d.status(i, j) != EntryStatus::observed) X(i, j) = std::numeric_limits<double>::quiet_NaN();
  return X;
}

struct Term {
  std::string name;
  std::function<double(const InducedCoefficients&)> get;
};

/// Reported terms: main effects, the upper triangle of Omega_X (diagonal
/// included, matrix entries rather than monomial coefficients), then
/// exposure-covariate interactions.
inline std::vector<Term> reported_terms(const std::vector<std::string>& exposures,
                                        const std::vector<std::string>& covariates) {
  std::vector<Term> t;
  const auto p = static_cast<Index>(exposures.size());
  for (Index j = 0; j < p; ++j)
    t.push_back({"main:" + exposures[static_cast<std::size_t>(j)], [j](const InducedCoefficients& c) { return c.beta_X[j]; }});
  for (Index j = 0; j < p; ++j)
    for (Index l = j; l < p; ++l)
      t.push_back({"int:" + exposures[static_cast<std::size_t>(j)] + ":" + exposures[static_cast<std::size_t>(l)],
                   [j, l](const InducedCoefficients& c) { return c.Omega_X(j, l); }});
  for (Index j = 0; j < p; ++j)
    for (Index c = 0; c < static_cast<Index>(covariates.size()); ++c)
      t.push_back({"covint:" + exposures[static_cast<std::size_t>(j)] + ":" + covariates[static_cast<std::size_t>(c)],
                   [j, c](const InducedCoefficients& d) { return d.covariate_int(j, c); }});
  return t;
}

struct FitOutput {
  std::vector<ChainOutput> chains;
  std::vector<InducedCoefficients> pooled;  ///< on the log10 (unstandardized) scale
  KSelection k_selection;
  int k = 0;
  bool k_auto = false;
};

inline FitOutput run_fit(const RunConfig& config, const LoadedData& loaded) {
  FitOutput out;
  out.k_auto = !config.k.has_value();
  if (out.k_auto) {
    out.k_selection = auto_select_k(observed_exposures(loaded.data), config.k_threshold, loaded.exposures);
    out.k = out.k_selection.k;
  } else {
    out.k = *config.k;
  }
  Hyperparams hyper = config.hyper;
  hyper.k = out.k;
  for (int c = 0; c < config.n_chains; ++c) {
    Hyperparams h = hyper;
    h.seed = hyper.seed + static_cast<std::uint64_t>(c);
    out.chains.push_back(run_chain(loaded.data, h));
    for (const auto& d : out.chains.back().induced_draws) out.pooled.push_back(loaded.transform.to_original(d));
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorKind::io, "write failed for " + path.string());
}

inline std::string draws_csv(const FitOutput& fit, const std::vector<Term>& terms) {
  std::ostringstream s;
  s << "chain,draw,intercept";
  for (const auto& t : terms) s << ',' << t.name;
  s << '\n';
  std::size_t offset = 0;
  for (std::size_t c = 0; c < fit.chains.size(); ++c) {
    const auto kept = fit.chains[c].induced_draws.size();
    for (std::size_t d = 0; d < kept; ++d) {
      const InducedCoefficients& coef = fit.pooled[offset + d];
      s << c << ',' << d << ',' << detail::format_double(coef.intercept);
      for (const auto& t : terms) s << ',' << detail::format_double(t.get(coef));
      s << '\n';
    }
    offset += kept;
  }
  return s.str();
}

inline std::string summary_csv(const FitOutput& fit, const std::vector<Term>& terms, double level) {
  std::ostringstream s;
  s << "term,mean,sd,lower,upper,estimate\n";
  std::vector<double> trace(fit.pooled.size());
  for (const auto& t : terms) {
    for (std::size_t d = 0; d < fit.pooled.size(); ++d) trace[d] = t.get(fit.pooled[d]);
    const double mean = mean_of(trace);
    const Interval ci = equal_tailed_interval(trace, level);
    const double estimate = ci.contains(0.0) ? 0.0 : mean;
    s << t.name << ',' << detail::format_double(mean) << ',' << detail::format_double(std::sqrt(variance_of(trace)))
      << ',' << detail::format_double(ci.lower) << ',' << detail::format_double(ci.upper) << ','
      << detail::format_double(estimate) << '\n';
  }
  return s.str();
}

inline Json diagnostics_json(const FitOutput& fit, const std::vector<std::string>& exposures) {
  Json j;
  j["k"] = fit.k;
  j["k_auto"] = fit.k_auto;
  if (fit.k_auto) {
    j["k_explained"] = fit.k_selection.explained;
    std::vector<double> sv(fit.k_selection.singular_values.data(),
                           fit.k_selection.singular_values.data() + fit.k_selection.singular_values.size());
    j["singular_values"] = sv;
  }
  Json chains = Json::array();
  for (const auto& c : fit.chains) {
    Json cj;
    cj["seed"] = c.seed;
    cj["eta_accept_rate"] = c.accept_rate_eta;
    cj["mala_step"] = c.step_size;
    Json ess;
    for (std::size_t e = 0; e < exposures.size(); ++e) ess["main:" + exposures[e]] = c.ess_main[static_cast<Index>(e)];
    cj["ess_main"] = ess;
    chains.push_back(cj);
  }
  j["chains"] = chains;
  return j;
}

/// Writes draws.csv, summary.csv, diagnostics.json and config.json.
inline void write_fit_outputs(const RunConfig& config, const LoadedData& loaded, const FitOutput& fit) {
  const std::filesystem::path dir(config.output);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
  const auto terms = reported_terms(loaded.exposures, loaded.covariates);
  write_text(dir / "draws.csv", draws_csv(fit, terms));
  write_text(dir / "summary.csv", summary_csv(fit, terms, config.level));
  write_text(dir / "diagnostics.json", diagnostics_json(fit, loaded.exposures).dump(2) + "\n");
  RunConfig resolved = config;
  resolved.exposures = loaded.exposures;
  write_text(dir / "config.json", to_json(resolved).dump(2) + "\n");
}

/// Reads draws.csv back: one InducedCoefficients per row (without covariate
/// interactions when `q` is zero).
inline std::vector<InducedCoefficients> read_draws(const std::string& path, Index p, Index q) {
  const CsvTable t = read_csv(path);
  const std::size_t expected = 3 + static_cast<std::size_t>(p + p * (p + 1) / 2 + p * q);
  if (t.header.size() != expected) throw Error(ErrorKind::data, path + ": unexpected column count");
  std::vector<InducedCoefficients> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::size_t c = 2;
    const auto next = [&]() {
      const double v = parse_cell(t.rows[r][c], r, t.header[c]);
      ++c;
      return v;
    };
    InducedCoefficients d;
    d.intercept = next();
    d.beta_X.resize(p);
    for (Index j = 0; j < p; ++j) d.beta_X[j] = next();
    d.Omega_X.resize(p, p);
    for (Index j = 0; j < p; ++j)
      for (Index l = j; l < p; ++l) d.Omega_X(j, l) = d.Omega_X(l, j) = next();
    d.covariate_int.resize(p, q);
    for (Index j = 0; j < p; ++j)
      for (Index k = 0; k < q; ++k) d.covariate_int(j, k) = next();
    out.push_back(std::move(d));
  }
  return out;
}

/// One row per replicate of the simulation harness.
inline std::string replicate_table(const std::vector<ReplicateResult>& reps) {
  std::ostringstream s;
  s << "replicate,test_mse,main_mse,frobenius,tp_main,tn_main,tp_int,tn_int,oracle_test_mse,"
       "predictive_coverage,min_ess_main,eta_accept_rate,k\n";
  for (std::size_t r = 0; r < reps.size(); ++r) {
    const auto& x = reps[r];
    const auto& m = x.metrics;
    for (double v : {static_cast<double>(r), m.test_mse, m.main_mse, m.frobenius, m.tp_main, m.tn_main, m.tp_int,
                     m.tn_int, x.oracle_test_mse, x.predictive_coverage, x.min_ess_main, x.accept_rate})
      s << detail::format_double(v) << ',';
    s << x.k << '\n';
  }
  return s.str();
}

}  // namespace fin
