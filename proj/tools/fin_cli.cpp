#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "fin/fin.hpp"

using namespace fin;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::argument: return 2;
    case ErrorKind::config: return 3;
    case ErrorKind::data: return 4;
    case ErrorKind::numerical: return 5;
    case ErrorKind::io: return 6;
  }
  return 1;
}

struct FitFlags {
  std::string config, data, response, covariate_file, lod_file, output, k;
  std::vector<std::string> exposures, covariates, log10;
  std::optional<int> n_iter, n_burn, n_chains;
  std::optional<double> level;
  bool no_standardize = false;
};

void add_data_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--data", f.data, "CSV with a header row");
  cmd->add_option("--response", f.response, "response column");
  cmd->add_option("--exposures", f.exposures, "exposure columns (default: all others)")->delimiter(',');
  cmd->add_option("--covariates", f.covariates, "covariate columns")->delimiter(',');
  cmd->add_option("--covariate-file", f.covariate_file, "CSV holding the covariate columns");
  cmd->add_option("--lod-file", f.lod_file, "CSV column,lod with detection limits");
  cmd->add_option("--log10", f.log10, "columns to log10-transform")->delimiter(',');
  cmd->add_flag("--no-standardize", f.no_standardize, "skip centering and scaling");
}

RunConfig resolve(const FitFlags& f, std::optional<std::uint64_t> seed, std::optional<int> threads) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (!f.data.empty()) c.data = f.data;
  if (!f.response.empty()) c.response = f.response;
  if (!f.exposures.empty()) c.exposures = f.exposures;
  if (!f.covariates.empty()) c.covariates = f.covariates;
  if (!f.covariate_file.empty()) c.covariate_file = f.covariate_file;
  if (!f.lod_file.empty()) c.lod_file = f.lod_file;
  if (!f.log10.empty()) c.log10_columns = f.log10;
  if (f.no_standardize) c.standardize = false;
  if (!f.output.empty()) c.output = f.output;
  if (!f.k.empty()) {
    if (f.k == "auto") {
      c.k.reset();
    } else {
      try {
        c.k = std::stoi(f.k);
      } catch (const std::exception&) {
        throw Error(ErrorKind::config, "--k must be an integer or auto");
      }
    }
  }
  if (f.n_iter) c.hyper.n_iter = *f.n_iter;
  if (f.n_burn) c.hyper.n_burn = *f.n_burn;
  if (f.n_chains) c.n_chains = *f.n_chains;
  if (f.level) c.level = *f.level;
  if (seed) c.hyper.seed = *seed;
  if (threads) c.hyper.n_threads = *threads;
  c.validate();
  return c;
}

int run_fit_command(const FitFlags& f, std::optional<std::uint64_t> seed, std::optional<int> threads) {
  const RunConfig config = resolve(f, seed, threads);
  const LoadedData loaded = load_dataset(config);
  if (config.k && *config.k > loaded.data.p())
    std::cerr << "warning: k = " << *config.k << " exceeds the " << loaded.data.p() << " exposures\n";
  const FitOutput fit = run_fit(config, loaded);
  write_fit_outputs(config, loaded, fit);
  std::printf("k = %d, %zu kept draws written to %s\n", fit.k, fit.pooled.size(), config.output.c_str());
  for (const auto& c : fit.chains)
    std::printf("chain seed %llu: eta acceptance %.3f, min main-effect ESS %.0f\n",
                static_cast<unsigned long long>(c.seed), c.accept_rate_eta, c.ess_main.minCoeff());
  return 0;
}

int run_select_k(const FitFlags& f, double threshold) {
  RunConfig c = resolve(f, std::nullopt, std::nullopt);
  const LoadedData loaded = load_dataset(c);
  const KSelection k = auto_select_k(observed_exposures(loaded.data), threshold, loaded.exposures);
  std::printf("k = %d (leading values explain %.4f of the total)\n", k.k, k.explained);
  return 0;
}

struct SimFlags {
  int p = 10, n_train = 500, n_test = 500, k_true = 0, reps = 10, n_iter = 2000, n_burn = 1000, k = 0;
  std::string scenario = "factor", density = "sparse", output;
  double noise_sd = 1.0, linear_rho = 0.8, level = 0.95;
};

int run_simulate(const SimFlags& f, std::optional<std::uint64_t> seed, std::optional<int> threads) {
  ScenarioSpec spec;
  spec.p = f.p;
  spec.n_train = f.n_train;
  spec.n_test = f.n_test;
  spec.k_true = f.k_true;
  spec.noise_sd = f.noise_sd;
  spec.linear_rho = f.linear_rho;
  if (f.scenario == "factor") {
    spec.scenario = Scenario::factor;
  } else if (f.scenario == "linear") {
    spec.scenario = Scenario::linear;
  } else if (f.scenario == "independent") {
    spec.scenario = Scenario::independent;
  } else {
    throw Error(ErrorKind::config, "--scenario must be factor, linear or independent");
  }
  if (f.density != "sparse" && f.density != "dense")
    throw Error(ErrorKind::config, "--density must be sparse or dense");
  spec.density = f.density == "sparse" ? Density::sparse : Density::dense;
  const std::uint64_t base = seed.value_or(1);
  std::vector<ReplicateResult> reps;
  for (int r = 0; r < f.reps; ++r) {
    spec.seed = base * 1000 + static_cast<std::uint64_t>(r);
    const ScenarioData sim = generate_scenario(spec);
    FitSettings fit;
    fit.k = f.k;
    fit.n_iter = f.n_iter;
    fit.n_burn = f.n_burn;
    fit.level = f.level;
    fit.seed = base + static_cast<std::uint64_t>(r);
    fit.n_threads = threads.value_or(1);
    reps.push_back(run_replicate(sim, f.noise_sd, fit));
  }
  const std::string table = replicate_table(reps);
  if (f.output.empty()) {
    std::cout << table;
  } else {
    write_text(f.output, table);
    std::printf("%d replicates written to %s\n", f.reps, f.output.c_str());
  }
  return 0;
}

bool report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  return ok;
}

int run_check(std::uint64_t seed) {
  RngStream g(seed, 77);
  bool all = true;
  char buf[160];

  double rot = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const Index p = 8, k = 3;
    Matrix Lambda(p, k);
    for (Index j = 0; j < p; ++j)
      for (Index h = 0; h < k; ++h) Lambda(j, h) = g.normal();
    Vector psi(p);
    for (Index j = 0; j < p; ++j) psi[j] = 0.2 + g.uniform();
    RegressionCoefficients c;
    c.omega = sample_standard_normal(k, g);
    Matrix W(k, k);
    for (Index h = 0; h < k; ++h)
      for (Index l = 0; l < k; ++l) W(h, l) = g.normal();
    c.Omega = 0.5 * (W + W.transpose());
    Matrix R(k, k);
    for (Index h = 0; h < k; ++h)
      for (Index l = 0; l < k; ++l) R(h, l) = g.normal();
    const Matrix P = Eigen::HouseholderQR<Matrix>(R).householderQ();
    const InducedCoefficients a = induced_coefficients(factor_posterior_moments(Lambda, psi), c);
    RegressionCoefficients rc = c;
    rc.omega = P.transpose() * c.omega;
    rc.Omega = P.transpose() * c.Omega * P;
    const InducedCoefficients b = induced_coefficients(factor_posterior_moments(Lambda * P, psi), rc);
    rot = std::max({rot, std::abs(a.intercept - b.intercept), (a.beta_X - b.beta_X).cwiseAbs().maxCoeff(),
                    (a.Omega_X - b.Omega_X).cwiseAbs().maxCoeff()});
  }
  std::snprintf(buf, sizeof buf, "max abs change %.2e", rot);
  all &= report("rotation invariance", rot < 1e-9, buf);

  double q2 = 0.0;
  {
    const Index p = 5, k = 3;
    Matrix Lambda(p, k);
    for (Index j = 0; j < p; ++j)
      for (Index h = 0; h < k; ++h) Lambda(j, h) = g.normal();
    const FactorPosteriorMoments m = factor_posterior_moments(Lambda, Vector::Constant(p, 0.5));
    const std::vector<Vector> w = {sample_standard_normal(k, g), sample_standard_normal(k, g)};
    RegressionCoefficients c;
    c.omega = w[0];
    c.Omega = w[1].asDiagonal();
    const InducedCoefficients ref = induced_coefficients(m, c);
    for (int rep = 0; rep < 10; ++rep) {
      const Vector x = sample_standard_normal(p, g);
      q2 = std::max(q2, std::abs(evaluate_induced_polynomial(m, w, x) - ref.conditional_mean(x)));
    }
  }
  std::snprintf(buf, sizeof buf, "max abs difference %.2e", q2);
  all &= report("second-order polynomial path", q2 < 1e-12, buf);

  int kl_ok = 0;
  for (int rep = 0; rep < 20; ++rep) {
    Matrix L0(8, 5);
    for (Index j = 0; j < 8; ++j)
      for (Index h = 0; h < 5; ++h) L0(j, h) = g.normal();
    try {
      kl_bound_check(L0, 0.5 + g.uniform(), 1 + rep % 4);
      ++kl_ok;
    } catch (const Error&) {
    }
  }
  std::snprintf(buf, sizeof buf, "%d of 20 instances within the bound", kl_ok);
  all &= report("rank-k KL bound", kl_ok == 20, buf);

  GewekeSettings gs;
  gs.n_prior = 20000;
  gs.n_sweeps = 20000;
  gs.seed = seed;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : geweke_test(gs)) {
    if (r.name == "lambda_11^2" || r.name == "|lambda_11|") continue;
    if (std::abs(r.z) > worst) {
      worst = std::abs(r.z);
      worst_name = r.name;
    }
  }
  std::snprintf(buf, sizeof buf, "largest |z| %.2f (%s)", worst, worst_name.c_str());
  all &= report("joint distribution test", worst < 4.0, buf);
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent factor regression with interactions"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--threads", threads, "threads per update block")->check(CLI::PositiveNumber);

  FitFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "run the sampler on a CSV data set");
  add_data_flags(fit, fit_flags);
  fit->add_option("--out", fit_flags.output, "output directory");
  fit->add_option("--k", fit_flags.k, "number of factors or auto");
  fit->add_option("--iter", fit_flags.n_iter, "sweeps per chain");
  fit->add_option("--burn", fit_flags.n_burn, "burn-in sweeps");
  fit->add_option("--chains", fit_flags.n_chains, "number of chains");
  fit->add_option("--level", fit_flags.level, "interval level for the summary");

  FitFlags k_flags;
  double threshold = 0.9;
  auto* select = app.add_subcommand("select-k", "rule-of-thumb number of factors");
  add_data_flags(select, k_flags);
  select->add_option("--threshold", threshold, "explained share");

  SimFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "synthetic replicate table");
  simulate->add_option("--p", sim_flags.p);
  simulate->add_option("--n-train", sim_flags.n_train);
  simulate->add_option("--n-test", sim_flags.n_test);
  simulate->add_option("--scenario", sim_flags.scenario, "factor, linear or independent");
  simulate->add_option("--k-true", sim_flags.k_true, "true factors (0: default)");
  simulate->add_option("--density", sim_flags.density, "sparse or dense");
  simulate->add_option("--noise-sd", sim_flags.noise_sd);
  simulate->add_option("--linear-rho", sim_flags.linear_rho);
  simulate->add_option("--reps", sim_flags.reps);
  simulate->add_option("--iter", sim_flags.n_iter);
  simulate->add_option("--burn", sim_flags.n_burn);
  simulate->add_option("--k", sim_flags.k, "factors in the fit (0: rule of thumb)");
  simulate->add_option("--level", sim_flags.level);
  simulate->add_option("--out", sim_flags.output, "CSV file (default: stdout)");

  auto* check = app.add_subcommand("check", "invariant and oracle checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (fit->parsed()) return run_fit_command(fit_flags, seed, threads);
    if (select->parsed()) return run_select_k(k_flags, threshold);
    if (simulate->parsed()) return run_simulate(sim_flags, seed, threads);
    if (check->parsed()) return run_check(seed.value_or(1));
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
