#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "hanam/cli.hpp"
#include "hanam/draws_io.hpp"
#include "hanam/errors.hpp"

namespace hanam::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kNetworkTag = 0x6e6574;
constexpr std::uint64_t kOutcomeTag = 0x6f7574;
constexpr std::uint64_t kLatentTag = 0x6c6174;
constexpr std::uint64_t kFitTag = 0x666974;
constexpr std::uint64_t kForwardTag = 0x667764;

struct Options {
  std::string name;
  std::string config_file;
  std::vector<std::string> sets;
  std::string seed;
  std::string out = ".";
  int jobs = 1;
  std::string manifest;
  bool print_config = false;
  bool quiet = false;

  std::string network, covariates, outcome, draws;
  std::string family;
  bool mle = false;
  bool standardize = false;
  int cell = -1;
  bool full_grid = false;
};

/// Files of one command, written together only after everything has been computed.
struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;
  void add(std::string name, std::string contents) { files.emplace_back(std::move(name), std::move(contents)); }
};

std::string provenance_line(const RunConfig& cfg) {
  return "# hanam config_hash=" + config_hash(cfg) + " seed=" + std::to_string(cfg.seed) + "\n";
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string absolute_text(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) fail(ErrorKind::InvalidArgument, "missing required input --" + what);
  if (!fs::is_regular_file(path)) fail(ErrorKind::Io, "cannot open " + what + " file " + path);
}

json base_report(const std::string& command, const RunConfig& cfg) {
  json j;
  j["format_version"] = kFormatVersion;
  j["tool"] = "hanam";
  j["version"] = kVersion;
  j["command"] = command;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  return j;
}

void write_outputs(const Options& o, const RunConfig& cfg, Outputs outputs, const json& inputs) {
  json m = base_report(o.name, cfg);
  m["config"] = json(to_map(cfg));
  m["inputs"] = inputs;
  if (o.cell >= 0) m["cell"] = o.cell;
  json names = json::array();
  for (const auto& f : outputs.files) names.push_back(f.first);
  m["outputs"] = names;
  outputs.add("manifest.json", m.dump(2) + "\n");

  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec || !fs::is_directory(o.out)) fail(ErrorKind::Io, "cannot create output directory " + o.out);
  for (const auto& [name, contents] : outputs.files) write_file_atomic(fs::path(o.out) / name, contents);
}

/// defaults < manifest < config file < HANAM_SEED < --set < dedicated flags.
RunConfig resolve_config(Options& o, std::ostream& err) {
  RunConfig cfg;
  if (!o.manifest.empty()) {
    std::ifstream in(o.manifest);
    if (!in) fail(ErrorKind::Io, "cannot open manifest " + o.manifest);
    json m;
    try {
      m = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, o.manifest + ": " + e.what());
    }
    if (!m.contains("command") || !m.contains("config") || !m["config"].is_object())
      fail(ErrorKind::Parse, o.manifest + ": not a hanam manifest");
    if (m["command"] != o.name)
      fail(ErrorKind::InvalidArgument, o.manifest + " was written by '" + m["command"].get<std::string>() +
                                           "', not '" + o.name + "'");
    apply_map(cfg, m["config"].get<std::map<std::string, std::string>>());
    if (m.contains("inputs")) {
      const auto& in_files = m["inputs"];
      auto take = [&](std::string& slot, const char* key) {
        if (slot.empty() && in_files.contains(key)) slot = in_files[key].get<std::string>();
      };
      take(o.network, "network");
      take(o.covariates, "covariates");
      take(o.outcome, "outcome");
      take(o.draws, "draws");
    }
    if (o.cell < 0 && m.contains("cell")) o.cell = m["cell"].get<int>();
  }
  if (o.full_grid) {
    apply_full_grid(cfg);
    err << "warning: --full-grid runs " << make_grid(cfg).expand().size() << " scenarios x " << cfg.n_reps
        << " replicates; expect many hours\n";
  }
  if (!o.config_file.empty()) load_config_file(cfg, o.config_file);
  if (const char* env = std::getenv(kSeedEnv); env && *env) {
    try {
      set_key(cfg, "seed", env);
    } catch (const Error& e) {
      fail(ErrorKind::InvalidArgument, std::string(kSeedEnv) + ": " + e.what());
    }
  }
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(ErrorKind::InvalidArgument, "--set expects key=value, got '" + s + "'");
    set_key(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (!o.family.empty()) set_key(cfg, "fit.family", o.family);
  if (o.mle) cfg.mle = true;
  if (o.standardize) cfg.standardize = true;
  if (!o.seed.empty()) set_key(cfg, "seed", o.seed);
  if (o.jobs < 1) fail(ErrorKind::InvalidArgument, "--jobs must be at least 1");
  return cfg;
}

/// First generated network on which |rho| lambda_1 < 1, trying seeds (seed, attempt).
GeneratedNetwork stable_network(const NetworkParams& net, double rho, int attempts, std::uint64_t seed) {
  for (int k = 0; k < attempts; ++k) {
    try {
      GeneratedNetwork g = generate_network(net, derive_seed(seed, kNetworkTag, k));
      if (check_stability(rho, row_normalize(g.adjacency))) return g;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyNetwork) throw;
    }
  }
  fail(ErrorKind::Unstable, "no stable network for rho = " + format_number(rho) + " in " + std::to_string(attempts) +
                                " attempts");
}

std::vector<std::string> node_ids(Index n) {
  std::vector<std::string> ids;
  for (Index i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i + 1));
  return ids;
}

/// Node order from the edge list when no covariates file fixes it.
std::vector<std::string> ids_from_edges(const std::string& path) {
  const CsvTable t = read_csv(path, false);
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (r == 0 && t.rows[r][0] == "src") continue;
    for (std::size_t c = 0; c < 2 && c < t.rows[r].size(); ++c)
      if (seen.insert(t.rows[r][c]).second) ids.push_back(t.rows[r][c]);
  }
  return ids;
}

std::shared_ptr<const MatrixNormalApprox> summarize(LatentDraws draws, const RunConfig& cfg) {
  if (!draws.aligned) draws = procrustes_align(draws);
  MatrixNormalOptions mo;
  mo.s11_reading = cfg.s11_reading;
  return std::make_shared<MatrixNormalApprox>(fit_matrix_normal(draws, mo));
}

// ---------------------------------------------------------------------------

int cmd_fit(Options& o, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  require_file(o.network, "network");
  require_file(o.covariates, "covariates");
  require_file(o.outcome, "outcome");
  if (!o.draws.empty()) require_file(o.draws, "draws");
  if (cfg.mle && is_homophily_adjusted(cfg.family))
    fail(ErrorKind::InvalidArgument, "--mle is available for NAM_EFFECTS and NAM_DISTURBANCES only");

  const NodeData nodes = read_covariates(o.covariates, cfg.standardize);
  const RowNormalizedNetwork a = row_normalize(read_edge_list(o.network, nodes.ids));
  Dataset data{read_outcome(o.outcome, nodes.ids), nodes.X, nodes.column_names};
  data.validate(a.n());

  FitConfig fc = cfg.fit;
  fc.seed = derive_seed(cfg.seed, kFitTag);

  json latent_report = nullptr;
  std::shared_ptr<const MatrixNormalApprox> latent;
  if (is_homophily_adjusted(cfg.family)) {
    LatentDraws draws;
    std::string source;
    if (!o.draws.empty()) {
      draws = read_draws(o.draws);
      if (draws.n() != a.n())
        fail(ErrorKind::BadShape, o.draws + ": draws have " + std::to_string(draws.n()) + " rows but the network has " +
                                      std::to_string(a.n()) + " nodes");
      source = "file";
    } else {
      if (!o.quiet) err << "no --draws given; sampling latent positions\n";
      LatentSamplerConfig sc = cfg.sampler;
      sc.seed = derive_seed(cfg.seed, kLatentTag);
      draws = sample_latent_posterior(a, nodes.attributes, sc).draws;
      source = "sampler";
    }
    const Index k_draws = draws.K();
    latent = summarize(std::move(draws), cfg);
    latent_report = {{"source", source},
                     {"K", k_draws},
                     {"D", latent->Lambda.cols()},
                     {"fit_loglik", number(latent->fit_loglik)},
                     {"fit_iterations", latent->iterations},
                     {"fit_converged", latent->converged},
                     {"ridge_repairs", latent->ridge_repairs}};
  }

  const FitResult fit = cfg.mle ? nam_mle(data, a, cfg.family, fc)
                                : map_fit(data, a, ModelFamily::make(cfg.family, latent), cfg.priors, fc);

  const std::string method = std::string(to_string(cfg.family)) + (cfg.mle ? "_MLE" : "");
  struct Row {
    std::string name;
    double estimate;
    std::optional<Interval> interval;
  };
  std::vector<Row> rows;
  const auto& iv = fit.intervals;
  for (Index j = 0; j < fit.theta_map.beta.size(); ++j)
    rows.push_back({"beta[" + data.column_names[static_cast<std::size_t>(j)] + "]", fit.theta_map.beta(j),
                    iv ? std::optional<Interval>(iv->beta[static_cast<std::size_t>(j)]) : std::nullopt});
  for (Index j = 0; j < fit.theta_map.gamma.size(); ++j)
    rows.push_back({"gamma[" + std::to_string(j + 1) + "]", fit.theta_map.gamma(j),
                    iv ? std::optional<Interval>(iv->gamma[static_cast<std::size_t>(j)]) : std::nullopt});
  rows.push_back({"rho", fit.theta_map.rho, iv ? std::optional<Interval>(iv->rho) : std::nullopt});
  rows.push_back({"sigma2", fit.theta_map.sigma2, iv ? std::optional<Interval>(iv->sigma2) : std::nullopt});

  std::ostringstream csv;
  csv << provenance_line(cfg) << "parameter,method,estimate,lower,upper\n";
  json params = json::array();
  for (const auto& r : rows) {
    csv << r.name << ',' << method << ',' << format_number(r.estimate) << ','
        << (r.interval ? format_number(r.interval->lower) : "") << ','
        << (r.interval ? format_number(r.interval->upper) : "") << '\n';
    params.push_back({{"name", r.name},
                      {"estimate", number(r.estimate)},
                      {"lower", r.interval ? number(r.interval->lower) : json(nullptr)},
                      {"upper", r.interval ? number(r.interval->upper) : json(nullptr)}});
  }

  json report = base_report("fit", cfg);
  report["family"] = std::string(to_string(cfg.family));
  report["mle"] = cfg.mle;
  report["n"] = a.n();
  report["p"] = data.p();
  report["parameters"] = params;
  report[cfg.mle ? "log_likelihood" : "log_posterior"] = number(fit.log_post);
  report["interval_level"] = cfg.fit.level;
  report["interval_error"] = fit.interval_error;
  report["converged"] = fit.converged;
  report["iterations"] = fit.n_iters;
  report["projected_gradient_norm"] = number(fit.pg_norm);
  report["starts_run"] = fit.starts_run;
  report["starts_failed"] = fit.starts_failed;
  report["rho_box"] = {fit.rho_box.first, fit.rho_box.second};
  report["latent"] = latent_report;
  report["config"] = json(to_map(cfg));

  Outputs outputs;
  outputs.add("fit.json", report.dump(2) + "\n");
  outputs.add("fit.csv", csv.str());
  write_outputs(o, cfg, std::move(outputs),
                {{"network", absolute_text(o.network)},
                 {"covariates", absolute_text(o.covariates)},
                 {"outcome", absolute_text(o.outcome)},
                 {"draws", absolute_text(o.draws)}});

  if (!fit.converged) err << "warning: optimizer did not converge (projected gradient " << fit.pg_norm << ")\n";
  if (!fit.intervals) err << "warning: no intervals: " << fit.interval_error << "\n";
  if (!o.quiet) out << method << " rho = " << format_number(fit.theta_map.rho) << "\n";
  return kExitOk;
}

int cmd_simulate(Options& o, const RunConfig& cfg, std::ostream& out, std::ostream&) {
  if (cfg.truth.beta.size() != 2)
    fail(ErrorKind::BadShape, "truth.beta must hold (beta0, beta1) for the intercept-plus-covariate design");
  if (cfg.truth.gamma.size() != cfg.net.D)
    fail(ErrorKind::BadShape, "truth.gamma has length " + std::to_string(cfg.truth.gamma.size()) + " but net.D = " +
                                  std::to_string(cfg.net.D));
  if (cfg.latent_draws < 2) fail(ErrorKind::InvalidArgument, "scenario.latent_draws must be at least 2");
  cfg.net.validate();

  const GeneratedNetwork g = stable_network(cfg.net, cfg.truth.rho, cfg.max_network_attempts, cfg.seed);
  const RowNormalizedNetwork a = row_normalize(g.adjacency);
  const Matrix X = design_with_intercept(g.x);
  const Vector y = draw_limiting_outcome(a, g.U, X, cfg.truth, cfg.law, derive_seed(cfg.seed, kOutcomeTag));
  const LatentDraws draws = perturbed_draws(g.U, cfg.latent_draws, cfg.oracle_tau, derive_seed(cfg.seed, kLatentTag));

  const auto ids = node_ids(a.n());
  const std::string head = provenance_line(cfg);
  std::ostringstream edges, cov, outcome, pos;
  edges << head << "src,dst\n";
  cov << head << "id,x\n";
  outcome << head << "id,y\n";
  pos << head << "id";
  for (Index d = 0; d < g.U.cols(); ++d) pos << ",u" << d + 1;
  pos << '\n';
  for (Index i = 0; i < a.n(); ++i) {
    const auto& id = ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < a.n(); ++j) {
      const double w = g.adjacency.weights()(i, j);
      if (w == 0.0) continue;
      edges << id << ',' << ids[static_cast<std::size_t>(j)];
      if (w != 1.0) edges << ',' << format_number(w);
      edges << '\n';
    }
    cov << id << ',' << format_number(g.x(i)) << '\n';
    outcome << id << ',' << format_number(y(i)) << '\n';
    pos << id;
    for (Index d = 0; d < g.U.cols(); ++d) pos << ',' << format_number(g.U(i, d));
    pos << '\n';
  }

  Outputs outputs;
  outputs.add("edges.csv", edges.str());
  outputs.add("covariates.csv", cov.str());
  outputs.add("outcome.csv", outcome.str());
  outputs.add("positions.csv", pos.str());
  outputs.add("draws.csv", write_draws_string(draws));
  write_outputs(o, cfg, std::move(outputs), json::object());
  if (!o.quiet)
    out << "simulated " << a.n() << " nodes, " << g.adjacency.edge_count() << " edges, lambda_1 = "
        << format_number(spectral_norm(a)) << "\n";
  return kExitOk;
}

int cmd_validate_limit(Options& o, const RunConfig& cfg, std::ostream& out, std::ostream&) {
  NetworkParams net = cfg.net;
  net.n = cfg.limit_n;
  net.validate();
  TrueParams truth = cfg.truth;
  truth.rho = cfg.limit_rho;
  if (truth.beta.size() != 2) fail(ErrorKind::BadShape, "truth.beta must hold (beta0, beta1)");
  if (truth.gamma.size() != net.D) fail(ErrorKind::BadShape, "truth.gamma length must equal net.D");

  const GeneratedNetwork g = stable_network(net, truth.rho, cfg.max_network_attempts, cfg.seed);
  const RowNormalizedNetwork a = row_normalize(g.adjacency);
  const Matrix X = design_with_intercept(g.x);
  ForwardSimConfig fwd = cfg.forward;
  fwd.seed = derive_seed(cfg.seed, kForwardTag);
  const LimitReport rep = validate_limit(a, g.U, X, truth, cfg.law, fwd, cfg.limit_paths, cfg.limit_threshold);

  json report = base_report("validate-limit", cfg);
  report["pass"] = rep.pass;
  report["mean_ok"] = rep.mean_ok;
  report["cov_ok"] = rep.cov_ok;
  report["max_mean_z"] = number(rep.max_mean_z);
  report["max_cov_z"] = number(rep.max_cov_z);
  report["cov_fraction_within"] = number(rep.cov_fraction_within);
  report["threshold"] = rep.threshold;
  report["n_paths"] = rep.n_paths;
  report["n"] = a.n();
  report["rho"] = truth.rho;
  report["law"] = std::string(to_string(cfg.law));
  report["spectral_norm"] = number(spectral_norm(a));
  report["config"] = json(to_map(cfg));

  std::ostringstream csv;
  csv << provenance_line(cfg) << "node,empirical_mean,target_mean,empirical_var,target_var\n";
  for (Index i = 0; i < a.n(); ++i)
    csv << i + 1 << ',' << format_number(rep.empirical_mean(i)) << ',' << format_number(rep.target_mean(i)) << ','
        << format_number(rep.empirical_cov(i, i)) << ',' << format_number(rep.target_cov(i, i)) << '\n';

  Outputs outputs;
  outputs.add("limit.json", report.dump(2) + "\n");
  outputs.add("limit_moments.csv", csv.str());
  write_outputs(o, cfg, std::move(outputs), json::object());
  if (!o.quiet)
    out << (rep.pass ? "PASS" : "FAIL") << " max mean z = " << format_number(rep.max_mean_z)
        << ", covariance entries within = " << format_number(rep.cov_fraction_within) << "\n";
  return kExitOk;
}

int cmd_scenarios(Options& o, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const GridConfig grid = make_grid(cfg);
  const auto cells = grid.expand();
  if (o.cell >= static_cast<int>(cells.size()))
    fail(ErrorKind::InvalidArgument, "--cell " + std::to_string(o.cell) + " out of range (grid has " +
                                         std::to_string(cells.size()) + " cells)");
  for (const auto& sc : cells) sc.validate();
  const auto methods = builtin_methods(grid.methods);
  std::vector<std::string> names;
  for (const auto& m : methods) names.push_back(m.name);

  MetricsTable all;
  std::ostringstream reps, cell_csv;
  const std::string head = provenance_line(cfg);
  reps << head << "scenario_id,replicate,network_index,method,parameter,truth,estimate,lower,upper,ok,failure\n";
  cell_csv << head << "scenario_id,law,beta0,beta1,gamma,rho,n_reps,network_regenerations\n";
  for (const auto& sc : cells) {
    if (o.cell >= 0 && sc.scenario_id != o.cell) continue;
    if (!o.quiet)
      err << "scenario " << sc.scenario_id << ": " << to_string(sc.law) << " rho=" << format_number(sc.truth.rho)
          << " beta1=" << format_number(sc.truth.beta(1)) << "\n";
    const ScenarioResult res = run_scenario(sc, methods, o.jobs);
    all.rows.insert(all.rows.end(), res.metrics.rows.begin(), res.metrics.rows.end());
    std::string gamma;
    for (Index d = 0; d < sc.truth.gamma.size(); ++d) gamma += (d ? " " : "") + format_number(sc.truth.gamma(d));
    cell_csv << sc.scenario_id << ',' << to_string(sc.law) << ',' << format_number(sc.truth.beta(0)) << ','
             << format_number(sc.truth.beta(1)) << ',' << gamma << ',' << format_number(sc.truth.rho) << ','
             << sc.n_reps << ',' << res.network_regenerations << '\n';
    for (const auto& rec : res.replicates)
      for (const auto& [method, mo] : rec.outputs) {
        if (!mo.ok) {
          std::string why = mo.failure;
          for (char& ch : why)
            if (ch == ',' || ch == '\n') ch = ';';
          reps << sc.scenario_id << ',' << rec.replicate << ',' << rec.network_index << ',' << method << ",,,,,,0,"
               << why << '\n';
          continue;
        }
        for (const auto& p : mo.params)
          reps << sc.scenario_id << ',' << rec.replicate << ',' << rec.network_index << ',' << method << ','
               << p.name << ',' << format_number(p.truth) << ',' << format_number(p.estimate) << ','
               << format_number(p.interval.lower) << ',' << format_number(p.interval.upper) << ",1,\n";
      }
  }

  Outputs outputs;
  outputs.add("metrics.csv", head + all.to_csv(true));
  outputs.add("replicates.csv", reps.str());
  outputs.add("scenarios.csv", cell_csv.str());
  write_outputs(o, cfg, std::move(outputs), json::object());
  if (!o.quiet) out << all.to_csv(true);
  return kExitOk;
}

int cmd_sample_latent(Options& o, const RunConfig& cfg, std::ostream& out, std::ostream&) {
  require_file(o.network, "network");
  if (!o.covariates.empty()) require_file(o.covariates, "covariates");
  NodeAttributes attrs;
  std::vector<std::string> ids;
  if (!o.covariates.empty()) {
    NodeData nodes = read_covariates(o.covariates, cfg.standardize);
    ids = nodes.ids;
    attrs = std::move(nodes.attributes);
  } else {
    ids = ids_from_edges(o.network);
    attrs.values = Matrix(static_cast<Index>(ids.size()), 0);
  }
  const RowNormalizedNetwork a = row_normalize(read_edge_list(o.network, ids));
  LatentSamplerConfig sc = cfg.sampler;
  sc.seed = derive_seed(cfg.seed, kLatentTag);
  const LatentSample sample = sample_latent_posterior(a, attrs, sc);
  const auto& d = sample.diagnostics;

  json report = base_report("sample-latent", cfg);
  report["n"] = a.n();
  report["D"] = sc.D;
  report["K"] = sample.draws.K();
  report["acceptance_positions"] = number(d.acceptance_positions);
  report["acceptance_coeffs"] = number(d.acceptance_coeffs);
  report["final_step_size"] = number(d.final_step_size);
  report["final_log_posterior"] = number(d.final_log_posterior);
  report["coeff_mean"] = std::vector<double>(d.coeff_mean.data(), d.coeff_mean.data() + d.coeff_mean.size());
  report["node_ids"] = ids;

  Outputs outputs;
  outputs.add("draws.csv", write_draws_string(sample.draws));
  outputs.add("latent_diagnostics.json", report.dump(2) + "\n");
  write_outputs(o, cfg, std::move(outputs),
                {{"network", absolute_text(o.network)}, {"covariates", absolute_text(o.covariates)}});
  if (!o.quiet)
    out << sample.draws.K() << " draws, position acceptance " << format_number(d.acceptance_positions) << "\n";
  return kExitOk;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config_file, "key = value config file");
  sub->add_option("--set", o.sets, "override one config key (key=value); repeatable");
  sub->add_option("--seed", o.seed, std::string("master seed (overrides ") + kSeedEnv + " and the config)");
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
  sub->add_option("--jobs", o.jobs, "worker threads")->capture_default_str();
  sub->add_option("--manifest", o.manifest, "re-run from a manifest.json written by the same command");
  sub->add_flag("--print-config", o.print_config, "print the resolved configuration and exit");
  sub->add_flag("-q,--quiet", o.quiet, "suppress progress and summary output");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Homophily-adjusted network autocorrelation models", "hanam"};
  app.set_version_flag("--version", std::string("hanam ") + kVersion);
  app.require_subcommand(0, 1);
  bool top_print = false;
  app.add_flag("--print-config", top_print, "print every config key with its default and exit");

  Options o;
  auto* fit = app.add_subcommand("fit", "fit a model to network, covariate and outcome files");
  add_common(fit, o);
  fit->add_option("--network", o.network, "edge list CSV (src,dst[,weight])");
  fit->add_option("--covariates", o.covariates, "node covariates CSV (id, columns...)");
  fit->add_option("--outcome", o.outcome, "outcome CSV (id,y)");
  fit->add_option("--draws", o.draws, "latent position draws; sampled when omitted (HANE/HAND)");
  fit->add_option("--family", o.family, "HANE, HAND, NAM_EFFECTS or NAM_DISTURBANCES");
  fit->add_flag("--mle", o.mle, "maximum likelihood (NAM families)");
  fit->add_flag("--standardize", o.standardize, "center and scale continuous covariates");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic network, covariates, outcome and draws");
  add_common(sim, o);

  auto* lim = app.add_subcommand("validate-limit", "check forward simulation against the limiting law");
  add_common(lim, o);

  auto* scen = app.add_subcommand("scenarios", "run the simulation grid and write metrics");
  add_common(scen, o);
  scen->add_option("--cell", o.cell, "run a single scenario id");
  scen->add_flag("--full-grid", o.full_grid, "use the full study grid (very long)");

  auto* samp = app.add_subcommand("sample-latent", "draw latent positions for a network");
  add_common(samp, o);
  samp->add_option("--network", o.network, "edge list CSV (src,dst[,weight])");
  samp->add_option("--covariates", o.covariates, "node covariates CSV; defines node order and dyadic covariates");
  samp->add_flag("--standardize", o.standardize, "center and scale continuous covariates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (top_print) {
      out << render_config(RunConfig{});
      return kExitOk;
    }
    CLI::App* chosen = nullptr;
    for (auto* s : {fit, sim, lim, scen, samp})
      if (s->parsed()) chosen = s;
    if (!chosen) {
      err << app.help();
      return kExitValidation;
    }
    o.name = chosen->get_name();
    const RunConfig cfg = resolve_config(o, err);
    if (o.print_config) {
      out << render_config(cfg);
      return kExitOk;
    }
    if (chosen == fit) return cmd_fit(o, cfg, out, err);
    if (chosen == sim) return cmd_simulate(o, cfg, out, err);
    if (chosen == lim) return cmd_validate_limit(o, cfg, out, err);
    if (chosen == scen) return cmd_scenarios(o, cfg, out, err);
    return cmd_sample_latent(o, cfg, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e.kind()) ? kExitValidation : kExitNumerical;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace hanam::cli
