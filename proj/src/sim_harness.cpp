#include "hanam/sim_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "hanam/draws_io.hpp"
#include "hanam/errors.hpp"

namespace hanam {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kNetworkTag = 0x6e6574;
constexpr std::uint64_t kLatentTag = 0x6c6174;
constexpr std::uint64_t kOutcomeTag = 0x6f7574;
constexpr std::uint64_t kFitTag = 0x666974;
constexpr std::uint64_t kLayoutTag = 0x6c6179;

constexpr double kDivergenceBound = 1e12;

bool all_finite(const Vector& v) { return v.allFinite(); }

void check_shapes(const RowNormalizedNetwork& a, const Matrix& U, const Matrix& X, const TrueParams& theta) {
  const Index n = a.n();
  if (U.rows() != n || X.rows() != n)
    fail(ErrorKind::BadShape, "U and X must have " + std::to_string(n) + " rows");
  if (U.cols() != theta.gamma.size())
    fail(ErrorKind::BadShape, "gamma has length " + std::to_string(theta.gamma.size()) + ", U has " +
                                  std::to_string(U.cols()) + " columns");
  if (X.cols() != theta.beta.size())
    fail(ErrorKind::BadShape, "beta has length " + std::to_string(theta.beta.size()) + ", X has " +
                                  std::to_string(X.cols()) + " columns");
  if (!std::isfinite(theta.rho) || !(theta.sigma2 >= 0.0) || !std::isfinite(theta.sigma2))
    fail(ErrorKind::InvalidArgument, "rho and sigma2 must be finite, sigma2 >= 0");
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic networks

void NetworkParams::validate() const {
  if (n < 2) fail(ErrorKind::InvalidArgument, "network size n must be at least 2");
  if (D < 1) fail(ErrorKind::InvalidArgument, "latent dimension D must be positive");
  if (n_clusters < 1) fail(ErrorKind::InvalidArgument, "n_clusters must be positive");
  if (!(cluster_radius >= 0.0) || !(cluster_scale >= 0.0) || !std::isfinite(cluster_radius) ||
      !std::isfinite(cluster_scale))
    fail(ErrorKind::InvalidArgument, "cluster radius and scale must be finite and nonnegative");
  if (cluster_means.size() != 0 && (cluster_means.rows() != n_clusters || cluster_means.cols() != D))
    fail(ErrorKind::BadShape, "cluster_means must be n_clusters x D");
  if (!std::isfinite(x_mean) || !(x_sd >= 0.0) || !std::isfinite(theta_x))
    fail(ErrorKind::InvalidArgument, "covariate parameters must be finite, x_sd >= 0");
  if (!(target_out_degree > 0.0) || !(target_out_degree < n - 1))
    fail(ErrorKind::InvalidArgument, "target_out_degree must lie in (0, n - 1)");
  if (edge_intercept && std::isnan(*edge_intercept))
    fail(ErrorKind::InvalidArgument, "edge_intercept must not be NaN");
}

Matrix latent_layout(const NetworkParams& params, std::vector<int>* cluster) {
  params.validate();
  Rng rng(derive_seed(params.layout_seed, kLayoutTag));
  Matrix means = params.cluster_means;
  if (means.size() == 0)
    means = standard_normal_matrix(params.n_clusters, params.D, rng) *
            (params.cluster_radius / std::sqrt(static_cast<double>(params.D)));
  Matrix U(params.n, params.D);
  std::vector<int> labels(params.n);
  for (int i = 0; i < params.n; ++i) {
    labels[i] = i % params.n_clusters;
    U.row(i) = means.row(labels[i]) + params.cluster_scale * standard_normal_vector(params.D, rng).transpose();
  }
  if (cluster) *cluster = std::move(labels);
  return U;
}

GeneratedNetwork generate_network(const NetworkParams& params, std::uint64_t seed) {
  std::vector<int> cluster;
  Matrix U = latent_layout(params, &cluster);
  const int n = params.n;
  Rng rng(seed);
  Vector x(n);
  {
    std::normal_distribution<double> normal(params.x_mean, params.x_sd);
    for (int i = 0; i < n; ++i) x(i) = normal(rng);
  }

  Matrix c = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) c(i, j) = -(U.row(i) - U.row(j)).norm() + params.theta_x * std::abs(x(i) - x(j));

  double theta0;
  if (params.edge_intercept) {
    theta0 = *params.edge_intercept;
  } else {
    auto mean_degree = [&](double t) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j) s += logistic(t + c(i, j));
      return s / n;
    };
    double lo = -100.0, hi = 100.0;
    for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mean_degree(mid) < params.target_out_degree ? lo : hi) = mid;
    }
    theta0 = 0.5 * (lo + hi);
  }

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix w = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && unif(rng) < logistic(theta0 + c(i, j))) w(i, j) = 1.0;
  if ((w.array() > 0.0).count() == 0)
    fail(ErrorKind::EmptyNetwork, "no edges were drawn (edge intercept " + format_number(theta0) + ")");

  return GeneratedNetwork{Adjacency(std::move(w)), std::move(x), std::move(U), std::move(cluster), theta0};
}

Matrix design_with_intercept(const Vector& x) {
  Matrix X(x.size(), 2);
  X.col(0).setOnes();
  X.col(1) = x;
  return X;
}

// ---------------------------------------------------------------------------
// Outcome processes

std::string_view to_string(OutcomeLaw law) { return law == OutcomeLaw::Effects ? "effects" : "disturbances"; }

OutcomeLaw parse_outcome_law(std::string_view text) {
  if (text == "effects" || text == "HANE") return OutcomeLaw::Effects;
  if (text == "disturbances" || text == "HAND") return OutcomeLaw::Disturbances;
  fail(ErrorKind::InvalidArgument, "unknown outcome law '" + std::string(text) + "' (expected effects or disturbances)");
}

LimitingMoments limiting_moments(const RowNormalizedNetwork& a, const Matrix& U, const Matrix& X,
                                 const TrueParams& theta, OutcomeLaw law, double scale2) {
  check_shapes(a, U, X, theta);
  if (!check_stability(theta.rho, a))
    fail(ErrorKind::Unstable, "|rho| * lambda_1(A) >= 1 for rho = " + format_number(theta.rho));
  const Index n = a.n();
  const Matrix B = Matrix::Identity(n, n) - theta.rho * a.matrix();
  const Matrix M = B.partialPivLu().inverse();
  const Vector z = U * theta.gamma + X * theta.beta;
  LimitingMoments out;
  out.mean = law == OutcomeLaw::Effects ? Vector(M * z) : z;
  out.cov = scale2 * M * M.transpose();
  return out;
}

Vector draw_limiting_outcome(const RowNormalizedNetwork& a, const Matrix& U, const Matrix& X,
                             const TrueParams& theta, OutcomeLaw law, std::uint64_t seed) {
  check_shapes(a, U, X, theta);
  if (!check_stability(theta.rho, a))
    fail(ErrorKind::Unstable, "|rho| * lambda_1(A) >= 1 for rho = " + format_number(theta.rho));
  const Index n = a.n();
  const Matrix B = Matrix::Identity(n, n) - theta.rho * a.matrix();
  const auto lu = B.partialPivLu();
  Rng rng(seed);
  const Vector eps = standard_normal_vector(n, rng);
  // M eps has covariance M M', so this is an exact draw without factoring M M'.
  const Vector noise = std::sqrt(theta.sigma2) * lu.solve(eps);
  const Vector z = U * theta.gamma + X * theta.beta;
  return law == OutcomeLaw::Effects ? Vector(lu.solve(z) + noise) : Vector(z + noise);
}

void ForwardSimConfig::validate() const {
  if (T < 1) fail(ErrorKind::InvalidArgument, "horizon T must be at least 1");
  if (!(sigma_alpha >= 0.0) || !std::isfinite(sigma_alpha) || !(sigma_alpha0 >= 0.0) || !std::isfinite(sigma_alpha0))
    fail(ErrorKind::InvalidArgument, "sigma_alpha schedule must be finite and nonnegative");
  if (!(sigma_eps0 >= 0.0) || !std::isfinite(sigma_eps0))
    fail(ErrorKind::InvalidArgument, "sigma_eps0 must be finite and nonnegative");
  if (!(decay > 0.0 && decay < 1.0)) fail(ErrorKind::InvalidArgument, "decay must lie in (0, 1)");
  if (!(alpha_decay >= 0.0 && alpha_decay < 1.0)) fail(ErrorKind::InvalidArgument, "alpha_decay must lie in [0, 1)");
  if (y0.size() > 0 && !all_finite(y0)) fail(ErrorKind::InvalidArgument, "y0 must be finite");
  if (stride < 0) fail(ErrorKind::InvalidArgument, "stride must be nonnegative");
}

double ForwardSimConfig::sigma_alpha_at(int t) const {
  return sigma_alpha + (sigma_alpha0 - sigma_alpha) * std::pow(alpha_decay, t);
}

double ForwardSimConfig::sigma_eps_at(int t) const {
  return constant_eps ? sigma_eps0 : sigma_eps0 * std::pow(decay, t);
}

Trajectory forward_simulate(const RowNormalizedNetwork& a, const Matrix& U, const Matrix& X,
                            const TrueParams& theta, OutcomeLaw law, const ForwardSimConfig& fwd) {
  fwd.validate();
  check_shapes(a, U, X, theta);
  const Index n = a.n();
  if (fwd.y0.size() != 0 && fwd.y0.size() != n) fail(ErrorKind::BadShape, "y0 must have length n");

  Rng rng(fwd.seed);
  const Vector alpha = standard_normal_vector(n, rng);
  const Vector z = U * theta.gamma + X * theta.beta;
  const Matrix rhoA = theta.rho * a.matrix();
  Vector y = fwd.y0.size() ? fwd.y0 : Vector::Zero(n);

  Trajectory out;
  Vector eps(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 1; t <= fwd.T; ++t) {
    for (Index i = 0; i < n; ++i) eps(i) = normal(rng);
    Vector next = law == OutcomeLaw::Effects ? Vector(z + rhoA * y) : Vector(z + rhoA * (y - z));
    next += fwd.sigma_alpha_at(t) * alpha + fwd.sigma_eps_at(t) * eps;
    y = std::move(next);
    const double sup = y.cwiseAbs().maxCoeff();
    if (!(sup <= kDivergenceBound))
      fail(ErrorKind::Diverging, "|y_t| exceeded 1e12 at t = " + std::to_string(t));
    if ((fwd.stride > 0 && t % fwd.stride == 0) || t == fwd.T) {
      out.times.push_back(t);
      out.states.push_back(y);
    }
  }
  return out;
}

LimitReport validate_limit(const RowNormalizedNetwork& a, const Matrix& U, const Matrix& X,
                           const TrueParams& theta, OutcomeLaw law, const ForwardSimConfig& fwd,
                           int n_paths, double threshold, double min_cov_fraction) {
  if (n_paths < 2) fail(ErrorKind::InvalidArgument, "n_paths must be at least 2");
  fwd.validate();
  const Index n = a.n();
  const LimitingMoments target = limiting_moments(a, U, X, theta, law, fwd.sigma_alpha * fwd.sigma_alpha);

  Matrix Y(n, n_paths);
  ForwardSimConfig path_cfg = fwd;
  path_cfg.stride = 0;
  for (int k = 0; k < n_paths; ++k) {
    path_cfg.seed = derive_seed(fwd.seed, static_cast<std::uint64_t>(k));
    Y.col(k) = forward_simulate(a, U, X, theta, law, path_cfg).final_state();
  }

  LimitReport rep;
  rep.n_paths = n_paths;
  rep.threshold = threshold;
  rep.target_mean = target.mean;
  rep.target_cov = target.cov;
  rep.empirical_mean = Y.rowwise().mean();
  const Matrix centered = Y.colwise() - rep.empirical_mean;
  rep.empirical_cov = centered * centered.transpose() / static_cast<double>(n_paths - 1);

  const double N = n_paths;
  auto zscore = [](double diff, double se) {
    if (se > 0.0) return std::abs(diff) / se;
    return std::abs(diff) < 1e-10 ? 0.0 : std::numeric_limits<double>::infinity();
  };
  for (Index i = 0; i < n; ++i) {
    const double z = zscore(rep.empirical_mean(i) - target.mean(i), std::sqrt(target.cov(i, i) / N));
    rep.max_mean_z = std::max(rep.max_mean_z, z);
  }
  std::size_t within = 0, total = 0;
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i <= j; ++i) {
      const double s = target.cov(i, j);
      const double se = std::sqrt((target.cov(i, i) * target.cov(j, j) + s * s) / N);
      const double z = zscore(rep.empirical_cov(i, j) - s, se);
      rep.max_cov_z = std::max(rep.max_cov_z, z);
      within += z <= threshold;
      ++total;
    }
  rep.cov_fraction_within = static_cast<double>(within) / static_cast<double>(total);
  rep.mean_ok = rep.max_mean_z <= threshold;
  rep.cov_ok = rep.cov_fraction_within >= min_cov_fraction;
  rep.pass = rep.mean_ok && rep.cov_ok;
  return rep;
}

// ---------------------------------------------------------------------------
// Scenario study

std::string_view to_string(LatentSource s) {
  switch (s) {
    case LatentSource::Sampler: return "sampler";
    case LatentSource::OraclePerturbed: return "oracle_perturbed";
    case LatentSource::File: return "file";
  }
  return "?";
}

LatentSource parse_latent_source(std::string_view text) {
  if (text == "sampler") return LatentSource::Sampler;
  if (text == "oracle_perturbed") return LatentSource::OraclePerturbed;
  if (text == "file") return LatentSource::File;
  fail(ErrorKind::InvalidArgument,
       "unknown latent source '" + std::string(text) + "' (expected sampler, oracle_perturbed or file)");
}

std::string_view to_string(NetworkSource s) { return s == NetworkSource::Regenerate ? "regenerate" : "fixed_pool"; }

NetworkSource parse_network_source(std::string_view text) {
  if (text == "regenerate") return NetworkSource::Regenerate;
  if (text == "fixed_pool") return NetworkSource::FixedPool;
  fail(ErrorKind::InvalidArgument,
       "unknown network source '" + std::string(text) + "' (expected regenerate or fixed_pool)");
}

void ScenarioConfig::validate() const {
  net.validate();
  if (truth.beta.size() != 2)
    fail(ErrorKind::BadShape, "beta must hold (beta0, beta1) for the intercept-plus-covariate design");
  if (truth.gamma.size() != net.D)
    fail(ErrorKind::BadShape, "gamma has length " + std::to_string(truth.gamma.size()) + " but D = " +
                                  std::to_string(net.D));
  if (!truth.beta.allFinite() || !truth.gamma.allFinite() || !std::isfinite(truth.rho))
    fail(ErrorKind::InvalidArgument, "true parameters must be finite");
  if (!(truth.sigma2 > 0.0) || !std::isfinite(truth.sigma2))
    fail(ErrorKind::InvalidArgument, "sigma2 must be positive");
  if (n_reps < 1) fail(ErrorKind::InvalidArgument, "n_reps must be positive");
  if (pool_size < 1) fail(ErrorKind::InvalidArgument, "pool_size must be positive");
  if (max_network_attempts < 1) fail(ErrorKind::InvalidArgument, "max_network_attempts must be positive");
  if (latent_draws < 2) fail(ErrorKind::InvalidArgument, "latent_draws must be at least 2");
  if (!(oracle_tau > 0.0) || !std::isfinite(oracle_tau))
    fail(ErrorKind::InvalidArgument, "oracle_tau must be positive");
  if (latent_source == LatentSource::File && draws_dir.empty())
    fail(ErrorKind::InvalidArgument, "latent_source=file requires draws_dir");
  if (latent_source == LatentSource::Sampler) sampler.validate();
  priors.validate();
  fit.validate();
}

int ScenarioConfig::network_index(int replicate) const {
  return network_source == NetworkSource::FixedPool ? replicate % pool_size : replicate;
}

namespace {

std::shared_ptr<const MatrixNormalApprox> summarize_latent(const ScenarioConfig& sc, const GeneratedNetwork& g,
                                                           const RowNormalizedNetwork& a, int index,
                                                           std::uint64_t seed) {
  LatentDraws draws;
  switch (sc.latent_source) {
    case LatentSource::OraclePerturbed:
      draws = perturbed_draws(g.U, sc.latent_draws, sc.oracle_tau, seed);
      break;
    case LatentSource::Sampler: {
      LatentSamplerConfig cfg = sc.sampler;
      cfg.D = sc.net.D;
      cfg.seed = seed;
      NodeAttributes attrs{Matrix(g.x), {false}};
      draws = sample_latent_posterior(a, attrs, cfg).draws;
      break;
    }
    case LatentSource::File: {
      const auto path = sc.draws_dir / ("draws_" + std::to_string(index) + ".csv");
      draws = read_draws(path);
      if (draws.n() != a.n() || draws.D() != sc.net.D)
        fail(ErrorKind::BadShape, path.string() + ": expected draws of shape " + std::to_string(a.n()) + " x " +
                                      std::to_string(sc.net.D));
      break;
    }
  }
  if (!draws.aligned) draws = procrustes_align(draws);
  return std::make_shared<const MatrixNormalApprox>(fit_matrix_normal(draws));
}

}  // namespace

PoolEntry build_pool_entry(const ScenarioConfig& sc, int index) {
  std::string last_reason;
  for (int attempt = 0; attempt < sc.max_network_attempts; ++attempt) {
    const auto seed = derive_seed(sc.master_seed, kNetworkTag, static_cast<std::uint64_t>(index),
                                  static_cast<std::uint64_t>(attempt));
    std::optional<GeneratedNetwork> generated;
    try {
      generated = generate_network(sc.net, seed);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyNetwork) throw;
      last_reason = e.what();
      continue;
    }
    GeneratedNetwork& g = *generated;
    auto a = std::make_shared<const RowNormalizedNetwork>(row_normalize(g.adjacency));
    if (!check_stability(sc.truth.rho, *a)) {
      last_reason = "rho = " + format_number(sc.truth.rho) + " is unstable on the generated network";
      continue;
    }
    PoolEntry e;
    e.index = index;
    e.attempt = attempt;
    e.latent = summarize_latent(sc, g, *a, index,
                                derive_seed(sc.master_seed, kLatentTag, static_cast<std::uint64_t>(index),
                                            static_cast<std::uint64_t>(attempt)));
    e.network = std::move(a);
    e.x = std::move(g.x);
    e.U = std::move(g.U);
    return e;
  }
  fail(ErrorKind::Unstable, "network slot " + std::to_string(index) + ": no usable network after " +
                                std::to_string(sc.max_network_attempts) + " attempts (" + last_reason + ")");
}

MethodOutput summarize_fit(const FitResult& fit, const TrueParams& truth) {
  MethodOutput out;
  if (!fit.converged) {
    out.failure = "optimizer did not converge (projected gradient " + format_number(fit.pg_norm) + ")";
    return out;
  }
  if (!fit.intervals) {
    out.failure = fit.interval_error.empty() ? "no intervals" : fit.interval_error;
    return out;
  }
  const auto& iv = *fit.intervals;
  for (Index j = 0; j < fit.theta_map.beta.size(); ++j)
    out.params.push_back({"beta" + std::to_string(j), j < truth.beta.size() ? truth.beta(j) : 0.0,
                          fit.theta_map.beta(j), iv.beta[static_cast<std::size_t>(j)]});
  out.params.push_back({"rho", truth.rho, fit.theta_map.rho, iv.rho});
  out.ok = true;
  return out;
}

MethodSpec builtin_method(const std::string& name) {
  if (name == "HANE" || name == "HAND") {
    const ModelKind kind = name == "HANE" ? ModelKind::HANE : ModelKind::HAND;
    return {name, [kind](const ReplicateContext& ctx) {
              const auto family = ModelFamily::make(kind, ctx.latent);
              return summarize_fit(map_fit(ctx.data, ctx.network, family, ctx.scenario.priors, ctx.fit),
                                   ctx.scenario.truth);
            }};
  }
  if (name == "NAM_BAYES") {
    return {name, [](const ReplicateContext& ctx) {
              const auto family = ctx.scenario.law == OutcomeLaw::Effects ? ModelFamily::nam_effects()
                                                                          : ModelFamily::nam_disturbances();
              return summarize_fit(map_fit(ctx.data, ctx.network, family, ctx.scenario.priors, ctx.fit),
                                   ctx.scenario.truth);
            }};
  }
  if (name == "NAM_MLE") {
    return {name, [](const ReplicateContext& ctx) {
              const auto kind =
                  ctx.scenario.law == OutcomeLaw::Effects ? ModelKind::NamEffects : ModelKind::NamDisturbances;
              return summarize_fit(nam_mle(ctx.data, ctx.network, kind, ctx.fit), ctx.scenario.truth);
            }};
  }
  fail(ErrorKind::InvalidArgument,
       "unknown method '" + name + "' (expected HANE, HAND, NAM_BAYES or NAM_MLE)");
}

std::vector<MethodSpec> builtin_methods(const std::vector<std::string>& names) {
  if (names.empty()) fail(ErrorKind::InvalidArgument, "at least one method is required");
  std::vector<MethodSpec> out;
  for (const auto& n : names) out.push_back(builtin_method(n));
  return out;
}

ReplicateRecord run_replicate(const ScenarioConfig& sc, const std::vector<MethodSpec>& methods, int replicate,
                              const PoolEntry* entry) {
  ReplicateRecord rec;
  rec.replicate = replicate;
  rec.network_index = sc.network_index(replicate);

  PoolEntry own;
  if (!entry) {
    own = build_pool_entry(sc, rec.network_index);
    entry = &own;
  }
  rec.network_attempt = entry->attempt;

  const auto s = static_cast<std::uint64_t>(sc.scenario_id);
  const auto r = static_cast<std::uint64_t>(replicate);
  Dataset data;
  data.X = design_with_intercept(entry->x);
  data.column_names = {"intercept", "x"};
  data.y = draw_limiting_outcome(*entry->network, entry->U, data.X, sc.truth, sc.law,
                                 derive_seed(sc.master_seed, kOutcomeTag, s, r));

  FitConfig fit = sc.fit;
  fit.seed = derive_seed(sc.master_seed, kFitTag, s, r);
  const ReplicateContext ctx{sc, replicate, *entry->network, data, entry->latent, fit};
  for (const auto& m : methods) {
    MethodOutput out;
    try {
      out = m.run(ctx);
    } catch (const std::exception& e) {
      out = MethodOutput{};
      out.failure = e.what();
    }
    rec.outputs.emplace_back(m.name, std::move(out));
  }
  return rec;
}

std::string MetricsTable::to_csv(bool with_header) const {
  std::ostringstream os;
  if (with_header) os << kHeader << '\n';
  for (const auto& r : rows)
    os << r.scenario_id << ',' << r.method << ',' << r.parameter << ',' << format_number(r.bias) << ','
       << format_number(r.mse) << ',' << format_number(r.coverage) << ',' << format_number(r.mcse_bias) << ','
       << r.n_ok << ',' << r.n_failed << '\n';
  return os.str();
}

const MetricsRow* MetricsTable::find(int scenario_id, const std::string& method, const std::string& parameter) const {
  for (const auto& r : rows)
    if (r.scenario_id == scenario_id && r.method == method && r.parameter == parameter) return &r;
  return nullptr;
}

MetricsTable aggregate_metrics(int scenario_id, const std::vector<std::string>& methods,
                               const std::vector<ReplicateRecord>& records) {
  MetricsTable table;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& method : methods) {
    // Parameter names in first-seen order across successful outputs.
    std::vector<std::string> names;
    for (const auto& rec : records)
      for (const auto& [m, out] : rec.outputs)
        if (m == method && out.ok)
          for (const auto& p : out.params)
            if (std::find(names.begin(), names.end(), p.name) == names.end()) names.push_back(p.name);

    int n_failed = 0;
    for (const auto& rec : records)
      for (const auto& [m, out] : rec.outputs)
        if (m == method && !out.ok) ++n_failed;
    if (names.empty()) {
      table.rows.push_back({scenario_id, method, "rho", nan, nan, nan, nan, nan, 0, n_failed});
      continue;
    }

    for (const auto& name : names) {
      std::vector<double> est, err;
      int covered = 0;
      for (const auto& rec : records)
        for (const auto& [m, out] : rec.outputs) {
          if (m != method || !out.ok) continue;
          for (const auto& p : out.params)
            if (p.name == name) {
              est.push_back(p.estimate);
              err.push_back(p.estimate - p.truth);
              covered += p.interval.contains(p.truth);
            }
        }
      MetricsRow row;
      row.scenario_id = scenario_id;
      row.method = method;
      row.parameter = name;
      row.n_ok = static_cast<int>(est.size());
      row.n_failed = n_failed;
      const double k = static_cast<double>(est.size());
      double sum_e = 0.0, sum_e2 = 0.0, sum_x = 0.0;
      for (std::size_t i = 0; i < est.size(); ++i) {
        sum_e += err[i];
        sum_e2 += err[i] * err[i];
        sum_x += est[i];
      }
      const double mean_x = sum_x / k;
      double ss = 0.0;
      for (double v : est) ss += (v - mean_x) * (v - mean_x);
      row.bias = sum_e / k;
      row.mse = sum_e2 / k;
      row.coverage = covered / k;
      row.variance = ss / k;
      row.mcse_bias = est.size() >= 2 ? std::sqrt(ss / (k - 1.0) / k) : nan;
      table.rows.push_back(row);
    }
  }
  return table;
}

void parallel_for(int count, int jobs, const std::function<void(int)>& f) {
  if (count <= 0) return;
  jobs = std::clamp(jobs, 1, count);
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  int failed_index = count;
  std::exception_ptr failure;
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(mu);
        // Keep the lowest failing index so the reported error does not depend on scheduling.
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> threads;
  for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

ScenarioResult run_scenario(const ScenarioConfig& sc, const std::vector<MethodSpec>& methods, int jobs) {
  sc.validate();
  if (methods.empty()) fail(ErrorKind::InvalidArgument, "at least one method is required");

  const int n_slots = sc.network_source == NetworkSource::FixedPool ? std::min(sc.pool_size, sc.n_reps) : sc.n_reps;
  std::vector<std::optional<PoolEntry>> pool(static_cast<std::size_t>(n_slots));
  std::vector<std::string> pool_errors(static_cast<std::size_t>(n_slots));
  parallel_for(n_slots, jobs, [&](int k) {
    try {
      pool[static_cast<std::size_t>(k)] = build_pool_entry(sc, k);
    } catch (const std::exception& e) {
      pool_errors[static_cast<std::size_t>(k)] = e.what();
    }
  });

  ScenarioResult result;
  for (const auto& e : pool)
    if (e) result.network_regenerations += e->attempt;

  result.replicates.resize(static_cast<std::size_t>(sc.n_reps));
  parallel_for(sc.n_reps, jobs, [&](int r) {
    const auto k = static_cast<std::size_t>(sc.network_index(r));
    auto& rec = result.replicates[static_cast<std::size_t>(r)];
    if (!pool[k]) {
      rec.replicate = r;
      rec.network_index = static_cast<int>(k);
      for (const auto& m : methods) {
        MethodOutput out;
        out.failure = pool_errors[k];
        rec.outputs.emplace_back(m.name, std::move(out));
      }
      return;
    }
    try {
      rec = run_replicate(sc, methods, r, &*pool[k]);
    } catch (const std::exception& e) {
      rec = ReplicateRecord{};
      rec.replicate = r;
      rec.network_index = static_cast<int>(k);
      for (const auto& m : methods) {
        MethodOutput out;
        out.failure = e.what();
        rec.outputs.emplace_back(m.name, std::move(out));
      }
    }
  });

  std::vector<std::string> names;
  for (const auto& m : methods) names.push_back(m.name);
  result.metrics = aggregate_metrics(sc.scenario_id, names, result.replicates);
  return result;
}

std::vector<ScenarioConfig> GridConfig::expand() const {
  if (laws.empty() || rhos.empty() || beta1s.empty())
    fail(ErrorKind::InvalidArgument, "grid axes must be non-empty");
  const std::vector<Vector> gamma_axis = gammas.empty() ? std::vector<Vector>{base.truth.gamma} : gammas;
  std::vector<ScenarioConfig> out;
  int id = 0;
  for (auto law : laws)
    for (const auto& gamma : gamma_axis)
      for (double b1 : beta1s)
        for (double rho : rhos) {
          ScenarioConfig sc = base;
          sc.scenario_id = id++;
          sc.law = law;
          sc.truth.beta = Vector(2);
          sc.truth.beta << beta0, b1;
          sc.truth.gamma = gamma;
          sc.truth.rho = rho;
          out.push_back(std::move(sc));
        }
  return out;
}

}  // namespace hanam
