#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hanam/estimation.hpp"
#include "hanam/influence_models.hpp"
#include "hanam/latent_approx.hpp"
#include "hanam/net_core.hpp"

namespace hanam {

// ---------------------------------------------------------------------------
// Synthetic networks

/// Latent positions come from a Gaussian mixture whose layout is fixed by `layout_seed`, so every
/// generated network shares the same U (as when positions are taken from one exemplar fit);
/// covariates and edges are redrawn per network.
struct NetworkParams {
  int n = 150;
  int D = 3;
  int n_clusters = 6;
  double cluster_radius = 6.0;  // cluster centres drawn N(0, radius^2 / D) per coordinate
  double cluster_scale = 1.0;   // within-cluster sd
  Matrix cluster_means;         // optional n_clusters x D override
  std::uint64_t layout_seed = 7;
  double x_mean = 2.0;
  double x_sd = 1.0;
  double theta_x = 0.5;  // coefficient of |x_i - x_j|
  double target_out_degree = 5.0;
  std::optional<double> edge_intercept;  // skips calibration when set

  void validate() const;
};

struct GeneratedNetwork {
  Adjacency adjacency;
  Vector x;  // raw node covariate
  Matrix U;
  std::vector<int> cluster;
  double edge_intercept = 0.0;
};

/// Shared latent layout for the given parameters (depends only on layout_seed and shape).
Matrix latent_layout(const NetworkParams& params, std::vector<int>* cluster = nullptr);

/// logit P(A_ij = 1) = theta_0 - |u_i - u_j| + theta_x |x_i - x_j|, theta_0 calibrated to the target
/// mean out-degree unless fixed. Throws EmptyNetwork.
GeneratedNetwork generate_network(const NetworkParams& params, std::uint64_t seed);

/// Intercept-plus-covariate design [1, x].
Matrix design_with_intercept(const Vector& x);

// ---------------------------------------------------------------------------
// Outcome processes

enum class OutcomeLaw { Effects, Disturbances };
std::string_view to_string(OutcomeLaw law);
OutcomeLaw parse_outcome_law(std::string_view text);

struct TrueParams {
  Vector beta;   // includes the intercept
  Vector gamma;  // length D
  double rho = 0.0;
  double sigma2 = 1.0;
};

struct LimitingMoments {
  Vector mean;
  Matrix cov;
};

/// Effects: N(M(U gamma + X beta), s^2 M M'); disturbances: N(U gamma + X beta, s^2 M M'), M = (I - rho A)^{-1}.
LimitingMoments limiting_moments(const RowNormalizedNetwork& a, const Matrix& U, const Matrix& X,
                                 const TrueParams& theta, OutcomeLaw law, double scale2);

/// One exact draw from the limiting law with scale sigma2. Throws Unstable.
Vector draw_limiting_outcome(const RowNormalizedNetwork& a, const Matrix& U, const Matrix& X,
                             const TrueParams& theta, OutcomeLaw law, std::uint64_t seed);

struct ForwardSimConfig {
  int T = 500;
  double sigma_alpha = 1.0;   // limit of the persistent-noise scale
  double sigma_alpha0 = 1.0;  // sigma_alpha_t = sigma_alpha + (sigma_alpha0 - sigma_alpha) alpha_decay^t
  double alpha_decay = 0.97;
  double sigma_eps0 = 1.0;    // sigma_eps_t = sigma_eps0 * decay^t
  double decay = 0.97;
  bool constant_eps = false;  // sigma_eps_t = sigma_eps0 for all t (breaks the vanishing-noise condition)
  Vector y0;                  // empty means zeros
  int stride = 0;             // 0 keeps only the final state
  std::uint64_t seed = 1;

  void validate() const;
  double sigma_alpha_at(int t) const;
  double sigma_eps_at(int t) const;
};

struct Trajectory {
  std::vector<int> times;
  std::vector<Vector> states;
  const Vector& final_state() const { return states.back(); }
};

/// Iterates y_t = z + rho A y_{t-1} + s_a,t alpha + s_e,t eps_t (effects) or
/// y_t = z + rho A (y_{t-1} - z) + ... (disturbances), z = U gamma + X beta. Throws Diverging.
Trajectory forward_simulate(const RowNormalizedNetwork& a, const Matrix& U, const Matrix& X,
                            const TrueParams& theta, OutcomeLaw law, const ForwardSimConfig& fwd);

struct LimitReport {
  int n_paths = 0;
  double threshold = 4.0;
  double max_mean_z = 0.0;
  double max_cov_z = 0.0;
  double cov_fraction_within = 0.0;  // over the n(n+1)/2 unique entries
  bool mean_ok = false;
  bool cov_ok = false;
  bool pass = false;
  Vector empirical_mean;
  Vector target_mean;
  Matrix empirical_cov;
  Matrix target_cov;
};

/// Compares y_T over independent paths with the limiting mean and sigma_alpha^2 M M'.
LimitReport validate_limit(const RowNormalizedNetwork& a, const Matrix& U, const Matrix& X,
                           const TrueParams& theta, OutcomeLaw law, const ForwardSimConfig& fwd,
                           int n_paths, double threshold = 4.0, double min_cov_fraction = 0.95);

// ---------------------------------------------------------------------------
// Scenario study

enum class LatentSource { Sampler, OraclePerturbed, File };
enum class NetworkSource { Regenerate, FixedPool };
std::string_view to_string(LatentSource s);
LatentSource parse_latent_source(std::string_view text);
std::string_view to_string(NetworkSource s);
NetworkSource parse_network_source(std::string_view text);

struct ScenarioConfig {
  int scenario_id = 0;
  OutcomeLaw law = OutcomeLaw::Effects;
  TrueParams truth;
  int n_reps = 50;
  NetworkSource network_source = NetworkSource::FixedPool;
  int pool_size = 20;
  int max_network_attempts = 20;
  NetworkParams net;
  LatentSource latent_source = LatentSource::OraclePerturbed;
  int latent_draws = 200;
  double oracle_tau = 0.1;
  LatentSamplerConfig sampler;
  std::filesystem::path draws_dir;  // draws_<k>.csv per network index when latent_source == File
  Priors priors;
  FitConfig fit;
  std::uint64_t master_seed = 20240501;

  void validate() const;
  /// Pool slot used by replicate r.
  int network_index(int replicate) const;
};

struct ParameterEstimate {
  std::string name;
  double truth = 0.0;
  double estimate = 0.0;
  Interval interval;
};

struct MethodOutput {
  bool ok = false;
  std::string failure;
  std::vector<ParameterEstimate> params;
};

struct ReplicateContext {
  const ScenarioConfig& scenario;
  int replicate;
  const RowNormalizedNetwork& network;
  const Dataset& data;
  std::shared_ptr<const MatrixNormalApprox> latent;
  FitConfig fit;  // seeded for this replicate
};

struct MethodSpec {
  std::string name;
  std::function<MethodOutput(const ReplicateContext&)> run;
};

/// HANE, HAND, NAM_BAYES (NAM family matching the outcome law) or NAM_MLE.
MethodSpec builtin_method(const std::string& name);
std::vector<MethodSpec> builtin_methods(const std::vector<std::string>& names);

/// Converts a finished fit into per-parameter rows (beta_j and rho); fails on non-convergence
/// or missing intervals.
MethodOutput summarize_fit(const FitResult& fit, const TrueParams& truth);

struct ReplicateRecord {
  int replicate = 0;
  int network_index = 0;
  int network_attempt = 0;
  std::vector<std::pair<std::string, MethodOutput>> outputs;
};

struct MetricsRow {
  int scenario_id = 0;
  std::string method;
  std::string parameter;
  double bias = 0.0;
  double mse = 0.0;
  double coverage = 0.0;
  double mcse_bias = 0.0;
  double variance = 0.0;  // population variance of the estimates
  int n_ok = 0;
  int n_failed = 0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  static constexpr const char* kHeader = "scenario_id,method,parameter,bias,mse,coverage,mcse_bias,n_ok,n_failed";
  std::string to_csv(bool with_header = true) const;
  const MetricsRow* find(int scenario_id, const std::string& method, const std::string& parameter) const;
};

MetricsTable aggregate_metrics(int scenario_id, const std::vector<std::string>& methods,
                               const std::vector<ReplicateRecord>& records);

/// Network, data and latent summary for one pool slot; deterministic in (master_seed, slot).
struct PoolEntry {
  int index = 0;
  int attempt = 0;
  std::shared_ptr<const RowNormalizedNetwork> network;
  Vector x;
  Matrix U;
  std::shared_ptr<const MatrixNormalApprox> latent;
};
PoolEntry build_pool_entry(const ScenarioConfig& sc, int index);

ReplicateRecord run_replicate(const ScenarioConfig& sc, const std::vector<MethodSpec>& methods, int replicate,
                              const PoolEntry* entry = nullptr);

struct ScenarioResult {
  MetricsTable metrics;
  std::vector<ReplicateRecord> replicates;
  int network_regenerations = 0;
};

ScenarioResult run_scenario(const ScenarioConfig& sc, const std::vector<MethodSpec>& methods, int jobs = 1);

/// Cartesian grid over law x gamma x beta_1 x rho; scenario ids follow that nesting order.
struct GridConfig {
  ScenarioConfig base;
  std::vector<OutcomeLaw> laws{OutcomeLaw::Effects};
  std::vector<double> rhos{0.0, 0.3, 0.6};
  std::vector<double> beta1s{0.5};
  std::vector<Vector> gammas;
  double beta0 = 0.5;
  std::vector<std::string> methods{"HANE", "NAM_BAYES"};

  std::vector<ScenarioConfig> expand() const;
};

/// Runs `f(i)` for i in [0, count) on `jobs` threads; exceptions are rethrown after joining.
void parallel_for(int count, int jobs, const std::function<void(int)>& f);

}  // namespace hanam
