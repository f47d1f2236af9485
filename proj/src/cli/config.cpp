#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "hanam/cli.hpp"
#include "hanam/draws_io.hpp"
#include "hanam/errors.hpp"

namespace hanam::cli {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& what) {
  fail(ErrorKind::InvalidArgument, "config key '" + key + "': '" + value + "' is not " + what);
}

double to_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    bad_value(key, text, "a finite number");
  return v;
}

long long to_int(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) bad_value(key, text, "an integer");
  return v;
}

int to_int32(const std::string& key, const std::string& text) {
  const long long v = to_int(key, text);
  if (v < -2147483647LL || v > 2147483647LL) bad_value(key, text, "a 32-bit integer");
  return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) bad_value(key, text, "a nonnegative integer");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad_value(key, text, "a boolean");
}

std::vector<double> to_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split_ws(text)) out.push_back(to_double(key, tok));
  return out;
}

Vector to_vector(const std::string& key, const std::string& text) {
  const auto v = to_doubles(key, text);
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::string fmt(double v) { return format_number(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

std::string fmt(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(v[i]);
  return out;
}

std::string fmt(const Vector& v) { return fmt(std::vector<double>(v.data(), v.data() + v.size())); }

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

std::optional<double> to_optional(const std::string& key, const std::string& text) {
  if (trim(text).empty()) return std::nullopt;
  return to_double(key, text);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct KeyImpl {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define HANAM_KEY(NAME, DOC, GET, SET)                                                    \
  KeyImpl {                                                                               \
    ConfigKey{NAME, DOC}, [](const RunConfig& c) -> std::string { return GET; },         \
        [](RunConfig& c, const std::string& v) { [[maybe_unused]] const std::string k = NAME; SET; } \
  }

const std::vector<KeyImpl>& registry() {
  static const std::vector<KeyImpl> keys = {
      HANAM_KEY("seed", "master seed; every random stream derives from it", std::to_string(c.seed),
                c.seed = to_u64(k, v)),

      HANAM_KEY("fit.family", "HANE, HAND, NAM_EFFECTS or NAM_DISTURBANCES", std::string(to_string(c.family)),
                c.family = parse_model_kind(trim(v))),
      HANAM_KEY("fit.mle", "maximum likelihood instead of MAP (NAM families only)", fmt(c.mle),
                c.mle = to_bool(k, v)),
      HANAM_KEY("fit.standardize", "center and scale continuous covariates", fmt(c.standardize),
                c.standardize = to_bool(k, v)),
      HANAM_KEY("fit.rho_lower", "lower bound on rho", fmt(c.fit.rho_lower), c.fit.rho_lower = to_double(k, v)),
      HANAM_KEY("fit.rho_upper", "upper bound on rho", fmt(c.fit.rho_upper), c.fit.rho_upper = to_double(k, v)),
      HANAM_KEY("fit.max_iters", "optimizer iteration cap", std::to_string(c.fit.max_iters),
                c.fit.max_iters = to_int32(k, v)),
      HANAM_KEY("fit.grad_tol", "projected-gradient tolerance", fmt(c.fit.grad_tol),
                c.fit.grad_tol = to_double(k, v)),
      HANAM_KEY("fit.history_size", "L-BFGS memory", std::to_string(c.fit.history_size),
                c.fit.history_size = to_int32(k, v)),
      HANAM_KEY("fit.hessian_step", "finite-difference step for the Hessian", fmt(c.fit.hessian_step),
                c.fit.hessian_step = to_double(k, v)),
      HANAM_KEY("fit.multistart", "number of optimizer starts", std::to_string(c.fit.multistart),
                c.fit.multistart = to_int32(k, v)),
      HANAM_KEY("fit.level", "credible interval level", fmt(c.fit.level), c.fit.level = to_double(k, v)),
      HANAM_KEY("fit.sigma2", "pin sigma^2 to this value (empty: estimate)", fmt(c.fit.fixed_sigma2),
                c.fit.fixed_sigma2 = to_optional(k, v)),

      HANAM_KEY("prior.sigma_beta", "prior sd of beta", fmt(c.priors.sigma_beta),
                c.priors.sigma_beta = to_double(k, v)),
      HANAM_KEY("prior.sigma_gamma", "prior sd of gamma", fmt(c.priors.sigma_gamma),
                c.priors.sigma_gamma = to_double(k, v)),
      HANAM_KEY("prior.mu_rho", "prior location of rho", fmt(c.priors.mu_rho), c.priors.mu_rho = to_double(k, v)),
      HANAM_KEY("prior.sigma_rho", "prior scale of rho", fmt(c.priors.sigma_rho),
                c.priors.sigma_rho = to_double(k, v)),
      HANAM_KEY("prior.a", "inverse-gamma shape parameter a (shape a/2)", fmt(c.priors.a),
                c.priors.a = to_double(k, v)),
      HANAM_KEY("prior.b", "inverse-gamma scale parameter b (scale b/2)", fmt(c.priors.b),
                c.priors.b = to_double(k, v)),

      HANAM_KEY("latent.D", "latent dimension", std::to_string(c.sampler.D), c.sampler.D = to_int32(k, v)),
      HANAM_KEY("latent.burn_in", "sampler burn-in sweeps", std::to_string(c.sampler.burn_in),
                c.sampler.burn_in = to_int32(k, v)),
      HANAM_KEY("latent.thin", "sweeps between stored draws", std::to_string(c.sampler.thin),
                c.sampler.thin = to_int32(k, v)),
      HANAM_KEY("latent.n_draws", "stored draws", std::to_string(c.sampler.n_draws),
                c.sampler.n_draws = to_int32(k, v)),
      HANAM_KEY("latent.step_size", "position proposal sd", fmt(c.sampler.step_size),
                c.sampler.step_size = to_double(k, v)),
      HANAM_KEY("latent.coeff_step_size", "coefficient proposal sd", fmt(c.sampler.coeff_step_size),
                c.sampler.coeff_step_size = to_double(k, v)),
      HANAM_KEY("latent.prior_scale_positions", "prior sd of latent positions", fmt(c.sampler.prior_scale_positions),
                c.sampler.prior_scale_positions = to_double(k, v)),
      HANAM_KEY("latent.prior_scale_coeffs", "prior sd of edge-model coefficients", fmt(c.sampler.prior_scale_coeffs),
                c.sampler.prior_scale_coeffs = to_double(k, v)),
      HANAM_KEY("latent.adapt", "tune the position step during burn-in", fmt(c.sampler.adapt_during_burn_in),
                c.sampler.adapt_during_burn_in = to_bool(k, v)),
      HANAM_KEY("latent.fixed_intercept", "hold the edge-model intercept fixed (empty: sample it)",
                fmt(c.sampler.fixed_intercept), c.sampler.fixed_intercept = to_optional(k, v)),
      HANAM_KEY("latent.omega_s11", "Omega update variant: pre or post",
                std::string(c.s11_reading == OmegaS11Reading::Pre ? "pre" : "post"),
                {
                  const std::string t = lower(trim(v));
                  if (t == "pre") c.s11_reading = OmegaS11Reading::Pre;
                  else if (t == "post") c.s11_reading = OmegaS11Reading::Post;
                  else bad_value(k, v, "pre or post");
                }),

      HANAM_KEY("net.n", "nodes per generated network", std::to_string(c.net.n), c.net.n = to_int32(k, v)),
      HANAM_KEY("net.D", "latent dimension of generated networks", std::to_string(c.net.D),
                c.net.D = to_int32(k, v)),
      HANAM_KEY("net.n_clusters", "mixture components of the latent layout", std::to_string(c.net.n_clusters),
                c.net.n_clusters = to_int32(k, v)),
      HANAM_KEY("net.cluster_radius", "spread of cluster centres", fmt(c.net.cluster_radius),
                c.net.cluster_radius = to_double(k, v)),
      HANAM_KEY("net.cluster_scale", "within-cluster sd", fmt(c.net.cluster_scale),
                c.net.cluster_scale = to_double(k, v)),
      HANAM_KEY("net.layout_seed", "seed of the shared latent layout", std::to_string(c.net.layout_seed),
                c.net.layout_seed = to_u64(k, v)),
      HANAM_KEY("net.x_mean", "covariate mean", fmt(c.net.x_mean), c.net.x_mean = to_double(k, v)),
      HANAM_KEY("net.x_sd", "covariate sd", fmt(c.net.x_sd), c.net.x_sd = to_double(k, v)),
      HANAM_KEY("net.theta_x", "edge-model coefficient of |x_i - x_j|", fmt(c.net.theta_x),
                c.net.theta_x = to_double(k, v)),
      HANAM_KEY("net.target_out_degree", "mean out-degree the intercept is calibrated to",
                fmt(c.net.target_out_degree), c.net.target_out_degree = to_double(k, v)),
      HANAM_KEY("net.edge_intercept", "fixed edge-model intercept (empty: calibrate)", fmt(c.net.edge_intercept),
                c.net.edge_intercept = to_optional(k, v)),

      HANAM_KEY("truth.beta", "true beta including the intercept", fmt(c.truth.beta),
                c.truth.beta = to_vector(k, v)),
      HANAM_KEY("truth.gamma", "true gamma (length D)", fmt(c.truth.gamma), c.truth.gamma = to_vector(k, v)),
      HANAM_KEY("truth.rho", "true rho", fmt(c.truth.rho), c.truth.rho = to_double(k, v)),
      HANAM_KEY("truth.sigma2", "true sigma^2", fmt(c.truth.sigma2), c.truth.sigma2 = to_double(k, v)),
      HANAM_KEY("truth.law", "outcome law: effects or disturbances", std::string(to_string(c.law)),
                c.law = parse_outcome_law(trim(v))),

      HANAM_KEY("forward.T", "forward simulation steps", std::to_string(c.forward.T),
                c.forward.T = to_int32(k, v)),
      HANAM_KEY("forward.sigma_alpha", "limiting persistent-noise scale", fmt(c.forward.sigma_alpha),
                c.forward.sigma_alpha = to_double(k, v)),
      HANAM_KEY("forward.sigma_alpha0", "initial persistent-noise scale", fmt(c.forward.sigma_alpha0),
                c.forward.sigma_alpha0 = to_double(k, v)),
      HANAM_KEY("forward.alpha_decay", "decay of the persistent-noise scale towards its limit",
                fmt(c.forward.alpha_decay), c.forward.alpha_decay = to_double(k, v)),
      HANAM_KEY("forward.sigma_eps0", "initial transient-noise scale", fmt(c.forward.sigma_eps0),
                c.forward.sigma_eps0 = to_double(k, v)),
      HANAM_KEY("forward.decay", "decay of the transient-noise scale", fmt(c.forward.decay),
                c.forward.decay = to_double(k, v)),
      HANAM_KEY("forward.constant_eps", "keep the transient noise at its initial scale",
                fmt(c.forward.constant_eps), c.forward.constant_eps = to_bool(k, v)),
      HANAM_KEY("forward.stride", "record every stride-th state (0: final only)", std::to_string(c.forward.stride),
                c.forward.stride = to_int32(k, v)),

      HANAM_KEY("limit.n", "network size for validate-limit", std::to_string(c.limit_n),
                c.limit_n = to_int32(k, v)),
      HANAM_KEY("limit.rho", "rho for validate-limit", fmt(c.limit_rho), c.limit_rho = to_double(k, v)),
      HANAM_KEY("limit.paths", "independent forward paths", std::to_string(c.limit_paths),
                c.limit_paths = to_int32(k, v)),
      HANAM_KEY("limit.threshold", "z-score threshold", fmt(c.limit_threshold),
                c.limit_threshold = to_double(k, v)),

      HANAM_KEY("scenario.n_reps", "replicates per scenario", std::to_string(c.n_reps), c.n_reps = to_int32(k, v)),
      HANAM_KEY("scenario.network_source", "fixed_pool or regenerate", std::string(to_string(c.network_source)),
                c.network_source = parse_network_source(trim(v))),
      HANAM_KEY("scenario.pool_size", "networks in the fixed pool", std::to_string(c.pool_size),
                c.pool_size = to_int32(k, v)),
      HANAM_KEY("scenario.max_network_attempts", "regenerations before a network slot fails",
                std::to_string(c.max_network_attempts), c.max_network_attempts = to_int32(k, v)),
      HANAM_KEY("scenario.latent_source", "oracle_perturbed, sampler or file", std::string(to_string(c.latent_source)),
                c.latent_source = parse_latent_source(trim(v))),
      HANAM_KEY("scenario.latent_draws", "draws per network for oracle_perturbed", std::to_string(c.latent_draws),
                c.latent_draws = to_int32(k, v)),
      HANAM_KEY("scenario.oracle_tau", "noise sd of oracle_perturbed draws", fmt(c.oracle_tau),
                c.oracle_tau = to_double(k, v)),
      HANAM_KEY("scenario.draws_dir", "directory of draws_<k>.csv for latent_source=file", c.draws_dir,
                c.draws_dir = trim(v)),
      HANAM_KEY("scenario.methods", "methods to compare: HANE HAND NAM_BAYES NAM_MLE",
                [&] {
                  std::string out;
                  for (std::size_t i = 0; i < c.methods.size(); ++i) out += (i ? " " : "") + c.methods[i];
                  return out;
                }(),
                {
                  auto names = split_ws(v);
                  if (names.empty()) bad_value(k, v, "a list of methods");
                  for (const auto& n : names) (void)builtin_method(n);
                  c.methods = std::move(names);
                }),

      HANAM_KEY("grid.laws", "outcome laws of the grid", [&] {
                  std::string out;
                  for (std::size_t i = 0; i < c.grid_laws.size(); ++i)
                    out += (i ? " " : "") + std::string(to_string(c.grid_laws[i]));
                  return out;
                }(),
                {
                  std::vector<OutcomeLaw> laws;
                  for (const auto& t : split_ws(v)) laws.push_back(parse_outcome_law(t));
                  if (laws.empty()) bad_value(k, v, "a list of outcome laws");
                  c.grid_laws = std::move(laws);
                }),
      HANAM_KEY("grid.rhos", "true rho values", fmt(c.grid_rhos), c.grid_rhos = to_doubles(k, v)),
      HANAM_KEY("grid.beta1s", "true covariate effects", fmt(c.grid_beta1s), c.grid_beta1s = to_doubles(k, v)),
      HANAM_KEY("grid.beta0", "true intercept", fmt(c.grid_beta0), c.grid_beta0 = to_double(k, v)),
      HANAM_KEY("grid.gammas", "true gamma vectors separated by ';' (empty: truth.gamma)",
                [&] {
                  std::string out;
                  for (std::size_t i = 0; i < c.grid_gammas.size(); ++i) out += (i ? "; " : "") + fmt(c.grid_gammas[i]);
                  return out;
                }(),
                {
                  std::vector<Vector> gs;
                  std::stringstream in(v);
                  std::string part;
                  while (std::getline(in, part, ';'))
                    if (!trim(part).empty()) gs.push_back(to_vector(k, part));
                  c.grid_gammas = std::move(gs);
                }),
  };
  return keys;
}

#undef HANAM_KEY

const KeyImpl& lookup(const std::string& key) {
  for (const auto& k : registry())
    if (k.key.name == key) return k;
  fail(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
}

}  // namespace

RunConfig::RunConfig() {
  truth.beta = Vector(2);
  truth.beta << 0.5, 0.5;
  truth.gamma = Vector(3);
  truth.gamma << 0.06, 0.1, -0.2;
  truth.rho = 0.3;
  truth.sigma2 = 1.0;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& k : registry()) out.push_back(k.key);
    return out;
  }();
  return keys;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  lookup(trim(key)).set(cfg, value);
}

std::string get_key(const RunConfig& cfg, const std::string& key) { return lookup(key).get(cfg); }

std::map<std::string, std::string> to_map(const RunConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& k : registry()) out[k.key.name] = k.get(cfg);
  return out;
}

void apply_map(RunConfig& cfg, const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) set_key(cfg, k, v);
}

void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) fail(ErrorKind::Parse, where + "expected 'key = value'");
    try {
      set_key(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorKind::Parse, where + e.what());
    }
  }
}

std::string render_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& k : registry()) out << "# " << k.key.doc << "\n" << k.key.name << " = " << k.get(cfg) << "\n";
  return out.str();
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : to_map(cfg)) {
    for (unsigned char ch : k + "=" + v + "\n") {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

GridConfig make_grid(const RunConfig& cfg) {
  GridConfig g;
  ScenarioConfig& b = g.base;
  b.truth = cfg.truth;
  b.n_reps = cfg.n_reps;
  b.network_source = cfg.network_source;
  b.pool_size = cfg.pool_size;
  b.max_network_attempts = cfg.max_network_attempts;
  b.net = cfg.net;
  b.latent_source = cfg.latent_source;
  b.latent_draws = cfg.latent_draws;
  b.oracle_tau = cfg.oracle_tau;
  b.sampler = cfg.sampler;
  b.draws_dir = cfg.draws_dir;
  b.priors = cfg.priors;
  b.fit = cfg.fit;
  b.master_seed = cfg.seed;
  g.laws = cfg.grid_laws;
  g.rhos = cfg.grid_rhos;
  g.beta1s = cfg.grid_beta1s;
  g.gammas = cfg.grid_gammas;
  g.beta0 = cfg.grid_beta0;
  g.methods = cfg.methods;
  return g;
}

void apply_full_grid(RunConfig& cfg) {
  cfg.grid_laws = {OutcomeLaw::Effects, OutcomeLaw::Disturbances};
  cfg.grid_rhos = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  cfg.grid_beta1s = {0.0, 0.5, 1.0};
  Vector g1(3), g2(3);
  g1 << 0.06, 0.1, -0.2;
  g2 << 0.03, 0.05, -0.1;
  cfg.grid_gammas = {g1, g2};
  cfg.n_reps = 200;
  cfg.pool_size = 200;
}

}  // namespace hanam::cli
