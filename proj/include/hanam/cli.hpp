#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hanam/estimation.hpp"
#include "hanam/latent_approx.hpp"
#include "hanam/sim_harness.hpp"

namespace hanam::cli {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitInternal = 4;
constexpr int kFormatVersion = 1;
constexpr const char* kVersion = "1.0.0";
constexpr const char* kSeedEnv = "HANAM_SEED";

// ---------------------------------------------------------------------------
// Configuration

/// Every setting a subcommand can read; each has a documented default (see --print-config).
struct RunConfig {
  std::uint64_t seed = 20240501;

  ModelKind family = ModelKind::HANE;
  bool mle = false;
  bool standardize = false;
  FitConfig fit;
  Priors priors;
  LatentSamplerConfig sampler;
  OmegaS11Reading s11_reading = OmegaS11Reading::Pre;

  NetworkParams net;
  TrueParams truth;
  OutcomeLaw law = OutcomeLaw::Effects;

  ForwardSimConfig forward;
  int limit_n = 30;
  double limit_rho = 0.4;
  int limit_paths = 2000;
  double limit_threshold = 4.0;

  int n_reps = 50;
  NetworkSource network_source = NetworkSource::FixedPool;
  int pool_size = 20;
  int max_network_attempts = 20;
  LatentSource latent_source = LatentSource::OraclePerturbed;
  int latent_draws = 200;
  double oracle_tau = 0.1;
  std::string draws_dir;
  std::vector<std::string> methods{"HANE", "NAM_BAYES"};
  std::vector<OutcomeLaw> grid_laws{OutcomeLaw::Effects};
  std::vector<double> grid_rhos{0.0, 0.3, 0.6};
  std::vector<double> grid_beta1s{0.5};
  std::vector<Vector> grid_gammas;  // empty: truth.gamma
  double grid_beta0 = 0.5;

  RunConfig();
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

/// All keys in display order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text form. Throws InvalidArgument for unknown keys or bad values.
void set_key(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_key(const RunConfig& cfg, const std::string& key);

/// key -> value text for every key (sorted).
std::map<std::string, std::string> to_map(const RunConfig& cfg);
void apply_map(RunConfig& cfg, const std::map<std::string, std::string>& values);

/// Flat `key = value` file; `#` starts a comment. Errors name the file and line.
void load_config_file(RunConfig& cfg, const std::filesystem::path& path);
std::string render_config(const RunConfig& cfg);

/// FNV-1a 64-bit hash of the canonical key=value listing, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

GridConfig make_grid(const RunConfig& cfg);
/// Full study grid: both laws, rho 0..0.6 by 0.1, beta1 in {0, 0.5, 1}, two gammas, 200 replicates
/// over a pool of 200 networks.
void apply_full_grid(RunConfig& cfg);

// ---------------------------------------------------------------------------
// Input tables

/// Comma-separated table with a header row; cells are trimmed, quoting is not supported.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // source line of each row
  std::string source;
};

CsvTable read_csv(const std::filesystem::path& path, bool has_header = true);

/// Node covariates: `id` first, then columns. Non-numeric columns are categorical and expand to
/// indicators for every level but the first (sorted) one. An intercept column is prepended.
struct NodeData {
  std::vector<std::string> ids;
  Matrix X;
  std::vector<std::string> column_names;
  NodeAttributes attributes;  // raw columns for the latent sampler's dyadic covariates
};

NodeData read_covariates(const std::filesystem::path& path, bool standardize);

/// Edge list `src,dst[,weight]` over the given node ids (optional header starting with `src`).
Adjacency read_edge_list(const std::filesystem::path& path, const std::vector<std::string>& ids);

/// Outcome `id,y`, reordered to match ids; every node must appear exactly once.
Vector read_outcome(const std::filesystem::path& path, const std::vector<std::string>& ids);

// ---------------------------------------------------------------------------
// Entry point

/// Runs the command line; returns the process exit code. Messages go to `out` and `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hanam::cli
