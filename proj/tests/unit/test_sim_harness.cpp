#include "doctest.h"
#include "helpers.hpp"

#include <filesystem>
#include <numbers>

#include "hanam/draws_io.hpp"
#include "hanam/errors.hpp"
#include "hanam/sim_harness.hpp"

using namespace hanam;
using namespace hanam::testing;

namespace {

TrueParams truth(Index D, double rho) {
  TrueParams t;
  t.beta = Vector(2);
  t.beta << 0.5, 0.5;
  t.gamma = Vector::LinSpaced(D, 0.1, -0.2);
  t.rho = rho;
  t.sigma2 = 1.0;
  return t;
}

double dense_logpdf(const Vector& y, const Vector& mu, const Matrix& cov) {
  Eigen::FullPivLU<Matrix> lu(cov);
  const Vector r = y - mu;
  return -0.5 * (static_cast<double>(y.size()) * std::log(2 * std::numbers::pi) + std::log(lu.determinant()) +
                 r.dot(lu.solve(r)));
}

ScenarioConfig small_scenario(double rho) {
  ScenarioConfig sc;
  sc.net.n = 40;
  sc.net.D = 2;
  sc.net.target_out_degree = 4.0;
  sc.truth = truth(2, rho);
  sc.n_reps = 6;
  sc.pool_size = 3;
  sc.latent_draws = 50;
  sc.master_seed = 123;
  return sc;
}

MethodSpec constant_method(const std::string& name, double value) {
  return {name, [value](const ReplicateContext& ctx) {
            MethodOutput out;
            out.ok = true;
            out.params.push_back({"rho", ctx.scenario.truth.rho, value, Interval{value, value}});
            return out;
          }};
}

}  // namespace

TEST_CASE("very negative edge intercept gives an empty network") {
  NetworkParams p;
  p.n = 20;
  p.edge_intercept = -200.0;
  try {
    generate_network(p, 1);
    FAIL("expected EmptyNetwork");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyNetwork);
  }
}

TEST_CASE("calibrated out-degree is close to the target") {
  NetworkParams p;
  p.n = 150;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto g = generate_network(p, seed);
    const double mean_deg = static_cast<double>(g.adjacency.edge_count()) / p.n;
    CHECK(std::abs(mean_deg - p.target_out_degree) <= 1.0);
    CHECK(g.U.rows() == 150);
    CHECK(g.x.size() == 150);
  }
}

TEST_CASE("tight distant clusters are denser within than between") {
  NetworkParams p;
  p.n = 40;
  p.D = 2;
  p.n_clusters = 2;
  p.cluster_means = Matrix(2, 2);
  p.cluster_means << -4, 0, 4, 0;
  p.cluster_scale = 0.3;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto g = generate_network(p, seed);
    double within = 0, between = 0, n_within = 0, n_between = 0;
    for (int i = 0; i < p.n; ++i)
      for (int j = 0; j < p.n; ++j) {
        if (i == j) continue;
        const bool same = g.cluster[i] == g.cluster[j];
        (same ? within : between) += g.adjacency.weights()(i, j);
        (same ? n_within : n_between) += 1;
      }
    CHECK(within / n_within > between / n_between);
  }
}

TEST_CASE("the latent layout is shared across networks") {
  NetworkParams p;
  p.n = 30;
  auto a = generate_network(p, 1);
  auto b = generate_network(p, 2);
  CHECK(a.U == b.U);
  CHECK(a.x != b.x);
}

TEST_CASE("limiting draws at rho = 0 have the iid moments") {
  auto a = random_network(5, 0.4, 3);
  Rng rng(3);
  const Matrix U = standard_normal_matrix(5, 2, rng);
  const Matrix X = design_with_intercept(standard_normal_vector(5, rng));
  auto t = truth(2, 0.0);
  t.sigma2 = 2.0;
  const int N = 10000;
  for (auto law : {OutcomeLaw::Effects, OutcomeLaw::Disturbances}) {
    Matrix Y(5, N);
    for (int k = 0; k < N; ++k) Y.col(k) = draw_limiting_outcome(a, U, X, t, law, derive_seed(9, k));
    const Vector mean = Y.rowwise().mean();
    const Vector z = U * t.gamma + X * t.beta;
    const Matrix c = Y.colwise() - mean;
    const Matrix cov = c * c.transpose() / (N - 1.0);
    for (Index i = 0; i < 5; ++i) {
      CHECK(std::abs(mean(i) - z(i)) < 4.0 * std::sqrt(2.0 / N));
      for (Index j = 0; j < 5; ++j) {
        const double target = i == j ? 2.0 : 0.0;
        const double se = std::sqrt((4.0 + target * target) / N);
        CHECK(std::abs(cov(i, j) - target) < 4.0 * se);
      }
    }
  }
}

TEST_CASE("limiting draws on a fixed three-node network match sigma2 M M'") {
  Matrix w(3, 3);
  w << 0, 1, 1,
       1, 0, 0,
       0, 1, 0;
  auto a = row_normalize(Adjacency(w));
  const Matrix U = Matrix::Zero(3, 1);
  const Matrix X = design_with_intercept(Vector::Zero(3));
  auto t = truth(1, 0.6);
  const auto m = limiting_moments(a, U, X, t, OutcomeLaw::Effects, t.sigma2);
  const int N = 50000;
  Matrix Y(3, N);
  for (int k = 0; k < N; ++k) Y.col(k) = draw_limiting_outcome(a, U, X, t, OutcomeLaw::Effects, derive_seed(4, k));
  const Vector mean = Y.rowwise().mean();
  const Matrix c = Y.colwise() - mean;
  const Matrix cov = c * c.transpose() / (N - 1.0);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) {
      const double se = std::sqrt((m.cov(i, i) * m.cov(j, j) + m.cov(i, j) * m.cov(i, j)) / N);
      CHECK(std::abs(cov(i, j) - m.cov(i, j)) < 3.0 * se);
    }
}

TEST_CASE("with gamma = 0 the effects limit is the NAM effects likelihood") {
  auto a = random_network(8, 0.3, 5);
  Rng rng(5);
  const Matrix U = standard_normal_matrix(8, 2, rng);
  const Matrix X = design_with_intercept(standard_normal_vector(8, rng));
  auto t = truth(2, 0.4 / spectral_norm(a));
  t.gamma.setZero();
  const auto m = limiting_moments(a, U, X, t, OutcomeLaw::Effects, t.sigma2);
  Dataset d{Vector(), X, {}};
  ParamVector th{t.beta, Vector(), t.rho, t.sigma2};
  for (int k = 0; k < 100; ++k) {
    d.y = draw_limiting_outcome(a, U, X, t, OutcomeLaw::Effects, derive_seed(5, k));
    CHECK(std::abs(dense_logpdf(d.y, m.mean, m.cov) - nam_loglik(th, d, a, ModelKind::NamEffects)) < 1e-9);
  }
}

TEST_CASE("limiting draws require stability") {
  auto c = two_cycle();
  auto t = truth(1, 1.0);
  CHECK_THROWS_AS(draw_limiting_outcome(c, Matrix::Zero(2, 1), design_with_intercept(Vector::Zero(2)), t,
                                        OutcomeLaw::Effects, 1),
                  Error);
}

TEST_CASE("forward recursion collapses without influence or transient noise") {
  auto a = random_network(6, 0.4, 2);
  Rng rng(2);
  const Matrix U = standard_normal_matrix(6, 2, rng);
  const Matrix X = design_with_intercept(standard_normal_vector(6, rng));
  auto t = truth(2, 0.0);
  ForwardSimConfig fwd;
  fwd.T = 20;
  fwd.sigma_eps0 = 0.0;
  fwd.sigma_alpha = 1.3;
  fwd.sigma_alpha0 = 1.3;
  fwd.stride = 1;
  fwd.seed = 11;
  auto tr = forward_simulate(a, U, X, t, OutcomeLaw::Effects, fwd);
  REQUIRE(tr.states.size() == 20);
  // alpha is the first draw of the path stream
  Rng alpha_rng(11);
  const Vector alpha = standard_normal_vector(6, alpha_rng);
  const Vector z = U * t.gamma + X * t.beta;
  for (const auto& y : tr.states) CHECK((y - (z + 1.3 * alpha)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("deterministic diffusion converges to the equilibrium") {
  auto a = random_network(10, 0.3, 6);
  Rng rng(6);
  const Matrix U = standard_normal_matrix(10, 2, rng);
  const Matrix X = design_with_intercept(standard_normal_vector(10, rng));
  auto t = truth(2, 0.7 / spectral_norm(a));
  ForwardSimConfig fwd;
  fwd.T = 400;
  fwd.sigma_alpha = 0.0;
  fwd.sigma_alpha0 = 0.0;
  fwd.sigma_eps0 = 0.0;
  auto y = forward_simulate(a, U, X, t, OutcomeLaw::Effects, fwd).final_state();
  const auto m = limiting_moments(a, U, X, t, OutcomeLaw::Effects, 0.0);
  CHECK((y - m.mean).cwiseAbs().maxCoeff() < 1e-8);
  auto yd = forward_simulate(a, U, X, t, OutcomeLaw::Disturbances, fwd).final_state();
  CHECK((yd - (U * t.gamma + X * t.beta)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("influence past the stability boundary diverges") {
  auto c = two_cycle();
  const Matrix U = Matrix::Ones(2, 1);
  const Matrix X = design_with_intercept(Vector::Ones(2));
  ForwardSimConfig fwd;
  fwd.sigma_alpha = 0.0;
  fwd.sigma_alpha0 = 0.0;
  fwd.sigma_eps0 = 0.0;

  // At rho = 1 exactly the recursion grows linearly, y_t = t z, far short of the 1e12 bound.
  auto t = truth(1, 1.0);
  fwd.T = 1000;
  const Vector z = U * t.gamma + X * t.beta;
  auto y = forward_simulate(c, U, X, t, OutcomeLaw::Effects, fwd).final_state();
  CHECK((y - 1000.0 * z).cwiseAbs().maxCoeff() < 1e-8);

  t.rho = 1.05;
  fwd.T = 100000;
  try {
    forward_simulate(c, U, X, t, OutcomeLaw::Effects, fwd);
    FAIL("expected Diverging");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Diverging);
  }
}

TEST_CASE("forward config validation") {
  ForwardSimConfig f;
  CHECK_NOTHROW(f.validate());
  f.decay = 1.0;
  CHECK_THROWS_AS(f.validate(), Error);
  f = ForwardSimConfig{};
  f.y0 = Vector::Constant(2, std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(f.validate(), Error);
  f = ForwardSimConfig{};
  f.T = 0;
  CHECK_THROWS_AS(f.validate(), Error);
  f = ForwardSimConfig{};
  CHECK(f.sigma_eps_at(10) == doctest::Approx(std::pow(0.97, 10)));
  f.sigma_alpha0 = 3.0;
  CHECK(f.sigma_alpha_at(2000) == doctest::Approx(1.0));
}

TEST_CASE("limit validation passes, and fails when transient noise does not vanish") {
  auto a = random_network(30, 0.1, 42);
  Rng rng(42);
  const Matrix U = standard_normal_matrix(30, 2, rng);
  const Matrix X = design_with_intercept(standard_normal_vector(30, rng));
  auto t = truth(2, 0.4);
  REQUIRE(check_stability(0.4, a));
  ForwardSimConfig fwd;
  fwd.T = 500;
  fwd.seed = 2024;
  for (auto law : {OutcomeLaw::Effects, OutcomeLaw::Disturbances}) {
    auto rep = validate_limit(a, U, X, t, law, fwd, 2000);
    CHECK(rep.pass);
    CHECK(rep.cov_fraction_within >= 0.95);
  }
  ForwardSimConfig broken = fwd;
  broken.constant_eps = true;
  auto bad = validate_limit(a, U, X, t, OutcomeLaw::Effects, broken, 2000);
  CHECK_FALSE(bad.cov_ok);
  CHECK_FALSE(bad.pass);

  auto t0 = truth(2, 0.0);
  auto zero = validate_limit(a, U, X, t0, OutcomeLaw::Effects, fwd, 500);
  CHECK(zero.mean_ok);
}

TEST_CASE("metrics of a constant estimator") {
  auto sc = small_scenario(0.3);
  sc.n_reps = 5;
  auto res = run_scenario(sc, {constant_method("ZERO", 0.0)});
  const auto* row = res.metrics.find(0, "ZERO", "rho");
  REQUIRE(row);
  CHECK(row->bias == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(row->mse == doctest::Approx(0.09).epsilon(1e-12));
  CHECK(row->coverage == 0.0);
  CHECK(row->n_ok == 5);
  CHECK(row->n_failed == 0);
}

TEST_CASE("failures are counted, not dropped") {
  auto sc = small_scenario(0.2);
  MethodSpec flaky{"FLAKY", [](const ReplicateContext& ctx) {
                     if (ctx.replicate % 2) throw std::runtime_error("boom");
                     MethodOutput out;
                     out.ok = true;
                     out.params.push_back({"rho", 0.2, 0.25, Interval{0.1, 0.3}});
                     return out;
                   }};
  auto res = run_scenario(sc, {flaky});
  const auto* row = res.metrics.find(0, "FLAKY", "rho");
  REQUIRE(row);
  CHECK(row->n_ok == 3);
  CHECK(row->n_failed == 3);
  CHECK(row->coverage == 1.0);
  CHECK(res.replicates[1].outputs[0].second.failure == "boom");
}

TEST_CASE("MSE decomposes into squared bias plus variance") {
  std::vector<ReplicateRecord> recs;
  Rng rng(1);
  std::normal_distribution<double> nd(0.2, 0.3);
  for (int r = 0; r < 37; ++r) {
    ReplicateRecord rec;
    rec.replicate = r;
    MethodOutput out;
    out.ok = true;
    const double e = nd(rng);
    out.params.push_back({"rho", 0.1, e, Interval{e - 0.5, e + 0.5}});
    out.params.push_back({"beta0", -1.0, e * 3.0, Interval{e, e}});
    rec.outputs.emplace_back("M", out);
    recs.push_back(rec);
  }
  auto t = aggregate_metrics(7, {"M"}, recs);
  REQUIRE(t.rows.size() == 2);
  for (const auto& row : t.rows) {
    CHECK(std::abs(row.mse - (row.bias * row.bias + row.variance)) < 1e-12);
    CHECK(row.coverage >= 0.0);
    CHECK(row.coverage <= 1.0);
    CHECK(row.mse >= row.bias * row.bias);
    CHECK(row.mcse_bias == doctest::Approx(std::sqrt(row.variance * 37.0 / 36.0 / 37.0)));
  }
}

TEST_CASE("metrics CSV has a fixed column order") {
  MetricsTable t;
  t.rows.push_back({3, "HANE", "rho", 0.5, 0.25, 1.0, 0.01, 0.0, 10, 2});
  CHECK(t.to_csv() ==
        "scenario_id,method,parameter,bias,mse,coverage,mcse_bias,n_ok,n_failed\n3,HANE,rho,0.5,0.25,1,0.01,10,2\n");
}

TEST_CASE("replicates reproduce in isolation and across thread counts") {
  auto sc = small_scenario(0.3);
  auto methods = builtin_methods({"HANE", "NAM_BAYES", "NAM_MLE"});
  auto serial = run_scenario(sc, methods, 1);
  auto threaded = run_scenario(sc, methods, 3);
  CHECK(serial.metrics.to_csv() == threaded.metrics.to_csv());
  for (int r : {0, 4}) {
    auto alone = run_replicate(sc, methods, r);
    const auto& full = serial.replicates[static_cast<std::size_t>(r)];
    REQUIRE(alone.outputs.size() == full.outputs.size());
    for (std::size_t m = 0; m < alone.outputs.size(); ++m) {
      const auto& a = alone.outputs[m].second;
      const auto& b = full.outputs[m].second;
      CHECK(a.ok == b.ok);
      REQUIRE(a.params.size() == b.params.size());
      for (std::size_t k = 0; k < a.params.size(); ++k) {
        CHECK(a.params[k].estimate == b.params[k].estimate);
        CHECK(a.params[k].interval.lower == b.params[k].interval.lower);
        CHECK(a.params[k].interval.upper == b.params[k].interval.upper);
      }
    }
  }
  for (const auto& rec : serial.replicates)
    for (const auto& [name, out] : rec.outputs) CHECK_MESSAGE(out.ok, name << ": " << out.failure);
}

TEST_CASE("every pooled network is stable for the true rho") {
  auto sc = small_scenario(0.75);
  sc.max_network_attempts = 50;
  int regenerations = 0;
  for (int k = 0; k < sc.pool_size; ++k) {
    auto e = build_pool_entry(sc, k);
    CHECK(check_stability(0.75, *e.network));
    regenerations += e.attempt;
  }
  CHECK(regenerations > 0);
  sc.truth.rho = 5.0;
  sc.max_network_attempts = 2;
  auto res = run_scenario(sc, {constant_method("C", 0.0)});
  const auto* row = res.metrics.find(0, "C", "rho");
  REQUIRE(row);
  CHECK(row->n_ok == 0);
  CHECK(row->n_failed == sc.n_reps);
  CHECK(res.replicates[0].outputs[0].second.failure.find("Unstable") != std::string::npos);
}

TEST_CASE("latent summaries from the sampler and from files") {
  auto sc = small_scenario(0.2);
  sc.net.n = 15;
  sc.n_reps = 2;
  sc.pool_size = 1;
  sc.latent_source = LatentSource::Sampler;
  sc.sampler.burn_in = 200;
  sc.sampler.n_draws = 30;
  sc.sampler.thin = 2;
  auto res = run_scenario(sc, builtin_methods({"HANE"}));
  CHECK(res.replicates.size() == 2);

  const auto dir = std::filesystem::temp_directory_path() / "hanam_sim_draws";
  std::filesystem::create_directories(dir);
  auto entry = build_pool_entry(sc, 0);
  write_draws(dir / "draws_0.csv", perturbed_draws(entry.U, 20, 0.1, 3));
  sc.latent_source = LatentSource::File;
  sc.draws_dir = dir;
  auto from_file = build_pool_entry(sc, 0);
  CHECK(from_file.latent->Lambda.rows() == 15);
  std::filesystem::remove(dir / "draws_0.csv");
  CHECK_THROWS_AS(build_pool_entry(sc, 0), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("grid expansion order") {
  GridConfig g;
  g.base = small_scenario(0.0);
  g.laws = {OutcomeLaw::Effects, OutcomeLaw::Disturbances};
  g.rhos = {0.0, 0.3};
  g.beta1s = {0.0, 1.0};
  auto cells = g.expand();
  REQUIRE(cells.size() == 8);
  CHECK(cells[1].truth.rho == 0.3);
  CHECK(cells[2].truth.beta(1) == 1.0);
  CHECK(cells[4].law == OutcomeLaw::Disturbances);
  for (int i = 0; i < 8; ++i) CHECK(cells[static_cast<std::size_t>(i)].scenario_id == i);
}

TEST_CASE("unknown method names are rejected") {
  CHECK_THROWS_AS(builtin_method("OLS"), Error);
  CHECK_THROWS_AS(builtin_methods({}), Error);
}
