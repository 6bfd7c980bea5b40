#include "mlpmcmc/migration.hpp"
#include "mlpmcmc/oracle.hpp"
#include "mlpmcmc/smc.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace mlpmcmc;

namespace {

State st(std::initializer_list<int> v) {
  State x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int c : v) x[i++] = c;
  return x;
}

Eigen::MatrixXd uniform_R(int d) { return Eigen::MatrixXd::Constant(d, d, 1.0 / d); }

Eigen::MatrixXd sym_G(double g01) {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2, 2);
  G(0, 1) = G(1, 0) = g01;
  return G;
}

ParameterPoint mig_theta(double mu, double g01) { return {mu, uniform_R(2), sym_G(g01)}; }

}  // namespace

TEST_CASE("one group without migration reproduces the coalescent") {
  Eigen::MatrixXd R(2, 2);
  R << 0.9, 0.1, 0.3, 0.7;
  const ParameterPoint th{0.5, R, Eigen::MatrixXd::Zero(1, 1)};
  const ParameterPoint tc{0.5, R, std::nullopt};
  MigrationModel mig(th, 1, st({3, 2}));
  CoalescentModel coal(tc, st({3, 2}));
  CHECK(mig.log_prefactor() == coal.log_prefactor());
  for (int n = 2; n <= 4; ++n) {
    for (const auto& x : compositions(n, 2)) {
      for (const auto& z : compositions(n, 2)) CHECK(mig.forward_density(x, z) == coal.forward_density(x, z));
      for (const auto& z : compositions(n + 1, 2)) CHECK(mig.forward_density(x, z) == coal.forward_density(x, z));
    }
  }
  CHECK(oracle::backward_normalizer(mig) == exact_normalizer_backward(coal));

  const auto schedule = make_schedule({4, 3, 2}, 5);
  Rng r1(77), r2(77);
  const auto a = run_multilevel_smc(mig, schedule, 8, r1);
  const auto b = run_multilevel_smc(coal, schedule, 8, r2);
  CHECK(a.success == b.success);
  CHECK(a.log_zhat == b.log_zhat);
}

TEST_CASE("migration densities are normalised") {
  for (double mu : {0.5, 1.0, 2.0}) {
    for (double g01 : {0.0, 0.3, 1.5}) {
      const auto th = mig_theta(mu, g01);
      for (int m = 3; m <= 5; ++m) {
        for (int n = 2; n < m; ++n) {
          for (const auto& x : compositions(n, 4)) {
            double total = 0.0;
            for (int l : {n, n + 1}) {
              for (const auto& z : compositions(l, 4)) total += forward_transition_density_mig(th, 2, m, x, z);
            }
            CHECK(std::abs(total - 1.0) < 1e-10);
          }
        }
        for (const auto& y : compositions(m, 4)) {
          MigrationModel model(th, 2, y);
          std::vector<State> states{y};
          for (int n = 3; n < m; ++n) {
            for (const auto& x : compositions(n, 4)) states.push_back(x);
          }
          for (const auto& x : states) {
            const auto preds = valid_predecessors(model, x);
            if (preds.empty()) continue;
            double total = 0.0;
            for (const auto& [xp, f] : preds) total += backward_proposal_density_mig(model, x, xp);
            CHECK(std::abs(total - 1.0) < 1e-10);
          }
        }
      }
    }
  }
}

TEST_CASE("migration moves need a migrant") {
  const auto th = mig_theta(1.0, 0.5);
  // group 0 holds (1,1), group 1 is empty: moving a type-0 individual to group 1.
  const double move = forward_transition_density_mig(th, 2, 5, st({1, 1, 0, 0}), st({0, 1, 1, 0}));
  CHECK(move == doctest::Approx(0.5 * 0.5 / (1.0 + 1.0 + 0.5)).epsilon(1e-14));
  CHECK(forward_transition_density_mig(th, 2, 5, st({0, 2, 0, 0}), st({0, 1, 1, 0})) == 0.0);

  MigrationModel model(th, 2, st({1, 1, 1, 1}));
  for (const auto& [xp, f] : valid_predecessors(model, st({0, 1, 1, 0}))) {
    CHECK((xp.array() >= 0).all());
    CHECK(f > 0.0);
  }
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto [xp, dens] = backward_proposal_mig(model, st({0, 1, 1, 0}), rng);
    CHECK(dens == doctest::Approx(backward_proposal_density_mig(model, st({0, 1, 1, 0}), xp)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(MigrationModel(th, 3, st({1, 1, 1, 1})), ModelError);
  CHECK_THROWS_AS(MigrationModel(mig_theta(1.0, 0.0), 2, st({1, 1, 1})), ModelError);
}

TEST_CASE("migration free parameters") {
  MigrationModel model(mig_theta(0.7, 0.4), 2, st({1, 1, 1, 1}));
  const auto v = model.free_parameters();
  REQUIRE(v.size() == 2);
  CHECK(v[0] == 0.7);
  CHECK(v[1] == 0.4);
  CHECK(model.parameters_from_free(v) == model.parameters());
  CHECK(total_migration(sym_G(0.4)) == 0.4);
}

TEST_CASE("migration level-count weights") {
  const std::vector<int> support(std::begin(kMigrationLevelSupport), std::end(kMigrationLevelSupport));
  auto flat = level_count_probabilities_mig(mig_theta(0.0, 0.0), support);
  for (double p : flat) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));
  auto linear = level_count_probabilities_mig(mig_theta(std::exp(1.0) - 1.0, 0.0), support);
  CHECK(linear[0] == doctest::Approx(10.0 / 63).epsilon(1e-12));
  CHECK(linear[1] == doctest::Approx(20.0 / 63).epsilon(1e-12));
  CHECK(linear[2] == doctest::Approx(33.0 / 63).epsilon(1e-12));
  double prev = 0.0;
  for (double s : {0.0, 0.5, 1.0, 2.0, 5.0}) {
    const double p33 = level_count_probabilities_mig(mig_theta(s / 2, s / 2), support)[2];
    CHECK(p33 >= prev);
    prev = p33;
  }
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const int p = sample_level_count_mig(mig_theta(1.0, 1.0), support, rng);
    CHECK((p == 10 || p == 20 || p == 33));
  }
}

TEST_CASE("SMC on the migration model is unbiased") {
  MigrationModel model(mig_theta(1.0, 0.5), 2, st({2, 1, 1, 0}));
  const double Z = oracle::backward_normalizer(model);
  REQUIRE(Z > 0.0);
  const auto schedule = make_schedule({3, 2}, 4);
  const int runs = 4000;
  double sum = 0.0, sumsq = 0.0;
  for (int r = 0; r < runs; ++r) {
    Rng rng(1000 + static_cast<std::uint64_t>(r));
    const auto res = run_multilevel_smc(model, schedule, 4, rng);
    const double z = res.success ? std::exp(res.log_zhat) : 0.0;
    sum += z;
    sumsq += z * z;
  }
  const double mean = sum / runs;
  const double se = std::sqrt((sumsq / runs - mean * mean) / (runs - 1));
  CHECK(std::abs(mean - Z) < 4 * se);
}
