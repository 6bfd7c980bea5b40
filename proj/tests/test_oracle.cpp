#include "mlpmcmc/coalescent.hpp"
#include "mlpmcmc/migration.hpp"
#include "mlpmcmc/oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace mlpmcmc;

namespace {

State st(std::initializer_list<int> v) {
  State x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int c : v) x[i++] = c;
  return x;
}

Eigen::MatrixXd uniform_R(int d) { return Eigen::MatrixXd::Constant(d, d, 1.0 / d); }

}  // namespace

TEST_CASE("generic oracles agree with the coalescent solvers") {
  Eigen::MatrixXd R(2, 2);
  R << 0.9, 0.1, 0.3, 0.7;
  for (const auto& y : {st({2, 2}), st({3, 2}), st({4, 1}), st({2, 1})}) {
    for (double mu : {0.5, 1.0, 2.0}) {
      CoalescentModel model({mu, R, std::nullopt}, y);
      CHECK(oracle::backward_normalizer(model) ==
            doctest::Approx(exact_normalizer_backward(model)).epsilon(1e-12));
      CHECK(oracle::forward_marginal(model, log_sampling_factor(y)) ==
            doctest::Approx(exact_marginal_forward(model)).epsilon(1e-12));
    }
  }
}

TEST_CASE("remaining path weight at level two is the initial density") {
  CoalescentModel model({1.0, uniform_R(2), std::nullopt}, st({2, 2}));
  const auto H = oracle::remaining_path_weight(model);
  CHECK(H.at(st({2, 0})) == doctest::Approx(0.5));
  CHECK(H.at(st({0, 2})) == doctest::Approx(0.5));
  CHECK(H.at(st({1, 1})) == 0.0);
  CHECK(std::exp(model.log_prefactor()) * H.at(st({2, 2})) == doctest::Approx(1.0 / 256).epsilon(1e-12));
}

TEST_CASE("posterior of the step count") {
  CoalescentModel model({1.0, uniform_R(2), std::nullopt}, st({2, 2}));
  const auto post = oracle::tau_posterior(model, 1e-10);
  // Exact rational enumeration, tau = 1..10.
  const double expected[] = {0.0,
                             0.0,
                             0.5925925925925926,
                             0.26337448559670784,
                             0.09510745313214448,
                             0.03251536859218615,
                             0.010928776665707012,
                             0.0036529611628258515,
                             0.0012187687884519707,
                             0.0004063801592073258};
  REQUIRE(post.probability.size() > 10);
  CHECK(post.probability[0] == 0.0);
  double head = 0.0;
  for (int t = 1; t <= 10; ++t) {
    CHECK(post.probability[static_cast<std::size_t>(t)] == doctest::Approx(expected[t - 1]).epsilon(1e-10));
    head += post.probability[static_cast<std::size_t>(t)];
  }
  CHECK(head == doctest::Approx(0.99979678669).epsilon(1e-10));
  double total = post.tail_mass;
  for (double p : post.probability) {
    CHECK(p >= 0.0);
    total += p;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(post.tail_mass < 1e-10);
}

TEST_CASE("oracles are invariant under relabelling of types") {
  for (double mu : {0.5, 1.0, 2.0}) {
    for (const auto& [a, b] : {std::pair{st({3, 1}), st({1, 3})}, std::pair{st({4, 2}), st({2, 4})}}) {
      CoalescentModel ma({mu, uniform_R(2), std::nullopt}, a);
      CoalescentModel mb({mu, uniform_R(2), std::nullopt}, b);
      CHECK(std::abs(exact_normalizer_backward(ma) - exact_normalizer_backward(mb)) < 1e-12);
      CHECK(std::abs(exact_marginal_forward(ma) - exact_marginal_forward(mb)) < 1e-12);
    }
  }
}

TEST_CASE("migration oracle is symmetric in groups") {
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2, 2);
  G(0, 1) = G(1, 0) = 0.5;
  const ParameterPoint th{1.0, uniform_R(2), G};
  MigrationModel a(th, 2, st({2, 1, 1, 0}));
  MigrationModel b(th, 2, st({1, 0, 2, 1}));
  const double za = oracle::backward_normalizer(a);
  CHECK(za > 0.0);
  CHECK(za == doctest::Approx(oracle::backward_normalizer(b)).epsilon(1e-12));
  const auto post = oracle::tau_posterior(a);
  double total = post.tail_mass;
  for (double p : post.probability) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("oracle size limits") {
  CoalescentModel model({1.0, uniform_R(3), std::nullopt}, st({20, 20, 20}));
  CHECK_THROWS_AS(oracle::backward_normalizer(model, {50}), OracleSizeError);
}
