#include "mlpmcmc/coalescent.hpp"

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

Eigen::MatrixXd zero_diag_R(int d) {
  Eigen::MatrixXd R = Eigen::MatrixXd::Constant(d, d, 1.0 / (d - 1));
  R.diagonal().setZero();
  return R;
}

Eigen::MatrixXd swap_R() {
  Eigen::MatrixXd R(2, 2);
  R << 0, 1, 1, 0;
  return R;
}

ParameterPoint theta(double mu, Eigen::MatrixXd R) { return {mu, std::move(R), std::nullopt}; }

}  // namespace

TEST_CASE("stationary distribution") {
  CHECK(stationary_distribution(uniform_R(3)).isApprox(Eigen::VectorXd::Constant(3, 1.0 / 3), 1e-12));
  Eigen::MatrixXd R(2, 2);
  R << 0.9, 0.1, 0.3, 0.7;
  const auto nu = stationary_distribution(R);
  CHECK(nu[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(nu[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK((nu.transpose() * R - nu.transpose()).norm() < 1e-12);
  CHECK(stationary_distribution(Eigen::MatrixXd::Ones(1, 1))[0] == 1.0);
  CHECK(stationary_distribution(swap_R()).isApprox(Eigen::Vector2d(0.5, 0.5), 1e-12));
  CHECK_THROWS_AS(stationary_distribution(Eigen::MatrixXd::Identity(2, 2)), ModelError);
}

TEST_CASE("model construction checks") {
  CHECK_THROWS_AS(CoalescentModel(theta(1.0, uniform_R(2)), st({2, -1})), ModelError);
  CHECK_THROWS_AS(CoalescentModel(theta(1.0, uniform_R(2)), st({1, 1})), ModelError);
  CHECK_THROWS_AS(CoalescentModel(theta(1.0, uniform_R(2)), st({2, 1, 0})), ModelError);
  CHECK_THROWS_AS(CoalescentModel(theta(-1.0, uniform_R(2)), st({2, 1})), ModelError);
  CHECK_NOTHROW(CoalescentModel(theta(1.0, uniform_R(2)), st({2, 1})));
}

TEST_CASE("forward transition density") {
  const auto th = theta(1.0, uniform_R(2));
  CHECK(forward_transition_density(th, 4, st({1, 1}), st({2, 1})) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(forward_transition_density(th, 4, st({1, 1}), st({0, 2})) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(forward_transition_density(th, 4, st({2, 0}), st({3, 1})) == 0.0);
  CHECK(forward_transition_density(th, 4, st({2, 0}), st({2, 1})) == 0.0);
  CHECK_THROWS_AS(forward_transition_density(th, 4, st({1, 1, 1}), st({2, 1})), ModelError);
  CHECK_THROWS_AS(forward_transition_density(th, 4, st({1, -1}), st({1, 1})), ModelError);
  CHECK_THROWS_AS(forward_transition_density(th, 4, st({1, 0}), st({2, 0})), ModelError);
}

TEST_CASE("forward densities sum to one over successors") {
  for (int d : {2, 3}) {
    for (int m = 3; m <= 6; ++m) {
      for (double mu : {0.5, 1.0, 2.0}) {
        for (const auto& R : {uniform_R(d), zero_diag_R(d)}) {
          const auto th = theta(mu, R);
          for (int n = 2; n < m; ++n) {
            for (const auto& x : compositions(n, d)) {
              double total = 0.0;
              for (int l : {n, n + 1}) {
                for (const auto& z : compositions(l, d)) total += forward_transition_density(th, m, x, z);
              }
              CHECK(std::abs(total - 1.0) < 1e-10);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("backward proposal densities sum to one over predecessors") {
  for (int d : {2, 3}) {
    for (int m = 3; m <= 6; ++m) {
      for (double mu : {0.5, 1.0, 2.0}) {
        for (const auto& R : {uniform_R(d), zero_diag_R(d)}) {
          for (const auto& y : compositions(m, d)) {
            CoalescentModel model(theta(mu, R), y);
            std::vector<State> states{y};
            for (int n = 3; n < m; ++n) {
              for (const auto& x : compositions(n, d)) states.push_back(x);
            }
            for (const auto& x : states) {
              const auto preds = valid_predecessors(model, x);
              if (preds.empty()) continue;
              double total = 0.0;
              for (const auto& [xp, f] : preds) {
                CHECK(f > 0.0);
                CHECK(population(xp) < m);
                total += backward_proposal_density(model, x, xp);
              }
              CHECK(std::abs(total - 1.0) < 1e-10);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("valid predecessors") {
  SUBCASE("level m admits reverse splits only") {
    CoalescentModel model(theta(1.0, uniform_R(2)), st({2, 1}));
    const auto preds = valid_predecessors(model, st({2, 1}));
    REQUIRE(preds.size() == 1);
    CHECK(preds[0].first == st({1, 1}));
    CHECK(preds[0].second == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(backward_proposal_density(model, st({2, 1}), st({1, 1})) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("single type without mutation") {
    CoalescentModel model(theta(0.0, Eigen::MatrixXd::Ones(1, 1)), st({5}));
    for (int k = 3; k <= 5; ++k) {
      const auto preds = valid_predecessors(model, st({k}));
      REQUIRE(preds.size() == 1);
      CHECK(preds[0].first == st({k - 1}));
      CHECK(backward_proposal_density(model, st({k}), st({k - 1})) == 1.0);
    }
  }
  SUBCASE("interior state with mutations and self-loops") {
    CoalescentModel model(theta(1.0, uniform_R(2)), st({2, 2}));
    std::map<State, double, StateLess> f;
    for (const auto& [xp, v] : valid_predecessors(model, st({2, 1}))) f[xp] = v;
    REQUIRE(f.size() == 4);
    CHECK(f[st({1, 1})] == doctest::Approx(1.0 / 4).epsilon(1e-14));
    CHECK(f[st({3, 0})] == doctest::Approx(1.0 / 6).epsilon(1e-14));
    CHECK(f[st({1, 2})] == doctest::Approx(1.0 / 9).epsilon(1e-14));
    CHECK(f[st({2, 1})] == doctest::Approx(1.0 / 9 + 1.0 / 18).epsilon(1e-14));
    double total = 0.0;
    for (const auto& [_, v] : f) total += v;
    CHECK(total == doctest::Approx(25.0 / 36).epsilon(1e-14));
    CHECK(backward_proposal_density(model, st({2, 1}), st({1, 1})) == doctest::Approx(9.0 / 25).epsilon(1e-14));
    CHECK(backward_proposal_density(model, st({2, 1}), st({0, 3})) == 0.0);
  }
  SUBCASE("empty predecessor set") {
    // Only reverse splits leave level m, and no type has two copies.
    CoalescentModel model(theta(1.0, uniform_R(3)), st({1, 1, 1}));
    CHECK(valid_predecessors(model, st({1, 1, 1})).empty());
    Rng rng(1);
    CHECK_THROWS_AS(backward_proposal_sample(model, st({1, 1, 1}), rng), ModelDegenerateError);
    CHECK_THROWS_AS(backward_proposal_density(model, st({1, 1, 1}), st({1, 1, 0})), ModelDegenerateError);
    CHECK(exact_normalizer_backward(model) == 0.0);
  }
}

TEST_CASE("backward proposal sampling frequencies") {
  CoalescentModel model(theta(1.0, uniform_R(2)), st({2, 2}));
  Rng rng(5);
  std::map<State, int, StateLess> counts;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto [xp, dens] = backward_proposal_sample(model, st({2, 1}), rng);
    CHECK(dens == doctest::Approx(backward_proposal_density(model, st({2, 1}), xp)).epsilon(1e-14));
    ++counts[xp];
  }
  CHECK(counts[st({1, 1})] / double(draws) == doctest::Approx(9.0 / 25).epsilon(0.02));
  CHECK(counts[st({3, 0})] / double(draws) == doctest::Approx(6.0 / 25).epsilon(0.02));
  CHECK(counts[st({1, 2})] / double(draws) == doctest::Approx(4.0 / 25).epsilon(0.03));
  CHECK(counts[st({2, 1})] / double(draws) == doctest::Approx(6.0 / 25).epsilon(0.02));
}

TEST_CASE("segment weights") {
  SUBCASE("single type without mutation has unit weights") {
    CoalescentModel model(theta(0.0, Eigen::MatrixXd::Ones(1, 1)), st({4}));
    const auto schedule = make_schedule({3, 2}, 4);
    PathSegment a{st({4}), {st({3})}, 1, true};
    PathSegment b{st({3}), {st({2})}, 2, true};
    CHECK(segment_weight(model, a, 0, schedule) == 1.0);
    CHECK(segment_weight(model, b, 1, schedule) == 1.0);
  }
  SUBCASE("a path ending at a mixed pair has weight zero") {
    CoalescentModel model(theta(1.0, uniform_R(2)), st({2, 1}));
    const auto schedule = make_schedule({2}, 3);
    PathSegment seg{st({2, 1}), {st({1, 1})}, 1, true};
    CHECK(segment_weight(model, seg, 0, schedule) == 0.0);
  }
  SUBCASE("hand-evaluated weight") {
    // (2,2) -> (2,1) -> (2,0): prefactor 3/4 * 2!2!/4!, ratio (1/4)/(1/2) * P/M for the second step.
    CoalescentModel model(theta(1.0, uniform_R(2)), st({2, 2}));
    const auto schedule = make_schedule({3, 2}, 4);
    PathSegment a{st({2, 2}), {st({2, 1})}, 1, true};
    const double P1 = forward_transition_density(model.parameters(), 4, st({2, 1}), st({2, 2}));
    const double M1 = backward_proposal_density(model, st({2, 2}), st({2, 1}));
    CHECK(segment_weight(model, a, 0, schedule) ==
          doctest::Approx(0.75 * (4.0 / 24.0) * P1 / M1).epsilon(1e-14));
    PathSegment b{st({2, 1}), {st({3, 0}), st({2, 0})}, 3, true};
    const double P2 = forward_transition_density(model.parameters(), 4, st({3, 0}), st({2, 1}));
    const double M2 = backward_proposal_density(model, st({2, 1}), st({3, 0}));
    const double P3 = forward_transition_density(model.parameters(), 4, st({2, 0}), st({3, 0}));
    const double M3 = backward_proposal_density(model, st({3, 0}), st({2, 0}));
    CHECK(segment_weight(model, b, 1, schedule) == doctest::Approx(P2 / M2 * P3 / M3 * 0.5).epsilon(1e-14));
  }
  SUBCASE("a segment that missed its level weighs zero") {
    CoalescentModel model(theta(1.0, uniform_R(2)), st({2, 2}));
    const auto schedule = make_schedule({2}, 4);
    PathSegment seg{st({2, 2}), {st({2, 1})}, 1, false};
    CHECK(segment_weight(model, seg, 0, schedule) == 0.0);
  }
}

TEST_CASE("exact oracles on hand-checked instances") {
  SUBCASE("forward oracle 1/18") {
    CoalescentModel model(theta(1.0, swap_R()), st({2, 1}));
    CHECK(std::abs(exact_marginal_forward(model) - 1.0 / 18.0) < 1e-10);
    CHECK(exact_normalizer_backward(model) == 0.0);
  }
  SUBCASE("single type") {
    for (int m = 3; m <= 8; ++m) {
      for (double mu : {0.0, 0.7}) {
        CoalescentModel model(theta(mu, Eigen::MatrixXd::Ones(1, 1)), st({m}));
        CHECK(exact_marginal_forward(model) == doctest::Approx(1.0).epsilon(1e-12));
        if (mu == 0.0) CHECK(exact_normalizer_backward(model) == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
  SUBCASE("values from exact rational arithmetic") {
    // Independently computed with fractions.Fraction.
    struct Case {
      double mu;
      double backward;
      double forward;
    };
    for (const auto& c : {Case{0.5, 1.0 / 294, 1.0 / 72}, Case{1.0, 1.0 / 256, 1.0 / 48}, Case{2.0, 1.0 / 300, 1.0 / 36}}) {
      CoalescentModel model(theta(c.mu, uniform_R(2)), st({2, 2}));
      CHECK(exact_normalizer_backward(model) == doctest::Approx(c.backward).epsilon(1e-12));
      CHECK(exact_marginal_forward(model) == doctest::Approx(c.forward).epsilon(1e-12));
    }
    CoalescentModel d3(theta(1.0, uniform_R(3)), st({2, 1, 1}));
    CHECK(exact_normalizer_backward(d3) == doctest::Approx(1.0 / 5184).epsilon(1e-12));
    CHECK(exact_marginal_forward(d3) == doctest::Approx(1.0 / 972).epsilon(1e-12));
    Eigen::MatrixXd R(2, 2);
    R << 0.9, 0.1, 0.3, 0.7;
    CoalescentModel asym(theta(0.5, R), st({3, 2}));
    CHECK(exact_normalizer_backward(asym) == doctest::Approx(954059.0 / 1319915520.0).epsilon(1e-12));
    CHECK(exact_marginal_forward(asym) == doctest::Approx(1219.0 / 450560.0).epsilon(1e-12));
  }
  SUBCASE("type exchange symmetry") {
    CoalescentModel a(theta(1.0, uniform_R(2)), st({3, 1}));
    CoalescentModel b(theta(1.0, uniform_R(2)), st({1, 3}));
    CHECK(exact_normalizer_backward(a) == doctest::Approx(3.0 / 512).epsilon(1e-12));
    CHECK(std::abs(exact_normalizer_backward(a) - exact_normalizer_backward(b)) < 1e-15);
    CHECK(std::abs(exact_marginal_forward(a) - exact_marginal_forward(b)) < 1e-15);
  }
  SUBCASE("size limits") {
    CHECK_THROWS_AS(exact_normalizer_backward(CoalescentModel(theta(1.0, uniform_R(2)), st({5, 4}))), OracleSizeError);
    CHECK_THROWS_AS(exact_marginal_forward(CoalescentModel(theta(1.0, uniform_R(4)), st({1, 1, 1, 1}))), OracleSizeError);
  }
}

TEST_CASE("level schedule builder") {
  CHECK(build_level_schedule(10, 4).levels == std::vector<int>{8, 6, 4, 2});
  CHECK(build_level_schedule(29, 14).levels ==
        std::vector<int>{27, 25, 23, 21, 19, 17, 16, 14, 12, 10, 8, 6, 4, 2});
  const auto s = build_level_schedule(29, 14);
  for (std::size_t i = 1; i < s.size(); ++i) {
    const int gap = s.levels[i - 1] - s.levels[i];
    CHECK((gap == 1 || gap == 2));
  }
  CHECK_NOTHROW(validate_level_schedule(s, 29));
  CHECK(build_level_schedule(7, 1).levels == std::vector<int>{2});
  CHECK(build_level_schedule(4, 2).levels == std::vector<int>{3, 2});
  CHECK(build_level_schedule(4, 2).deadlines == std::vector<int>{200, 400});
  for (int m = 3; m <= 40; ++m) {
    for (int p = 1; p <= m - 2; ++p) {
      const auto sch = build_level_schedule(m, p);
      CHECK(sch.size() == static_cast<std::size_t>(p));
      CHECK_NOTHROW(validate_level_schedule(sch, m));
    }
  }
  CHECK_THROWS_AS(build_level_schedule(10, 0), ScheduleError);
  CHECK_THROWS_AS(build_level_schedule(10, 9), ScheduleError);
}

TEST_CASE("level count sampler") {
  const std::vector<int> wide{8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28};
  for (double p : level_count_probabilities(1.0, wide)) CHECK(p == doctest::Approx(1.0 / 21).epsilon(1e-12));
  const std::vector<int> two{2, 3};
  const auto probs = level_count_probabilities(2.0, two);
  CHECK(probs[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  Rng rng(9);
  CHECK_THROWS(sample_level_count(0.0, two, rng));
  CHECK_THROWS(sample_level_count(1.0, std::vector<int>{}, rng));

  std::map<int, int> counts;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[sample_level_count(1.0, wide, rng)];
  CHECK(counts.size() == wide.size());
  for (const auto& [p, c] : counts) CHECK(std::abs(c / double(draws) - 1.0 / 21) < 0.01);
}
