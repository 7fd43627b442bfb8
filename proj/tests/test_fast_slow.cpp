#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "rdslab/fast_slow.hpp"

using namespace rds;

namespace {

FiberMap doubling() {
  MapSpec spec;
  spec.family = MapFamily::beta;
  spec.beta = 2;
  return build_map(spec, "a");
}

}  // namespace

TEST_CASE("Fn1 values and analytic derivatives") {
  const auto p = Fn1::poly({1.0, -2.0, 0.0, 3.0});  // 1 - 2x + 3x^3
  CHECK(p(2.0) == doctest::Approx(1.0 - 4.0 + 24.0));
  CHECK(p.deriv(2.0) == doctest::Approx(-2.0 + 9.0 * 4.0));

  const auto s = Fn1::sinusoid(2.0, 1.0);  // 2 + sin(x)
  CHECK(s(0.0) == doctest::Approx(2.0));
  CHECK(s(M_PI / 2.0) == doctest::Approx(3.0));
  CHECK(s.deriv(0.0) == doctest::Approx(1.0));

  CHECK(Fn1::zero()(0.7) == doctest::Approx(0.0));
  CHECK(Fn1::constant(4.0)(0.7) == doctest::Approx(4.0));
  CHECK(Fn1::constant(4.0).deriv(0.7) == doctest::Approx(0.0));
}

TEST_CASE("spec validation checks shapes, epsilon and derivatives") {
  FastSlowSpec spec;
  spec.d = 1;
  spec.e = 1;
  spec.a = VectorFn::zero(1);
  spec.b = MatrixFn::zero(1, 1);
  spec.b.entries[0] = Fn1::sinusoid(2.0, 1.0);
  spec.epsilon = 0.1;
  spec.xi = {0.0};
  CHECK_NOTHROW(spec.validate());
  // floor(1/eps^2); floating-point division may land one below the integer
  CHECK(spec.n_steps() >= 99);
  CHECK(spec.n_steps() <= 100);

  SUBCASE("epsilon outside (0,1)") {
    spec.epsilon = 1.5;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.epsilon = 0.0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }
  SUBCASE("shape mismatch") {
    spec.xi = {0.0, 1.0};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }
}

TEST_CASE("zero system produces a constant slow path") {
  FastSlowSpec spec;
  spec.a = VectorFn::zero(1);
  spec.b = MatrixFn::zero(1, 1);
  spec.epsilon = 0.1;
  spec.xi = {0.3};
  const auto ens = Ensemble(BaseProcess::make_iid({"a"}, {1.0}), {doubling()});
  const auto path = sample_path(ens.base(), 20, spec.n_steps() + 1, 1);
  const auto dens = densities_along(ens, path, 256);
  Observable obs;
  obs.components.push_back(PolyTerm{{-0.5, 1.0}});
  const auto v = center_observable(obs, ens, path, dens);
  const auto slow = integrate_fast_slow(spec, ens, path, dens.at(0), v, 9);
  REQUIRE(slow.size() == static_cast<std::size_t>(spec.n_steps()) + 1);
  for (const auto& xk : slow) CHECK(xk[0] == doctest::Approx(0.3));
}

TEST_CASE("a_tilde adds the drift correction") {
  // d = e = 1, a = 0, b(x) = 2 + sin(x): a~(x) = E * b'(x) * b(x)
  HomogenizedSDE sde;
  sde.a = VectorFn::zero(1);
  sde.b = MatrixFn::zero(1, 1);
  sde.b.entries[0] = Fn1::sinusoid(2.0, 1.0);
  sde.Sigma = {0.25};
  sde.E = {1.0 / 12.0};
  const double x = 0.7;
  double out = 0.0;
  sde.a_tilde(&x, &out);
  CHECK(out ==
        doctest::Approx((1.0 / 12.0) * std::cos(x) * (2.0 + std::sin(x)))
            .epsilon(1e-12));

  SUBCASE("zero E leaves the drift unchanged") {
    sde.E = {0.0};
    sde.a_tilde(&x, &out);
    CHECK(out == doctest::Approx(0.0));
  }
}

TEST_CASE("euler_maruyama reproduces scaled Brownian motion") {
  // a~ = 0, b = 1, noise of covariance Sigma dt: Z(1) ~ N(0, Sigma)
  HomogenizedSDE sde;
  sde.a = VectorFn::zero(1);
  sde.b = MatrixFn::zero(1, 1);
  sde.b.entries[0] = Fn1::constant(1.0);
  sde.Sigma = {0.25};
  sde.E = {0.0};
  const long n_paths = 20000;
  const auto z = euler_maruyama(sde, {0.0}, 1e-2, 1.0, n_paths, 3);
  REQUIRE(z.size() == static_cast<std::size_t>(n_paths));
  double mean = 0.0, sq = 0.0;
  for (const auto& p : z) {
    mean += p[0];
    sq += p[0] * p[0];
  }
  mean /= n_paths;
  const double var = sq / n_paths - mean * mean;
  CHECK(std::fabs(mean) < 3.0 * std::sqrt(0.25 / n_paths));
  CHECK(var == doctest::Approx(0.25).epsilon(0.05));

  CHECK_THROWS_AS(euler_maruyama(sde, {0.0}, 0.5, 1.0, 10, 3),
                  std::invalid_argument);  // dt too coarse
}

TEST_CASE("homogenization_compare guards the decay regime") {
  FastSlowSpec spec;
  spec.a = VectorFn::zero(1);
  spec.b = MatrixFn::zero(1, 1);
  spec.b.entries[0] = Fn1::sinusoid(2.0, 1.0);
  spec.epsilon = 0.2;
  spec.xi = {0.0};
  const auto ens = Ensemble(BaseProcess::make_iid({"a"}, {1.0}), {doubling()});
  const auto path = sample_path(ens.base(), 20, spec.n_steps() + 1, 2);
  const auto dens = densities_along(ens, path, 256);
  Observable obs;
  obs.components.push_back(PolyTerm{{-0.5, 1.0}});
  const auto v = center_observable(obs, ens, path, dens);
  HomogenizedSDE sde;
  sde.a = spec.a;
  sde.b = spec.b;
  sde.Sigma = {0.25};
  sde.E = {1.0 / 12.0};

  CompareOptions opts;
  opts.n_paths = 50;
  SUBCASE("empty decay rates are rejected") {
    CHECK_THROWS_WITH_AS(
        homogenization_compare(spec, ens, path, dens.at(0), v, sde, opts),
        doctest::Contains("uniform-decay"), std::invalid_argument);
  }
  SUBCASE("slow decay is rejected") {
    opts.decay_rates = {0.97};
    CHECK_THROWS_WITH_AS(
        homogenization_compare(spec, ens, path, dens.at(0), v, sde, opts),
        doctest::Contains("decay-regime"), std::runtime_error);
  }
  SUBCASE("acceptable decay runs and reports both statistics") {
    opts.decay_rates = {0.5};
    opts.dt = 1e-3;
    const auto rep =
        homogenization_compare(spec, ens, path, dens.at(0), v, sde, opts);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.mode == "frozen-path");
  }
}
