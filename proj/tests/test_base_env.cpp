#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "rdslab/base_env.hpp"

using namespace rds;

TEST_CASE("iid base validates weights") {
  CHECK_THROWS_AS(BaseProcess::make_iid({"a", "b"}, {0.7, 0.7}),
                  std::invalid_argument);
  CHECK_THROWS_AS(BaseProcess::make_iid({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(BaseProcess::make_iid({"a", "b"}, {1.0}),
                  std::invalid_argument);
  const auto p = BaseProcess::make_iid({"a", "b"}, {0.25, 0.75});
  CHECK(p.n_symbols() == 2);
}

TEST_CASE("markov base computes the stationary distribution") {
  const auto p = BaseProcess::make_markov(
      {"a", "b"}, {{0.9, 0.1}, {0.1, 0.9}});
  REQUIRE(p.stationary.size() == 2);
  CHECK(p.stationary[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(p.stationary[1] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("markov base rejects non-stochastic kernels") {
  CHECK_THROWS_AS(
      BaseProcess::make_markov({"a", "b"}, {{0.9, 0.2}, {0.1, 0.9}}),
      std::invalid_argument);
}

TEST_CASE("reversed kernel of a reversible chain is itself") {
  const auto p = BaseProcess::make_markov(
      {"a", "b"}, {{0.9, 0.1}, {0.1, 0.9}});
  const auto rev = p.reversed_kernel();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(rev[i][j] == doctest::Approx(p.transition[i][j]).epsilon(1e-12));
}

TEST_CASE("sample_path is bit-exact under reseeding") {
  const auto p = BaseProcess::make_iid({"a", "b"}, {0.5, 0.5});
  const auto one = sample_path(p, 10, 100, 42);
  const auto two = sample_path(p, 10, 100, 42);
  CHECK(one.symbols == two.symbols);
  CHECK(one.length() == 111);
  CHECK_THROWS_AS(one.symbol(101), std::out_of_range);
  CHECK_THROWS_AS(one.symbol(-11), std::out_of_range);
}

TEST_CASE("iid path frequencies match the weights") {
  const auto p = BaseProcess::make_iid({"a", "b"}, {0.25, 0.75});
  const auto path = sample_path(p, 0, 40000, 7);
  long count_b = 0;
  for (long j = 0; j <= path.n_future; ++j) count_b += path.symbol(j);
  const double freq = static_cast<double>(count_b) / (path.n_future + 1);
  // 3 sigma band around 0.75, sd = sqrt(p(1-p)/n)
  CHECK(std::fabs(freq - 0.75) < 3.0 * std::sqrt(0.25 * 0.75 / 40000.0));
}

TEST_CASE("psi_upper is geometric for the symmetric two-state chain") {
  // P^k deviation decays with the spectral gap 0.8
  const auto p = BaseProcess::make_markov(
      {"a", "b"}, {{0.9, 0.1}, {0.1, 0.9}});
  const auto psi = psi_upper(p, 6);
  REQUIRE(psi.size() == 6);
  for (int k = 1; k <= 6; ++k)
    CHECK(psi[k - 1] == doctest::Approx(std::pow(0.8, k)).epsilon(1e-10));
}

TEST_CASE("psi_upper vanishes for iid bases") {
  const auto p = BaseProcess::make_iid({"a", "b"}, {0.3, 0.7});
  for (double v : psi_upper(p, 8)) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("periodic chains are rejected at construction") {
  CHECK_THROWS_WITH_AS(
      BaseProcess::make_markov({"a", "b"}, {{0.0, 1.0}, {1.0, 0.0}}),
      doctest::Contains("not primitive"), std::invalid_argument);
}

TEST_CASE("upper mixing criterion") {
  const auto iid = BaseProcess::make_iid({"a", "b"}, {0.5, 0.5});
  SUBCASE("holds for rho = 1/2") {
    const auto rep = check_upper_mixing_criterion(iid, {0.5, 0.5}, 10);
    CHECK(rep.criterion_ok);
    CHECK(rep.e_rho == doctest::Approx(0.5));
    CHECK(rep.rhs == doctest::Approx(1.0));
    CHECK(rep.lhs == doctest::Approx(0.0));
  }
  SUBCASE("fails without mean contraction") {
    const auto rep = check_upper_mixing_criterion(iid, {1.0, 1.0}, 10);
    CHECK_FALSE(rep.criterion_ok);
    CHECK(rep.reason == "mean contraction not < 1");
  }
  SUBCASE("rejects rho outside (0,1]") {
    CHECK_THROWS_AS(check_upper_mixing_criterion(iid, {1.2, 1.1}, 10),
                    std::invalid_argument);
  }
}
