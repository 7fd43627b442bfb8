#include "rdslab/base_env.hpp"

#include <cmath>
#include <stdexcept>

#include "rdslab/rng.hpp"

namespace rds {

namespace {

constexpr double kProbTol = 1e-12;
constexpr double kFixedPointTol = 1e-10;

std::vector<std::vector<double>> mat_mul(
    const std::vector<std::vector<double>>& a,
    const std::vector<std::vector<double>>& b) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> c(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a[i][k];
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) c[i][j] += aik * b[k][j];
    }
  return c;
}

bool is_primitive(const std::vector<std::vector<double>>& p) {
  // Wielandt bound: a primitive kernel on S states has P^((S-1)^2+1) > 0.
  const std::size_t s = p.size();
  const std::size_t power = (s - 1) * (s - 1) + 1;
  auto q = p;
  for (std::size_t step = 1; step < power; ++step) q = mat_mul(q, p);
  for (const auto& row : q)
    for (double x : row)
      if (x <= 0.0) return false;
  return true;
}

std::vector<double> stationary_of(
    const std::vector<std::vector<double>>& p) {
  const std::size_t n = p.size();
  std::vector<double> pi(n, 1.0 / static_cast<double>(n));
  for (int iter = 0; iter < 100000; ++iter) {
    std::vector<double> next(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * p[i][j];
    double diff = 0.0;
    for (std::size_t j = 0; j < n; ++j) diff += std::fabs(next[j] - pi[j]);
    pi = std::move(next);
    if (diff < 1e-15) break;
  }
  return pi;
}

int draw_index(const std::vector<double>& weights, Rng& rng) {
  double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace

BaseProcess BaseProcess::make_iid(std::vector<std::string> alphabet,
                                  std::vector<double> weights) {
  BaseProcess p;
  p.kind = BaseKind::iid;
  p.alphabet = std::move(alphabet);
  p.weights = std::move(weights);
  p.validate();
  return p;
}

BaseProcess BaseProcess::make_markov(
    std::vector<std::string> alphabet,
    std::vector<std::vector<double>> transition,
    std::vector<double> stationary) {
  BaseProcess p;
  p.kind = BaseKind::markov;
  p.alphabet = std::move(alphabet);
  p.transition = std::move(transition);
  p.stationary =
      stationary.empty() ? stationary_of(p.transition) : std::move(stationary);
  p.validate();
  return p;
}

void BaseProcess::validate() const {
  if (alphabet.empty()) throw std::invalid_argument("empty alphabet");
  const std::size_t s = alphabet.size();
  if (kind == BaseKind::iid) {
    if (weights.size() != s)
      throw std::invalid_argument("weights size does not match alphabet");
    double sum = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("negative weight");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > kProbTol)
      throw std::invalid_argument("weights do not sum to 1");
    return;
  }
  if (transition.size() != s)
    throw std::invalid_argument("transition size does not match alphabet");
  for (const auto& row : transition) {
    if (row.size() != s) throw std::invalid_argument("transition not square");
    double sum = 0.0;
    for (double x : row) {
      if (x < 0.0) throw std::invalid_argument("negative transition entry");
      sum += x;
    }
    if (std::fabs(sum - 1.0) > kProbTol)
      throw std::invalid_argument("transition row does not sum to 1");
  }
  if (stationary.size() != s)
    throw std::invalid_argument("stationary size does not match alphabet");
  double sum = 0.0;
  for (double x : stationary) {
    if (x < 0.0) throw std::invalid_argument("negative stationary entry");
    sum += x;
  }
  if (std::fabs(sum - 1.0) > kProbTol)
    throw std::invalid_argument("stationary does not sum to 1");
  for (std::size_t j = 0; j < s; ++j) {
    double pij = 0.0;
    for (std::size_t i = 0; i < s; ++i) pij += stationary[i] * transition[i][j];
    if (std::fabs(pij - stationary[j]) > kFixedPointTol)
      throw std::invalid_argument("stationary is not a fixed point");
  }
  if (s > 1 && !is_primitive(transition))
    throw std::invalid_argument("markov kernel is not primitive");
  // Time reversal needs every stationary mass strictly positive.
  for (double x : stationary)
    if (x <= 0.0)
      throw std::invalid_argument("zero-probability stationary state");
}

std::vector<std::vector<double>> BaseProcess::reversed_kernel() const {
  if (kind != BaseKind::markov)
    throw std::logic_error("reversed_kernel: not a markov process");
  const std::size_t s = alphabet.size();
  std::vector<std::vector<double>> rev(s, std::vector<double>(s, 0.0));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      rev[i][j] = stationary[j] * transition[j][i] / stationary[i];
  return rev;
}

int BasePath::symbol(long j) const {
  if (j < -k_past || j > n_future)
    throw std::out_of_range("path index outside [-k_past, n_future]");
  return symbols[static_cast<std::size_t>(j + k_past)];
}

BasePath sample_path(const BaseProcess& process, long k_past, long n_future,
                     std::uint64_t seed) {
  if (k_past < 0 || n_future < 0)
    throw std::invalid_argument("k_past and n_future must be nonnegative");
  process.validate();
  BasePath path;
  path.k_past = k_past;
  path.n_future = n_future;
  path.seed = seed;
  path.symbols.assign(static_cast<std::size_t>(path.length()), 0);
  Rng rng = make_rng(seed);
  const auto at = [&](long j) -> int& {
    return path.symbols[static_cast<std::size_t>(j + k_past)];
  };
  if (process.kind == BaseKind::iid) {
    for (long j = -k_past; j <= n_future; ++j)
      at(j) = draw_index(process.weights, rng);
    return path;
  }
  at(0) = draw_index(process.stationary, rng);
  for (long j = 1; j <= n_future; ++j)
    at(j) = draw_index(process.transition[static_cast<std::size_t>(at(j - 1))],
                       rng);
  const auto rev = process.reversed_kernel();
  for (long j = -1; j >= -k_past; --j)
    at(j) = draw_index(rev[static_cast<std::size_t>(at(j + 1))], rng);
  return path;
}

std::vector<double> psi_upper(const BaseProcess& process, int k_max) {
  if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
  if (process.kind == BaseKind::iid)
    return std::vector<double>(static_cast<std::size_t>(k_max), 0.0);
  const std::size_t s = process.alphabet.size();
  if (s > 1 && !is_primitive(process.transition))
    throw std::invalid_argument(
        "psi-mixing undefined: periodic or reducible chain");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(k_max));
  auto pk = process.transition;
  for (int k = 1; k <= k_max; ++k) {
    if (k > 1) pk = mat_mul(pk, process.transition);
    double psi = 0.0;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j)
        psi = std::max(psi, pk[i][j] / process.stationary[j] - 1.0);
    out.push_back(std::max(psi, 0.0));
  }
  return out;
}

MixingReport check_upper_mixing_criterion(const BaseProcess& process,
                                          const std::vector<double>& rho_values,
                                          int k_max) {
  if (rho_values.size() != process.alphabet.size())
    throw std::invalid_argument("one rho value per symbol required");
  for (double r : rho_values)
    if (!(r > 0.0 && r <= 1.0))
      throw std::invalid_argument("rho values must lie in (0, 1]");
  MixingReport rep;
  rep.psi_upper = psi_upper(process, k_max);
  const std::vector<double>& marginal =
      process.kind == BaseKind::iid ? process.weights : process.stationary;
  double e_rho = 0.0;
  for (std::size_t i = 0; i < rho_values.size(); ++i)
    e_rho += marginal[i] * rho_values[i];
  rep.e_rho = e_rho;
  rep.lhs = rep.psi_upper.back();
  if (e_rho >= 1.0) {
    rep.rhs = 0.0;
    rep.criterion_ok = false;
    rep.reason = "mean contraction not < 1";
    return rep;
  }
  rep.rhs = 1.0 / e_rho - 1.0;
  rep.criterion_ok = rep.lhs < rep.rhs;
  if (!rep.criterion_ok) rep.reason = "psi_U(k_max) >= 1/E[rho] - 1";
  return rep;
}

}  // namespace rds
