#ifndef RDSLAB_BASE_ENV_HPP
#define RDSLAB_BASE_ENV_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace rds {

enum class BaseKind { iid, markov };

// Stationary generator of the driving symbol process. Either i.i.d. draws
// from a weight vector or a finite-state stationary Markov chain. Immutable
// after construction; validate() is called by the factories.
struct BaseProcess {
  BaseKind kind = BaseKind::iid;
  std::vector<std::string> alphabet;
  std::vector<double> weights;                    // iid
  std::vector<std::vector<double>> transition;    // markov
  std::vector<double> stationary;                 // markov

  static BaseProcess make_iid(std::vector<std::string> alphabet,
                              std::vector<double> weights);
  // Stationary distribution is computed from the kernel unless supplied.
  static BaseProcess make_markov(std::vector<std::string> alphabet,
                                 std::vector<std::vector<double>> transition,
                                 std::vector<double> stationary = {});

  int n_symbols() const { return static_cast<int>(alphabet.size()); }
  void validate() const;  // throws std::invalid_argument on violation

  // rev[i][j] = stationary[j] * transition[j][i] / stationary[i]
  std::vector<std::vector<double>> reversed_kernel() const;
};

// Two-sided realization of the driving noise: symbol indices for
// j in [-k_past, n_future]. Regeneration from the same seed is bit-exact.
struct BasePath {
  std::vector<int> symbols;  // index u = j + k_past
  long k_past = 0;
  long n_future = 0;
  std::uint64_t seed = 0;

  int symbol(long j) const;
  long length() const { return k_past + n_future + 1; }
};

struct MixingReport {
  std::vector<double> psi_upper;  // psi_U(k), k = 1..k_max
  double e_rho = 0.0;             // mean contraction factor under the base
  double lhs = 0.0;               // psi_U(k_max)
  double rhs = 0.0;               // 1/E[rho] - 1
  bool criterion_ok = false;
  std::string reason;             // set when criterion_ok is false
};

// Draws a stationary two-sided path; the backward half of a Markov path uses
// the exact time-reversed kernel.
BasePath sample_path(const BaseProcess& process, long k_past, long n_future,
                     std::uint64_t seed);

// psi_U(k) = max_{i,j} (P^k[i][j]/pi[j] - 1)^+ for k = 1..k_max.
// Identically zero for iid processes.
std::vector<double> psi_upper(const BaseProcess& process, int k_max);

// Evaluates psi_U(k_max) < 1/E[rho] - 1 with E[rho] < 1 required.
MixingReport check_upper_mixing_criterion(const BaseProcess& process,
                                          const std::vector<double>& rho_values,
                                          int k_max);

}  // namespace rds

#endif
