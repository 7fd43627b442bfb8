#ifndef RDSLAB_FAST_SLOW_HPP
#define RDSLAB_FAST_SLOW_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rdslab/limit_stats.hpp"
#include "rdslab/observable.hpp"
#include "rdslab/transfer_engine.hpp"

namespace rds {

// Built-in symbolic univariate function families with analytic derivatives.
struct Fn1 {
  enum class Kind { poly, sinusoid };
  Kind kind = Kind::poly;
  std::vector<double> coeffs;  // poly: c0 + c1 x + c2 x^2 + c3 x^3
  double amp = 0.0;            // sinusoid: offset + amp * sin(freq x + phase)
  double offset = 0.0;
  double freq = 1.0;
  double phase = 0.0;

  static Fn1 zero();
  static Fn1 constant(double c);
  static Fn1 poly(std::vector<double> coeffs);
  static Fn1 sinusoid(double offset, double amp, double freq = 1.0,
                      double phase = 0.0);

  double operator()(double x) const;
  double deriv(double x) const;
};

// Vector/matrix-valued maps whose entries are univariate in one designated
// coordinate; enough for the built-in drift/diffusion families.
struct VectorFn {
  int d = 1;
  std::vector<Fn1> entries;  // size d
  std::vector<int> dep;      // coordinate each entry depends on

  static VectorFn zero(int d);
  void eval(const double* x, double* out) const;
};

struct MatrixFn {
  int rows = 1;
  int cols = 1;
  std::vector<Fn1> entries;  // row-major
  std::vector<int> dep;

  static MatrixFn zero(int rows, int cols);
  void eval(const double* x, double* out) const;  // row-major rows*cols
  double entry(int r, int c, const double* x) const;
  // d entry(r,c) / d x_alpha
  double dentry(int r, int c, int alpha, const double* x) const;
};

struct FastSlowSpec {
  int d = 1;                // slow dimension
  int e = 1;                // fast observable dimension
  VectorFn a;               // drift
  MatrixFn b;               // diffusion, d x e
  double epsilon = 0.05;
  std::vector<double> xi;   // initial slow state

  // checks shapes, epsilon in (0,1), and derivatives against finite
  // differences at random probe points
  void validate(std::uint64_t probe_seed = 7) const;
  long n_steps() const;  // floor(1 / epsilon^2)
};

// Slow path on the grid t_k = k eps^2, k = 0..n_steps. The fast state starts
// from the equivariant density at the path origin.
std::vector<std::vector<double>> integrate_fast_slow(
    const FastSlowSpec& spec, const Ensemble& ens, const BasePath& path,
    const Density& density0, const CenteredObservable& v,
    std::uint64_t traj_seed);

struct HomogenizedSDE {
  int d = 1;
  int e = 1;
  VectorFn a;
  MatrixFn b;
  std::vector<double> Sigma;  // e x e
  std::vector<double> E;      // e x e

  // a_tilde_i(x) = a_i(x) + sum_{alpha,beta,gamma} E^{bg} db_{i,beta}/dx_alpha b_{alpha,gamma}(x)
  void a_tilde(const double* x, double* out) const;
};

// Z(horizon) samples from the Euler-Maruyama scheme with driving increments
// of covariance Sigma dt via the symmetric square root.
std::vector<std::vector<double>> euler_maruyama(const HomogenizedSDE& sde,
                                                const std::vector<double>& xi,
                                                double dt, double horizon,
                                                long n_paths,
                                                std::uint64_t seed,
                                                int n_threads = 0);

struct ComparisonRow {
  int component = 0;
  double mean_fs = 0.0, se_mean_fs = 0.0;
  double mean_sde = 0.0, se_mean_sde = 0.0;
  double var_fs = 0.0, var_sde = 0.0;
  double ks = 0.0;
  bool mean_ok = false, var_ok = false, ks_ok = false;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  bool pass = true;
  std::string mode;  // "frozen-path" or "averaged"
};

struct CompareOptions {
  long n_paths = 2000;
  std::uint64_t seed = 1;
  double dt = 0.0;            // default epsilon^2 / 4
  double ks_threshold = 0.05;
  bool frozen_path = true;    // one quenched noise path for all trajectories
  int n_threads = 0;
  // fitted decay rates per symbol; the uniform-decay regime gate
  std::vector<double> decay_rates;
};

ComparisonReport homogenization_compare(const FastSlowSpec& spec,
                                        const Ensemble& ens,
                                        const BasePath& path,
                                        const Density& density0,
                                        const CenteredObservable& v,
                                        const HomogenizedSDE& sde,
                                        const CompareOptions& opts);

}  // namespace rds

#endif
