#ifndef RDSLAB_TRANSFER_ENGINE_HPP
#define RDSLAB_TRANSFER_ENGINE_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "rdslab/base_env.hpp"
#include "rdslab/fiber_maps.hpp"
#include "rdslab/rng.hpp"

namespace rds {

// Row-stochastic Ulam discretization of a fiber transfer operator, stored
// sparsely by source bin. entries[i][j] = Leb(B_i ∩ T^{-1}B_j) / Leb(B_i),
// computed exactly from affine branch preimages.
struct UlamOperator {
  int n_bins = 0;
  std::vector<int> row_ptr;  // size n_bins+1
  std::vector<int> col;
  std::vector<double> val;

  static UlamOperator identity(int n_bins);

  // Mass pushforward: out[j] = sum_i in[i] * entries[i][j].
  void push(const std::vector<double>& in, std::vector<double>& out) const;
  std::vector<double> push(const std::vector<double>& in) const;

  double entry(int i, int j) const;
  void check_row_stochastic(double tol = 1e-12) const;
};

UlamOperator ulam_matrix(const FiberMap& map, int n_bins);

// One trajectory step. Expanding affine maps shift the mantissa left, so pure
// floating-point orbits empty out and collapse onto fixed points after ~53
// iterations; refreshing the vacated low-order bits with a sub-resolution
// dither (U[0, 2^-45)) keeps the orbit distributionally faithful.
inline double step_orbit(const FiberMap& map, double x, Rng& rng) {
  double y = map.apply(x) +
             std::uniform_real_distribution<double>(0.0, 0x1p-45)(rng);
  if (y >= 1.0) y -= 1.0;
  return y;
}

// Sparse product: applying the result equals applying `first` then `second`.
UlamOperator compose(const UlamOperator& second, const UlamOperator& first);

// Probability mass per bin.
using Density = std::vector<double>;

Density uniform_density(int n_bins);
Density push_density(const UlamOperator& op, const Density& d);
double density_l1(const Density& a, const Density& b);
void check_density(const Density& d, double tol = 1e-10);

inline double bin_midpoint(int i, int n_bins) {
  return (static_cast<double>(i) + 0.5) / static_cast<double>(n_bins);
}
inline int bin_of(double x, int n_bins) {
  int b = static_cast<int>(x * n_bins);
  if (b < 0) b = 0;
  if (b >= n_bins) b = n_bins - 1;
  return b;
}

// Inverse-CDF sampler over bins, uniform within the chosen bin.
class DensitySampler {
 public:
  explicit DensitySampler(const Density& d);
  double sample(Rng& rng) const;

 private:
  std::vector<double> cum_;
  int n_bins_;
};

// Symbol alphabet with its fiber maps and a shared read-only Ulam cache.
// The cache is keyed by (symbol, n_bins) and filled once under a lock.
class Ensemble {
 public:
  Ensemble(BaseProcess base, std::vector<FiberMap> maps);

  const BaseProcess& base() const { return base_; }
  const FiberMap& map(int symbol) const;
  const FiberMap& map_at(const BasePath& path, long j) const {
    return map(path.symbol(j));
  }
  int n_symbols() const { return static_cast<int>(maps_.size()); }

  const UlamOperator& op(int symbol, int n_bins) const;
  const UlamOperator& op_at(const BasePath& path, long j, int n_bins) const {
    return op(path.symbol(j), n_bins);
  }

 private:
  BaseProcess base_;
  std::vector<FiberMap> maps_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::uint64_t, std::unique_ptr<UlamOperator>>
      cache_;
};

// h at index 0 obtained by pushing the uniform density through the
// k_pullback maps preceding the origin.
Density equivariant_density(const Ensemble& ens, const BasePath& path,
                            int n_bins, long k_pullback);

// Densities at every path index, seeded with the uniform density at -k_past.
struct PathDensities {
  long k_past = 0;
  int n_bins = 0;
  std::vector<Density> h;  // index u = j + k_past

  const Density& at(long j) const {
    return h[static_cast<std::size_t>(j + k_past)];
  }
};

PathDensities densities_along(const Ensemble& ens, const BasePath& path,
                              int n_bins);

// Matrix cocycle L_{sigma^{from+n-1}} ... L_{sigma^{from}} as one operator.
UlamOperator operator_cocycle(const Ensemble& ens, const BasePath& path,
                              long from, long n, int n_bins);

struct DecayProfile {
  std::vector<double> sup_deviation;  // index n-1 holds the value for n
  double fitted_rate = 1.0;
  double fitted_K = 0.0;
  bool fit_ok = false;
  long masked_bins = 0;
  bool mask_warning = false;
};

// Sup-norm deviation of the pushed observable from its fiber mean,
// ||L^{(n)} phi - int phi dmu|| over bins, with a geometric log-linear fit.
// phi is given by its bin-midpoint values at index 0.
DecayProfile decay_profile(const Ensemble& ens, const BasePath& path,
                           const PathDensities& dens,
                           const std::vector<double>& phi_bins, long n_max,
                           int n_bins);

struct DualityResidual {
  double left = 0.0;       // Monte Carlo side
  double right = 0.0;      // Ulam quadrature side
  double residual = 0.0;
  double mc_se = 0.0;
};

// Checks int f (g o T^{(n)}) dmu_omega = int (L^{(n)} f) g dmu_{sigma^n omega}.
DualityResidual duality_check(const Ensemble& ens, const BasePath& path,
                              const PathDensities& dens,
                              const std::function<double(double)>& f,
                              const std::function<double(double)>& g, long n,
                              int n_bins, long n_samples, std::uint64_t seed);

}  // namespace rds

#endif
