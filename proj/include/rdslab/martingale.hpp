#ifndef RDSLAB_MARTINGALE_HPP
#define RDSLAB_MARTINGALE_HPP

#include <cstdint>
#include <map>
#include <vector>

#include "rdslab/observable.hpp"
#include "rdslab/transfer_engine.hpp"

namespace rds {

// chi at path indices 0..j_max, represented on bin midpoints, truncated at k
// terms of the backward transfer series.
struct ChiField {
  int dim = 1;
  int n_bins = 0;
  long j_max = 0;
  int truncation_k = 0;
  double est_error = 0.0;
  long masked_bins = 0;
  // values[j][i * dim + c]
  std::vector<std::vector<double>> values;

  double at(long j, int bin, int c) const {
    return values[static_cast<std::size_t>(j)]
                 [static_cast<std::size_t>(bin) * dim +
                  static_cast<std::size_t>(c)];
  }
};

// m restricted to one branch piece of a bin that straddles a branch
// boundary; chi o T jumps there, so a single midpoint value is wrong on one
// side of the boundary.
struct MPiece {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> value;  // per component
};

// Same midpoint layout as ChiField for the martingale part, covering indices
// 0..j_max-1, plus per-piece values on branch-straddling bins.
struct MField {
  int dim = 1;
  int n_bins = 0;
  long j_max = 0;
  std::vector<std::vector<double>> values;
  // pieces[j] maps a straddling bin index to its branch pieces
  std::vector<std::map<int, std::vector<MPiece>>> pieces;

  double at(long j, int bin, int c) const {
    return values[static_cast<std::size_t>(j)]
                 [static_cast<std::size_t>(bin) * dim +
                  static_cast<std::size_t>(c)];
  }
  // branch-consistent lookup at an arbitrary point
  double at_point(long j, double x, int c) const;
};

struct ChiOptions {
  double k_hat = 1.0;    // fitted decay intercept
  double rho_hat = 0.5;  // fitted decay rate, used for the truncation bound
};

// chi_j = sum_{n=1..k} L^{(n)} (v_{j-n} dmu_{j-n}) / h_j on bin midpoints.
ChiField compute_chi(const Ensemble& ens, const BasePath& path,
                     const PathDensities& dens, const CenteredObservable& v,
                     int k, int n_bins, long j_max,
                     const ChiOptions& opts = {});

// m_j(x) = v_j(x) + chi_j(x) - chi_{j+1}(T_j x), piecewise-constant lookup
// of chi at the image point.
MField compute_m(const Ensemble& ens, const BasePath& path,
                 const CenteredObservable& v, const ChiField& chi);

// residual[j] = max over bins and components of |L_j(m_j dmu_j) / h_{j+1}|.
std::vector<double> verify_vanishing(const Ensemble& ens, const BasePath& path,
                                     const PathDensities& dens,
                                     const MField& m);

struct MartingaleCheckRow {
  long lag_a = 0;
  long lag_b = 0;
  int comp = 0;
  int test_fn = 0;  // 0: g=1, 1: g=x, 2: g=x^2
  double estimate = 0.0;
  double se = 0.0;
  bool ok = false;  // |estimate| < 3 se
};

// Orthogonality of m along the orbit against future test functions:
// E[m_a(x_a) g(x_b)] for 1 <= a < b <= n under mu_omega-distributed starts.
std::vector<MartingaleCheckRow> reverse_martingale_check(
    const Ensemble& ens, const BasePath& path, const PathDensities& dens,
    const MField& m, long n, long n_paths, std::uint64_t seed);

}  // namespace rds

#endif
