#ifndef RDSLAB_LIMIT_STATS_HPP
#define RDSLAB_LIMIT_STATS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rdslab/martingale.hpp"
#include "rdslab/observable.hpp"
#include "rdslab/transfer_engine.hpp"

namespace rds {

// One quenched orbit x_0..x_n with x_0 drawn from the equivariant density.
std::vector<double> sample_trajectory(const Ensemble& ens,
                                      const BasePath& path,
                                      const Density& density0, long n,
                                      std::uint64_t seed);

// S_n u = sum_{j<n} u_j(x_j), components in R^e.
std::vector<double> birkhoff_sum(const std::vector<double>& traj,
                                 const Ensemble& ens, const BasePath& path,
                                 const CenteredObservable& u, long n);

// Normalized Birkhoff process W and double-sum process WW on the j/n grid,
// plus the quadratic variation term Q closing the pairing identity
// W^b W^g = WW^bg + WW^gb + Q^bg.
struct PathStats {
  long n = 0;
  int e = 1;
  std::vector<std::vector<double>> W;   // grid point -> e values
  std::vector<std::vector<double>> WW;  // grid point -> e*e values
  std::vector<std::vector<double>> Q;   // grid point -> e*e values
  double x0 = 0.0;
  std::uint64_t path_id = 0;

  double pairing_deviation() const;  // max grid deviation of the identity
};

PathStats iterated_path(const std::vector<double>& traj, const Ensemble& ens,
                        const BasePath& path, const CenteredObservable& v,
                        long n);

// e x e estimate with a per-entry error model: dispersion across path
// positions + geometric series tail + one-bin discretization allowance.
struct EstimateMatrix {
  int e = 1;
  std::vector<double> value;  // row-major
  std::vector<double> se;

  double at(int b, int g) const {
    return value[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)];
  }
  double se_at(int b, int g) const {
    return se[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)];
  }
  double min_eigenvalue() const;  // of the symmetrized value
};

struct SeriesOptions {
  int n_lags = 60;
  int n_positions = 256;
  double rho_hat = 0.5;  // decay rate used for the truncation tail bound
};

// Sigma via the lag-correlation series: lag-0 term plus symmetrized lagged
// covariances, Ulam quadrature per path position.
EstimateMatrix estimate_sigma_correlation(const Ensemble& ens,
                                          const BasePath& path,
                                          const PathDensities& dens,
                                          const CenteredObservable& v,
                                          const SeriesOptions& opts);

// Sigma via the martingale route: position average of sum_bins m m^T h.
EstimateMatrix estimate_sigma_martingale(const Ensemble& ens,
                                         const BasePath& path,
                                         const PathDensities& dens,
                                         const MField& m, int n_positions);

// E = sum_{n>=1} lagged covariance matrix (no symmetrization, no lag 0).
EstimateMatrix estimate_E(const Ensemble& ens, const BasePath& path,
                          const PathDensities& dens,
                          const CenteredObservable& v,
                          const SeriesOptions& opts);

struct DriftCorrection {
  EstimateMatrix correction;  // E computed on v
  EstimateMatrix lagged_m;    // same series on m; must vanish
  bool lagged_m_ok = false;   // every |entry| < 3 se
};

DriftCorrection drift_correction_limit(const Ensemble& ens,
                                       const BasePath& path,
                                       const PathDensities& dens,
                                       const CenteredObservable& v,
                                       const MField& m,
                                       const SeriesOptions& opts);

struct CltEntry {
  std::string label;
  double ks = 0.0;
  double threshold = 0.0;
  bool pass = false;
  bool skipped = false;
  std::string note;
};

struct CltResult {
  std::vector<CltEntry> entries;
  bool pass = true;
};

// Empirical law of S_n/sqrt(n) over an ensemble of quenched orbits against
// Normal(0, Sigma) per component and for the uniform unit projection.
// Threshold: 1.63/sqrt(n_paths) + model allowance.
CltResult clt_test(const Ensemble& ens, const BasePath& path,
                   const Density& density0, const CenteredObservable& v,
                   long n, long n_paths, const EstimateMatrix& sigma,
                   std::uint64_t seed, int n_threads = 0,
                   double model_allowance = 0.01);

struct LilReport {
  std::vector<double> ratios;  // max_n |S_n| / sqrt(2 Sigma n lnln n) per path
  double frac_above_1_5 = 0.0;
  double frac_in_band = 0.0;  // fraction in [0.4, 1.5]
};

LilReport lil_envelope(const Ensemble& ens, const BasePath& path,
                       const Density& density0, const CenteredObservable& v,
                       double sigma_scalar, long n_max, long n_paths,
                       std::uint64_t seed, int n_threads = 0);

struct WipMeanResult {
  EstimateMatrix mean_WW;      // empirical mean of WW(1) with MC SEs
  std::vector<double> z;       // per entry vs the E estimate
  bool pass = true;            // all |z| < 3
};

WipMeanResult wip_mean_check(const Ensemble& ens, const BasePath& path,
                             const Density& density0,
                             const CenteredObservable& v, long n, long n_paths,
                             const EstimateMatrix& E, std::uint64_t seed,
                             int n_threads = 0);

struct MomentScaling {
  std::vector<long> n_grid;
  std::vector<double> birkhoff_norm;  // ||max_k |S_k|||_p per n
  std::vector<double> iterated_norm;  // ||max_k |S^2_k|||_{p/2} per n
  double birkhoff_slope = 0.0;        // expected 1/2
  double iterated_slope = 0.0;        // expected 1
};

MomentScaling moment_diagnostics(const Ensemble& ens, const BasePath& path,
                                 const Density& density0,
                                 const CenteredObservable& v,
                                 const std::vector<long>& n_grid, int p,
                                 long n_paths, std::uint64_t seed,
                                 int n_threads = 0);

}  // namespace rds

#endif
