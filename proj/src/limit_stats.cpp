#include "rdslab/limit_stats.hpp"

#include <cmath>
#include <stdexcept>

#include "rdslab/parallel.hpp"
#include "rdslab/rng.hpp"
#include "rdslab/stats.hpp"

namespace rds {

namespace {

// Bin-midpoint tables of all components for indices [0, j_hi], used by the
// Ulam quadrature estimators.
std::vector<std::vector<double>> bin_tables(const Ensemble& ens,
                                            const BasePath& path,
                                            const CenteredObservable& v,
                                            long j_hi, int n_bins) {
  const int e = v.dim();
  std::vector<std::vector<double>> tables(static_cast<std::size_t>(j_hi) + 1);
  for (long j = 0; j <= j_hi; ++j) {
    auto& t = tables[static_cast<std::size_t>(j)];
    t.resize(static_cast<std::size_t>(n_bins) * e);
    const FiberMap& map = ens.map_at(path, j);
    for (int bin = 0; bin < n_bins; ++bin) {
      const double x = bin_midpoint(bin, n_bins);
      for (int c = 0; c < e; ++c)
        t[static_cast<std::size_t>(bin) * e + static_cast<std::size_t>(c)] =
            v.eval_component(j, c, map, x);
    }
  }
  return tables;
}

EstimateMatrix reduce_positions(const std::vector<std::vector<double>>& vals,
                                int e, double extra_se) {
  // vals: per position, e*e entries
  EstimateMatrix out;
  out.e = e;
  out.value.assign(static_cast<std::size_t>(e) * e, 0.0);
  out.se.assign(static_cast<std::size_t>(e) * e, 0.0);
  const std::size_t P = vals.size();
  for (int b = 0; b < e; ++b)
    for (int g = 0; g < e; ++g) {
      std::vector<double> xs(P);
      for (std::size_t p = 0; p < P; ++p)
        xs[p] = vals[p][static_cast<std::size_t>(b) * e +
                        static_cast<std::size_t>(g)];
      const MeanVar mv = mean_var(xs);
      out.value[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)] =
          mv.mean;
      out.se[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)] =
          mv.se + extra_se;
    }
  return out;
}

// Lagged fiber covariances C_n(j) = int v^b (v^g o T^{(n)}) dmu_j by Ulam
// quadrature, for positions j < P and lags 1..n_lags. Returns
// lagcov[j][n-1][b*e+g] and fills lag0[j][b*e+g].
void lagged_covariances(const Ensemble& ens, const BasePath& path,
                        const PathDensities& dens,
                        const CenteredObservable& v, int P, int n_lags,
                        std::vector<std::vector<std::vector<double>>>& lagcov,
                        std::vector<std::vector<double>>& lag0) {
  const int e = v.dim();
  const int n_bins = dens.n_bins;
  const auto tables = bin_tables(ens, path, v, P - 1 + n_lags, n_bins);
  lagcov.assign(static_cast<std::size_t>(P), {});
  lag0.assign(static_cast<std::size_t>(P),
              std::vector<double>(static_cast<std::size_t>(e) * e, 0.0));
  std::vector<std::vector<double>> w(static_cast<std::size_t>(e));
  std::vector<double> tmp;
  for (int j = 0; j < P; ++j) {
    const Density& hj = dens.at(j);
    const auto& tj = tables[static_cast<std::size_t>(j)];
    for (int b = 0; b < e; ++b) {
      auto& wb = w[static_cast<std::size_t>(b)];
      wb.resize(static_cast<std::size_t>(n_bins));
      for (int bin = 0; bin < n_bins; ++bin)
        wb[static_cast<std::size_t>(bin)] =
            tj[static_cast<std::size_t>(bin) * e + static_cast<std::size_t>(b)] *
            hj[static_cast<std::size_t>(bin)];
    }
    for (int b = 0; b < e; ++b)
      for (int g = 0; g < e; ++g) {
        KahanSum s;
        for (int bin = 0; bin < n_bins; ++bin)
          s.add(w[static_cast<std::size_t>(b)][static_cast<std::size_t>(bin)] *
                tj[static_cast<std::size_t>(bin) * e +
                   static_cast<std::size_t>(g)]);
        lag0[static_cast<std::size_t>(j)][static_cast<std::size_t>(b) * e +
                                          static_cast<std::size_t>(g)] =
            s.value();
      }
    auto& rows = lagcov[static_cast<std::size_t>(j)];
    rows.assign(static_cast<std::size_t>(n_lags),
                std::vector<double>(static_cast<std::size_t>(e) * e, 0.0));
    for (int n = 1; n <= n_lags; ++n) {
      const auto& op = ens.op_at(path, j + n - 1, n_bins);
      for (int b = 0; b < e; ++b) {
        op.push(w[static_cast<std::size_t>(b)], tmp);
        w[static_cast<std::size_t>(b)].swap(tmp);
      }
      const auto& tn = tables[static_cast<std::size_t>(j + n)];
      for (int b = 0; b < e; ++b)
        for (int g = 0; g < e; ++g) {
          KahanSum s;
          for (int bin = 0; bin < n_bins; ++bin)
            s.add(
                w[static_cast<std::size_t>(b)][static_cast<std::size_t>(bin)] *
                tn[static_cast<std::size_t>(bin) * e +
                   static_cast<std::size_t>(g)]);
          rows[static_cast<std::size_t>(n - 1)]
              [static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)] =
                  s.value();
        }
    }
  }
}

int clamp_positions(const BasePath& path, const SeriesOptions& opts) {
  const long avail = path.n_future - opts.n_lags;
  if (avail < 1)
    throw std::invalid_argument("path too short for requested n_lags");
  return static_cast<int>(std::min<long>(opts.n_positions, avail));
}

double series_tail(const std::vector<std::vector<double>>& mean_lags,
                   int n_lags, int b, int g, int e, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) return 0.0;
  const double last = std::fabs(
      mean_lags[static_cast<std::size_t>(n_lags - 1)]
               [static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)]);
  return last * rho / (1.0 - rho);
}

}  // namespace

double PathStats::pairing_deviation() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < W.size(); ++k)
    for (int b = 0; b < e; ++b)
      for (int g = 0; g < e; ++g) {
        const double lhs = W[k][static_cast<std::size_t>(b)] *
                           W[k][static_cast<std::size_t>(g)];
        const double rhs =
            WW[k][static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)] +
            WW[k][static_cast<std::size_t>(g) * e + static_cast<std::size_t>(b)] +
            Q[k][static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)];
        worst = std::max(worst, std::fabs(lhs - rhs));
      }
  return worst;
}

double EstimateMatrix::min_eigenvalue() const {
  std::vector<double> sym(static_cast<std::size_t>(e) * e);
  for (int b = 0; b < e; ++b)
    for (int g = 0; g < e; ++g)
      sym[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)] =
          0.5 * (at(b, g) + at(g, b));
  return min_eigenvalue_sym(sym, e);
}

std::vector<double> sample_trajectory(const Ensemble& ens,
                                      const BasePath& path,
                                      const Density& density0, long n,
                                      std::uint64_t seed) {
  if (n > path.n_future)
    throw std::out_of_range("trajectory length exceeds path window");
  Rng rng = make_rng(seed);
  const DensitySampler sampler(density0);
  std::vector<double> traj(static_cast<std::size_t>(n) + 1);
  double x = sampler.sample(rng);
  traj[0] = x;
  for (long j = 0; j < n; ++j) {
    x = step_orbit(ens.map_at(path, j), x, rng);
    traj[static_cast<std::size_t>(j) + 1] = x;
  }
  return traj;
}

std::vector<double> birkhoff_sum(const std::vector<double>& traj,
                                 const Ensemble& ens, const BasePath& path,
                                 const CenteredObservable& u, long n) {
  if (static_cast<long>(traj.size()) < n)
    throw std::invalid_argument("trajectory shorter than n");
  const int e = u.dim();
  std::vector<KahanSum> sums(static_cast<std::size_t>(e));
  std::vector<double> buf(static_cast<std::size_t>(e));
  for (long j = 0; j < n; ++j) {
    u.eval(j, ens.map_at(path, j), traj[static_cast<std::size_t>(j)],
           buf.data());
    for (int c = 0; c < e; ++c) sums[static_cast<std::size_t>(c)].add(buf[c]);
  }
  std::vector<double> out(static_cast<std::size_t>(e));
  for (int c = 0; c < e; ++c) out[static_cast<std::size_t>(c)] =
      sums[static_cast<std::size_t>(c)].value();
  return out;
}

PathStats iterated_path(const std::vector<double>& traj, const Ensemble& ens,
                        const BasePath& path, const CenteredObservable& v,
                        long n) {
  if (!v.centered) throw std::invalid_argument("center first");
  const int e = v.dim();
  PathStats ps;
  ps.n = n;
  ps.e = e;
  ps.x0 = traj.empty() ? 0.0 : traj[0];
  const double sqn = std::sqrt(static_cast<double>(n));
  const double dn = static_cast<double>(n);
  ps.W.assign(static_cast<std::size_t>(n) + 1,
              std::vector<double>(static_cast<std::size_t>(e), 0.0));
  ps.WW.assign(static_cast<std::size_t>(n) + 1,
               std::vector<double>(static_cast<std::size_t>(e) * e, 0.0));
  ps.Q = ps.WW;
  std::vector<KahanSum> A(static_cast<std::size_t>(e));
  std::vector<KahanSum> ww(static_cast<std::size_t>(e) * e);
  std::vector<KahanSum> q(static_cast<std::size_t>(e) * e);
  std::vector<double> buf(static_cast<std::size_t>(e));
  for (long j = 0; j < n; ++j) {
    v.eval(j, ens.map_at(path, j), traj[static_cast<std::size_t>(j)],
           buf.data());
    for (int b = 0; b < e; ++b)
      for (int g = 0; g < e; ++g) {
        ww[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)].add(
            A[static_cast<std::size_t>(b)].value() * buf[g]);
        q[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)].add(
            buf[b] * buf[g]);
      }
    for (int b = 0; b < e; ++b) A[static_cast<std::size_t>(b)].add(buf[b]);
    auto& wrow = ps.W[static_cast<std::size_t>(j) + 1];
    auto& wwrow = ps.WW[static_cast<std::size_t>(j) + 1];
    auto& qrow = ps.Q[static_cast<std::size_t>(j) + 1];
    for (int b = 0; b < e; ++b)
      wrow[static_cast<std::size_t>(b)] =
          A[static_cast<std::size_t>(b)].value() / sqn;
    for (std::size_t idx = 0; idx < wwrow.size(); ++idx) {
      wwrow[idx] = ww[idx].value() / dn;
      qrow[idx] = q[idx].value() / dn;
    }
  }
  return ps;
}

EstimateMatrix estimate_sigma_correlation(const Ensemble& ens,
                                          const BasePath& path,
                                          const PathDensities& dens,
                                          const CenteredObservable& v,
                                          const SeriesOptions& opts) {
  const int e = v.dim();
  const int P = clamp_positions(path, opts);
  std::vector<std::vector<std::vector<double>>> lagcov;
  std::vector<std::vector<double>> lag0;
  lagged_covariances(ens, path, dens, v, P, opts.n_lags, lagcov, lag0);
  std::vector<std::vector<double>> per_pos(
      static_cast<std::size_t>(P),
      std::vector<double>(static_cast<std::size_t>(e) * e, 0.0));
  std::vector<std::vector<double>> mean_lags(
      static_cast<std::size_t>(opts.n_lags),
      std::vector<double>(static_cast<std::size_t>(e) * e, 0.0));
  for (int j = 0; j < P; ++j) {
    for (int b = 0; b < e; ++b)
      for (int g = 0; g < e; ++g) {
        const std::size_t bg =
            static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g);
        const std::size_t gb =
            static_cast<std::size_t>(g) * e + static_cast<std::size_t>(b);
        double s = lag0[static_cast<std::size_t>(j)][bg];
        for (int n = 1; n <= opts.n_lags; ++n) {
          const auto& row =
              lagcov[static_cast<std::size_t>(j)][static_cast<std::size_t>(n - 1)];
          s += row[bg] + row[gb];
          mean_lags[static_cast<std::size_t>(n - 1)][bg] +=
              row[bg] / static_cast<double>(P);
        }
        per_pos[static_cast<std::size_t>(j)][bg] = s;
      }
  }
  const double disc = 1.0 / static_cast<double>(dens.n_bins);
  EstimateMatrix out = reduce_positions(per_pos, e, disc);
  for (int b = 0; b < e; ++b)
    for (int g = 0; g < e; ++g)
      out.se[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)] +=
          series_tail(mean_lags, opts.n_lags, b, g, e, opts.rho_hat) +
          series_tail(mean_lags, opts.n_lags, g, b, e, opts.rho_hat);
  return out;
}

EstimateMatrix estimate_sigma_martingale(const Ensemble& ens,
                                         const BasePath& path,
                                         const PathDensities& dens,
                                         const MField& m, int n_positions) {
  (void)ens;
  const int e = m.dim;
  const int n_bins = m.n_bins;
  const int P =
      static_cast<int>(std::min<long>(n_positions, m.j_max + 1));
  if (P < 1) throw std::invalid_argument("m field has no usable indices");
  std::vector<std::vector<double>> per_pos(
      static_cast<std::size_t>(P),
      std::vector<double>(static_cast<std::size_t>(e) * e, 0.0));
  for (int j = 0; j < P; ++j) {
    const Density& hj = dens.at(j);
    for (int b = 0; b < e; ++b)
      for (int g = 0; g < e; ++g) {
        KahanSum s;
        for (int bin = 0; bin < n_bins; ++bin)
          s.add(m.at(j, bin, b) * m.at(j, bin, g) *
                hj[static_cast<std::size_t>(bin)]);
        per_pos[static_cast<std::size_t>(j)]
               [static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)] =
                   s.value();
      }
  }
  return reduce_positions(per_pos, e, 1.0 / static_cast<double>(n_bins));
}

EstimateMatrix estimate_E(const Ensemble& ens, const BasePath& path,
                          const PathDensities& dens,
                          const CenteredObservable& v,
                          const SeriesOptions& opts) {
  const int e = v.dim();
  const int P = clamp_positions(path, opts);
  std::vector<std::vector<std::vector<double>>> lagcov;
  std::vector<std::vector<double>> lag0;
  lagged_covariances(ens, path, dens, v, P, opts.n_lags, lagcov, lag0);
  std::vector<std::vector<double>> per_pos(
      static_cast<std::size_t>(P),
      std::vector<double>(static_cast<std::size_t>(e) * e, 0.0));
  std::vector<std::vector<double>> mean_lags(
      static_cast<std::size_t>(opts.n_lags),
      std::vector<double>(static_cast<std::size_t>(e) * e, 0.0));
  for (int j = 0; j < P; ++j)
    for (std::size_t bg = 0; bg < static_cast<std::size_t>(e) * e; ++bg) {
      double s = 0.0;
      for (int n = 1; n <= opts.n_lags; ++n) {
        const double c =
            lagcov[static_cast<std::size_t>(j)][static_cast<std::size_t>(n - 1)]
                  [bg];
        s += c;
        mean_lags[static_cast<std::size_t>(n - 1)][bg] +=
            c / static_cast<double>(P);
      }
      per_pos[static_cast<std::size_t>(j)][bg] = s;
    }
  const double disc = 1.0 / static_cast<double>(dens.n_bins);
  EstimateMatrix out = reduce_positions(per_pos, e, disc);
  for (int b = 0; b < e; ++b)
    for (int g = 0; g < e; ++g)
      out.se[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)] +=
          series_tail(mean_lags, opts.n_lags, b, g, e, opts.rho_hat);
  return out;
}

DriftCorrection drift_correction_limit(const Ensemble& ens,
                                       const BasePath& path,
                                       const PathDensities& dens,
                                       const CenteredObservable& v,
                                       const MField& m,
                                       const SeriesOptions& opts) {
  DriftCorrection out;
  out.correction = estimate_E(ens, path, dens, v, opts);

  // lagged series on m evaluated the same way, from its bin representation
  const int e = m.dim;
  const int n_bins = m.n_bins;
  const int n_lags = opts.n_lags;
  const int P = static_cast<int>(
      std::min<long>(opts.n_positions, m.j_max + 1 - n_lags));
  if (P < 1)
    throw std::invalid_argument("m field too short for requested n_lags");
  std::vector<std::vector<double>> per_pos(
      static_cast<std::size_t>(P),
      std::vector<double>(static_cast<std::size_t>(e) * e, 0.0));
  std::vector<std::vector<double>> w(static_cast<std::size_t>(e));
  std::vector<double> tmp;
  for (int j = 0; j < P; ++j) {
    const Density& hj = dens.at(j);
    for (int b = 0; b < e; ++b) {
      auto& wb = w[static_cast<std::size_t>(b)];
      wb.resize(static_cast<std::size_t>(n_bins));
      for (int bin = 0; bin < n_bins; ++bin)
        wb[static_cast<std::size_t>(bin)] =
            m.at(j, bin, b) * hj[static_cast<std::size_t>(bin)];
    }
    auto& row = per_pos[static_cast<std::size_t>(j)];
    for (int n = 1; n <= n_lags; ++n) {
      const auto& op = ens.op_at(path, j + n - 1, n_bins);
      for (int b = 0; b < e; ++b) {
        op.push(w[static_cast<std::size_t>(b)], tmp);
        w[static_cast<std::size_t>(b)].swap(tmp);
      }
      for (int b = 0; b < e; ++b)
        for (int g = 0; g < e; ++g) {
          KahanSum s;
          for (int bin = 0; bin < n_bins; ++bin)
            s.add(
                w[static_cast<std::size_t>(b)][static_cast<std::size_t>(bin)] *
                m.at(j + n, bin, g));
          row[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)] +=
              s.value();
        }
    }
  }
  out.lagged_m = reduce_positions(per_pos, e, 1.0 / static_cast<double>(n_bins));
  out.lagged_m_ok = true;
  for (int b = 0; b < e; ++b)
    for (int g = 0; g < e; ++g)
      if (std::fabs(out.lagged_m.at(b, g)) >= 3.0 * out.lagged_m.se_at(b, g))
        out.lagged_m_ok = false;
  return out;
}

CltResult clt_test(const Ensemble& ens, const BasePath& path,
                   const Density& density0, const CenteredObservable& v,
                   long n, long n_paths, const EstimateMatrix& sigma,
                   std::uint64_t seed, int n_threads, double model_allowance) {
  const int e = v.dim();
  std::vector<std::vector<double>> scaled(
      static_cast<std::size_t>(n_paths),
      std::vector<double>(static_cast<std::size_t>(e), 0.0));
  const double sqn = std::sqrt(static_cast<double>(n));
  parallel_for(static_cast<std::size_t>(n_paths), n_threads,
               [&](std::size_t i) {
                 const auto traj = sample_trajectory(
                     ens, path, density0, n, seed_for(seed, "clt-traj", i));
                 const auto s = birkhoff_sum(traj, ens, path, v, n);
                 for (int c = 0; c < e; ++c)
                   scaled[i][static_cast<std::size_t>(c)] =
                       s[static_cast<std::size_t>(c)] / sqn;
               });
  const double threshold =
      1.63 / std::sqrt(static_cast<double>(n_paths)) + model_allowance;
  CltResult out;
  auto run_entry = [&](const std::string& label, double var, double var_se,
                       const std::vector<double>& samples) {
    CltEntry entry;
    entry.label = label;
    entry.threshold = threshold;
    if (var <= 0.0 || var <= 2.0 * var_se) {
      entry.skipped = true;
      entry.note = var <= 0.0
                       ? "nonpositive variance projection; skipped"
                       : "variance within 2 SE of zero (degenerate); skipped";
      out.entries.push_back(entry);
      return;
    }
    entry.ks = ks_distance_normal(samples, 0.0, std::sqrt(var));
    entry.pass = entry.ks < threshold;
    if (!entry.pass) out.pass = false;
    out.entries.push_back(entry);
  };
  std::vector<double> comp(static_cast<std::size_t>(n_paths));
  for (int c = 0; c < e; ++c) {
    for (long i = 0; i < n_paths; ++i)
      comp[static_cast<std::size_t>(i)] =
          scaled[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    run_entry("component_" + std::to_string(c), sigma.at(c, c),
              sigma.se_at(c, c), comp);
  }
  // fixed unit-vector projection u = (1,...,1)/sqrt(e)
  const double ue = 1.0 / std::sqrt(static_cast<double>(e));
  double var_u = 0.0, var_u_se = 0.0;
  for (int b = 0; b < e; ++b)
    for (int g = 0; g < e; ++g) {
      var_u += ue * ue * sigma.at(b, g);
      var_u_se += ue * ue * sigma.se_at(b, g);
    }
  for (long i = 0; i < n_paths; ++i) {
    double s = 0.0;
    for (int c = 0; c < e; ++c)
      s += ue * scaled[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    comp[static_cast<std::size_t>(i)] = s;
  }
  run_entry("projection_uniform", var_u, var_u_se, comp);
  return out;
}

LilReport lil_envelope(const Ensemble& ens, const BasePath& path,
                       const Density& density0, const CenteredObservable& v,
                       double sigma_scalar, long n_max, long n_paths,
                       std::uint64_t seed, int n_threads) {
  if (n_max < 100) throw std::invalid_argument("n_max must be >= 100");
  if (!(sigma_scalar > 0.0))
    throw std::invalid_argument("sigma must be positive");
  LilReport out;
  out.ratios.assign(static_cast<std::size_t>(n_paths), 0.0);
  parallel_for(
      static_cast<std::size_t>(n_paths), n_threads, [&](std::size_t i) {
        Rng rng = make_rng(seed_for(seed, "lil", i));
        const DensitySampler sampler(density0);
        double x = sampler.sample(rng);
        KahanSum s;
        double best = 0.0;
        std::vector<double> buf(static_cast<std::size_t>(v.dim()));
        for (long j = 0; j < n_max; ++j) {
          v.eval(j, ens.map_at(path, j), x, buf.data());
          s.add(buf[0]);
          x = step_orbit(ens.map_at(path, j), x, rng);
          const long nn = j + 1;
          if (nn >= 100) {
            const double env = std::sqrt(2.0 * sigma_scalar *
                                         static_cast<double>(nn) *
                                         std::log(std::log(static_cast<double>(nn))));
            best = std::max(best, std::fabs(s.value()) / env);
          }
        }
        out.ratios[i] = best;
      });
  long above = 0, in_band = 0;
  for (double r : out.ratios) {
    if (r > 1.5) ++above;
    if (r >= 0.4 && r <= 1.5) ++in_band;
  }
  out.frac_above_1_5 =
      static_cast<double>(above) / static_cast<double>(n_paths);
  out.frac_in_band =
      static_cast<double>(in_band) / static_cast<double>(n_paths);
  return out;
}

WipMeanResult wip_mean_check(const Ensemble& ens, const BasePath& path,
                             const Density& density0,
                             const CenteredObservable& v, long n, long n_paths,
                             const EstimateMatrix& E, std::uint64_t seed,
                             int n_threads) {
  const int e = v.dim();
  const std::size_t ee = static_cast<std::size_t>(e) * e;
  std::vector<std::vector<double>> ww1(static_cast<std::size_t>(n_paths),
                                       std::vector<double>(ee, 0.0));
  const double dn = static_cast<double>(n);
  parallel_for(
      static_cast<std::size_t>(n_paths), n_threads, [&](std::size_t i) {
        Rng rng = make_rng(seed_for(seed, "wip", i));
        const DensitySampler sampler(density0);
        double x = sampler.sample(rng);
        std::vector<KahanSum> A(static_cast<std::size_t>(e));
        std::vector<KahanSum> ww(ee);
        std::vector<double> buf(static_cast<std::size_t>(e));
        for (long j = 0; j < n; ++j) {
          v.eval(j, ens.map_at(path, j), x, buf.data());
          for (int b = 0; b < e; ++b)
            for (int g = 0; g < e; ++g)
              ww[static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g)]
                  .add(A[static_cast<std::size_t>(b)].value() * buf[g]);
          for (int b = 0; b < e; ++b)
            A[static_cast<std::size_t>(b)].add(buf[b]);
          x = step_orbit(ens.map_at(path, j), x, rng);
        }
        for (std::size_t idx = 0; idx < ee; ++idx)
          ww1[i][idx] = ww[idx].value() / dn;
      });
  WipMeanResult out;
  out.mean_WW = reduce_positions(ww1, e, 0.0);
  out.z.assign(ee, 0.0);
  for (int b = 0; b < e; ++b)
    for (int g = 0; g < e; ++g) {
      const std::size_t bg =
          static_cast<std::size_t>(b) * e + static_cast<std::size_t>(g);
      const double se = std::hypot(out.mean_WW.se[bg], E.se_at(b, g));
      out.z[bg] = se > 0.0 ? (out.mean_WW.value[bg] - E.at(b, g)) / se : 0.0;
      if (std::fabs(out.z[bg]) >= 3.0) out.pass = false;
    }
  return out;
}

MomentScaling moment_diagnostics(const Ensemble& ens, const BasePath& path,
                                 const Density& density0,
                                 const CenteredObservable& v,
                                 const std::vector<long>& n_grid, int p,
                                 long n_paths, std::uint64_t seed,
                                 int n_threads) {
  if (p != 4 && p != 6 && p != 8)
    throw std::invalid_argument("p must be one of {4, 6, 8}");
  const int e = v.dim();
  const std::size_t ee = static_cast<std::size_t>(e) * e;
  MomentScaling out;
  out.n_grid = n_grid;
  for (long n : n_grid) {
    std::vector<double> max_s(static_cast<std::size_t>(n_paths), 0.0);
    std::vector<double> max_ww(static_cast<std::size_t>(n_paths), 0.0);
    parallel_for(
        static_cast<std::size_t>(n_paths), n_threads, [&](std::size_t i) {
          Rng rng = make_rng(
              seed_for(seed, "moments-" + std::to_string(n), i));
          const DensitySampler sampler(density0);
          double x = sampler.sample(rng);
          std::vector<KahanSum> A(static_cast<std::size_t>(e));
          std::vector<KahanSum> ww(ee);  // unnormalized double sums
          std::vector<double> buf(static_cast<std::size_t>(e));
          double ms = 0.0, mww = 0.0;
          for (long j = 0; j < n; ++j) {
            v.eval(j, ens.map_at(path, j), x, buf.data());
            for (int b = 0; b < e; ++b)
              for (int g = 0; g < e; ++g)
                ww[static_cast<std::size_t>(b) * e +
                   static_cast<std::size_t>(g)]
                    .add(A[static_cast<std::size_t>(b)].value() * buf[g]);
            for (int b = 0; b < e; ++b)
              A[static_cast<std::size_t>(b)].add(buf[b]);
            x = step_orbit(ens.map_at(path, j), x, rng);
            double s2 = 0.0;
            for (int b = 0; b < e; ++b)
              s2 += A[static_cast<std::size_t>(b)].value() *
                    A[static_cast<std::size_t>(b)].value();
            ms = std::max(ms, std::sqrt(s2));
            double w2 = 0.0;
            for (std::size_t idx = 0; idx < ee; ++idx)
              w2 += ww[idx].value() * ww[idx].value();
            mww = std::max(mww, std::sqrt(w2));
          }
          max_s[i] = ms;
          max_ww[i] = mww;
        });
    KahanSum sp, wp;
    for (long i = 0; i < n_paths; ++i) {
      sp.add(std::pow(max_s[static_cast<std::size_t>(i)], p));
      wp.add(std::pow(max_ww[static_cast<std::size_t>(i)], p / 2.0));
    }
    const double np = static_cast<double>(n_paths);
    out.birkhoff_norm.push_back(
        std::pow(sp.value() / np, 1.0 / static_cast<double>(p)));
    out.iterated_norm.push_back(
        std::pow(wp.value() / np, 2.0 / static_cast<double>(p)));
  }
  std::vector<double> lx, ly1, ly2;
  for (std::size_t k = 0; k < n_grid.size(); ++k) {
    lx.push_back(std::log(static_cast<double>(n_grid[k])));
    ly1.push_back(std::log(out.birkhoff_norm[k]));
    ly2.push_back(std::log(out.iterated_norm[k]));
  }
  out.birkhoff_slope = fit_line(lx, ly1).slope;
  out.iterated_slope = fit_line(lx, ly2).slope;
  return out;
}

}  // namespace rds
