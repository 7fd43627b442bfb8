#include "rdslab/martingale.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rdslab/stats.hpp"

namespace rds {

namespace {
constexpr double kDensityFloor = 1e-14;
}

ChiField compute_chi(const Ensemble& ens, const BasePath& path,
                     const PathDensities& dens, const CenteredObservable& v,
                     int k, int n_bins, long j_max, const ChiOptions& opts) {
  if (!v.centered) throw std::invalid_argument("center first");
  if (k < 0) throw std::invalid_argument("truncation k must be >= 0");
  if (path.k_past < k)
    throw std::invalid_argument("insufficient past: need k_past >= " +
                                std::to_string(k));
  if (j_max > path.n_future)
    throw std::out_of_range("j_max exceeds path future window");
  const int e = v.dim();
  ChiField chi;
  chi.dim = e;
  chi.n_bins = n_bins;
  chi.j_max = j_max;
  chi.truncation_k = k;
  chi.values.resize(static_cast<std::size_t>(j_max) + 1);

  // acc <- L_i (acc + v_i dmu_i), swept from j-k to j-1; after the sweep,
  // acc = sum_{n=1..k} L^{(n)} (v dmu) sourced at j-n.
  std::vector<std::vector<double>> acc(
      static_cast<std::size_t>(e),
      std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
  std::vector<double> tmp;
  for (long j = 0; j <= j_max; ++j) {
    for (auto& a : acc) std::fill(a.begin(), a.end(), 0.0);
    for (long i = j - k; i < j; ++i) {
      const FiberMap& map = ens.map_at(path, i);
      const Density& hi = dens.at(i);
      for (int c = 0; c < e; ++c) {
        auto& a = acc[static_cast<std::size_t>(c)];
        for (int bin = 0; bin < n_bins; ++bin)
          a[static_cast<std::size_t>(bin)] +=
              v.eval_component(i, c, map, bin_midpoint(bin, n_bins)) *
              hi[static_cast<std::size_t>(bin)];
        ens.op_at(path, i, n_bins).push(a, tmp);
        a.swap(tmp);
      }
    }
    // signed measure -> function form, dividing by the target density
    const Density& hj = dens.at(j);
    auto& out = chi.values[static_cast<std::size_t>(j)];
    out.assign(static_cast<std::size_t>(n_bins) * e, 0.0);
    for (int bin = 0; bin < n_bins; ++bin) {
      if (hj[static_cast<std::size_t>(bin)] < kDensityFloor) {
        chi.masked_bins += e;
        continue;
      }
      for (int c = 0; c < e; ++c)
        out[static_cast<std::size_t>(bin) * e + static_cast<std::size_t>(c)] =
            acc[static_cast<std::size_t>(c)][static_cast<std::size_t>(bin)] /
            hj[static_cast<std::size_t>(bin)];
    }
  }

  double vmax = v.base.sup_norm(ens, n_bins);
  for (const auto& mean : v.means)
    for (double mc : mean) vmax = std::max(vmax, std::fabs(mc));
  if (opts.rho_hat > 0.0 && opts.rho_hat < 1.0)
    chi.est_error = opts.k_hat * std::pow(opts.rho_hat, k + 1) /
                    (1.0 - opts.rho_hat) * vmax;
  else
    chi.est_error = std::numeric_limits<double>::infinity();
  return chi;
}

double MField::at_point(long j, double x, int c) const {
  const int bin = bin_of(x, n_bins);
  const auto& fixes = pieces[static_cast<std::size_t>(j)];
  const auto it = fixes.find(bin);
  if (it != fixes.end()) {
    for (const MPiece& p : it->second)
      if (x >= p.lo && x < p.hi) return p.value[static_cast<std::size_t>(c)];
  }
  return at(j, bin, c);
}

MField compute_m(const Ensemble& ens, const BasePath& path,
                 const CenteredObservable& v, const ChiField& chi) {
  if (chi.j_max < 1)
    throw std::invalid_argument("chi at index j+1 required; extend j_max");
  const int e = chi.dim;
  const int n_bins = chi.n_bins;
  MField m;
  m.dim = e;
  m.n_bins = n_bins;
  m.j_max = chi.j_max - 1;
  m.values.resize(static_cast<std::size_t>(m.j_max) + 1);
  m.pieces.resize(static_cast<std::size_t>(m.j_max) + 1);
  const double w = 1.0 / n_bins;
  for (long j = 0; j <= m.j_max; ++j) {
    const FiberMap& map = ens.map_at(path, j);
    auto& out = m.values[static_cast<std::size_t>(j)];
    out.assign(static_cast<std::size_t>(n_bins) * e, 0.0);
    const auto value_at = [&](double x, int c) {
      const int bin = bin_of(x, n_bins);
      const int image_bin = bin_of(map.apply(x), n_bins);
      return v.eval_component(j, c, map, x) + chi.at(j, bin, c) -
             chi.at(j + 1, image_bin, c);
    };
    for (int bin = 0; bin < n_bins; ++bin) {
      const double x = bin_midpoint(bin, n_bins);
      for (int c = 0; c < e; ++c)
        out[static_cast<std::size_t>(bin) * e + static_cast<std::size_t>(c)] =
            value_at(x, c);
    }
    // bins cut by a branch boundary get one value per piece; chi o T (and a
    // coboundary v) jump across the boundary, so the midpoint value is only
    // valid on its own side
    for (const Branch& br : map.branches) {
      for (double edge : {br.lo, br.hi}) {
        if (edge <= 0.0 || edge >= 1.0) continue;
        const int bin = static_cast<int>(edge * n_bins);
        if (bin >= n_bins) continue;
        const double blo = bin * w;
        if (edge <= blo || edge >= blo + w) continue;  // edge on a bin border
        auto& fixes = m.pieces[static_cast<std::size_t>(j)][bin];
        if (!fixes.empty()) continue;  // both edges of one bin: filled below
        // collect all boundaries inside this bin
        std::vector<double> cuts = {blo, blo + w};
        for (const Branch& b2 : map.branches)
          for (double e2 : {b2.lo, b2.hi})
            if (e2 > blo && e2 < blo + w) cuts.push_back(e2);
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
          if (cuts[s + 1] - cuts[s] < 1e-15) continue;
          MPiece piece;
          piece.lo = cuts[s];
          piece.hi = cuts[s + 1];
          const double xm = 0.5 * (piece.lo + piece.hi);
          piece.value.resize(static_cast<std::size_t>(e));
          for (int c = 0; c < e; ++c)
            piece.value[static_cast<std::size_t>(c)] = value_at(xm, c);
          fixes.push_back(piece);
        }
      }
    }
  }
  return m;
}

std::vector<double> verify_vanishing(const Ensemble& ens, const BasePath& path,
                                     const PathDensities& dens,
                                     const MField& m) {
  const int e = m.dim;
  const int n_bins = m.n_bins;
  std::vector<double> residuals;
  residuals.reserve(static_cast<std::size_t>(m.j_max) + 1);
  std::vector<double> mass(static_cast<std::size_t>(n_bins));
  std::vector<double> pushed;
  const double w = 1.0 / n_bins;
  for (long j = 0; j <= m.j_max; ++j) {
    const Density& hj = dens.at(j);
    const Density& hj1 = dens.at(j + 1);
    const FiberMap& map = ens.map_at(path, j);
    const auto& fixes = m.pieces[static_cast<std::size_t>(j)];
    double worst = 0.0;
    for (int c = 0; c < e; ++c) {
      for (int bin = 0; bin < n_bins; ++bin)
        mass[static_cast<std::size_t>(bin)] =
            m.at(j, bin, c) * hj[static_cast<std::size_t>(bin)];
      // straddling bins are pushed piece by piece through the exact branch
      // image instead of through their Ulam row
      for (const auto& [bin, ps] : fixes) mass[static_cast<std::size_t>(bin)] = 0.0;
      ens.op_at(path, j, n_bins).push(mass, pushed);
      for (const auto& [bin, ps] : fixes) {
        const double hb = hj[static_cast<std::size_t>(bin)];
        for (const MPiece& p : ps) {
          const double piece_mass =
              p.value[static_cast<std::size_t>(c)] * hb * (p.hi - p.lo) / w;
          const int br = map.branch_of(0.5 * (p.lo + p.hi));
          const Branch& branch = map.branches[static_cast<std::size_t>(br)];
          const double ilo = branch.image(p.lo);
          const double ihi = branch.image(p.hi);
          const double ilen = ihi - ilo;
          const int t0 = bin_of(ilo, n_bins);
          const int t1 = bin_of(std::nextafter(ihi, ilo), n_bins);
          for (int t = t0; t <= t1; ++t) {
            const double olo = std::max(ilo, t * w);
            const double ohi = std::min(ihi, (t + 1) * w);
            if (ohi <= olo) continue;
            pushed[static_cast<std::size_t>(t)] +=
                piece_mass * (ohi - olo) / ilen;
          }
        }
      }
      for (int bin = 0; bin < n_bins; ++bin) {
        if (hj1[static_cast<std::size_t>(bin)] < kDensityFloor) continue;
        worst = std::max(worst,
                         std::fabs(pushed[static_cast<std::size_t>(bin)] /
                                   hj1[static_cast<std::size_t>(bin)]));
      }
    }
    residuals.push_back(worst);
  }
  return residuals;
}

std::vector<MartingaleCheckRow> reverse_martingale_check(
    const Ensemble& ens, const BasePath& path, const PathDensities& dens,
    const MField& m, long n, long n_paths, std::uint64_t seed) {
  if (n > m.j_max)
    throw std::invalid_argument("horizon exceeds available m indices");
  const int e = m.dim;
  const int n_bins = m.n_bins;
  const DensitySampler sampler(dens.at(0));
  // accumulate sums of m_a(x_a) * g(x_b) per (a, b, comp, g)
  struct Acc {
    KahanSum sum, sumsq;
  };
  const long n_pairs = n * (n - 1) / 2;
  std::vector<Acc> accs(static_cast<std::size_t>(n_pairs) * e * 3);
  const auto pair_index = [n](long a, long b) {
    // 1 <= a < b <= n
    return (a - 1) * n - (a - 1) * a / 2 + (b - a - 1);
  };
  Rng rng = make_rng(seed);
  std::vector<double> orbit(static_cast<std::size_t>(n) + 1);
  for (long p = 0; p < n_paths; ++p) {
    double x = sampler.sample(rng);
    orbit[0] = x;
    for (long j = 0; j < n; ++j) {
      x = step_orbit(ens.map_at(path, j), x, rng);
      orbit[static_cast<std::size_t>(j) + 1] = x;
    }
    for (long a = 1; a < n; ++a) {
      const double xa = orbit[static_cast<std::size_t>(a)];
      for (long b = a + 1; b <= n; ++b) {
        const double xb = orbit[static_cast<std::size_t>(b)];
        const double g[3] = {1.0, xb, xb * xb};
        const long base =
            pair_index(a, b) * e * 3;
        for (int c = 0; c < e; ++c) {
          const double ma = m.at_point(a, xa, c);
          for (int t = 0; t < 3; ++t) {
            const double term = ma * g[t];
            auto& acc = accs[static_cast<std::size_t>(base + c * 3 + t)];
            acc.sum.add(term);
            acc.sumsq.add(term * term);
          }
        }
      }
    }
  }
  std::vector<MartingaleCheckRow> rows;
  const double np = static_cast<double>(n_paths);
  for (long a = 1; a < n; ++a)
    for (long b = a + 1; b <= n; ++b)
      for (int c = 0; c < e; ++c)
        for (int t = 0; t < 3; ++t) {
          const auto& acc =
              accs[static_cast<std::size_t>(pair_index(a, b) * e * 3 + c * 3 +
                                            t)];
          MartingaleCheckRow row;
          row.lag_a = a;
          row.lag_b = b;
          row.comp = c;
          row.test_fn = t;
          row.estimate = acc.sum.value() / np;
          const double var = std::max(
              0.0, acc.sumsq.value() / np - row.estimate * row.estimate);
          row.se = std::sqrt(var / np);
          row.ok = std::fabs(row.estimate) < 3.0 * row.se + 1e-12;
          rows.push_back(row);
        }
  return rows;
}

}  // namespace rds
