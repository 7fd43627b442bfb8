#include "rdslab/fast_slow.hpp"

#include <cmath>
#include <stdexcept>

#include "rdslab/parallel.hpp"
#include "rdslab/rng.hpp"
#include "rdslab/stats.hpp"

namespace rds {

Fn1 Fn1::zero() { return poly({}); }

Fn1 Fn1::constant(double c) { return poly({c}); }

Fn1 Fn1::poly(std::vector<double> coeffs) {
  Fn1 f;
  f.kind = Kind::poly;
  if (coeffs.size() > 4)
    throw std::invalid_argument("polynomial degree capped at 3");
  f.coeffs = std::move(coeffs);
  return f;
}

Fn1 Fn1::sinusoid(double offset, double amp, double freq, double phase) {
  Fn1 f;
  f.kind = Kind::sinusoid;
  f.offset = offset;
  f.amp = amp;
  f.freq = freq;
  f.phase = phase;
  return f;
}

double Fn1::operator()(double x) const {
  if (kind == Kind::poly) {
    double y = 0.0;
    for (std::size_t k = coeffs.size(); k-- > 0;) y = y * x + coeffs[k];
    return y;
  }
  return offset + amp * std::sin(freq * x + phase);
}

double Fn1::deriv(double x) const {
  if (kind == Kind::poly) {
    double y = 0.0;
    for (std::size_t k = coeffs.size(); k-- > 1;)
      y = y * x + coeffs[k] * static_cast<double>(k);
    return y;
  }
  return amp * freq * std::cos(freq * x + phase);
}

VectorFn VectorFn::zero(int d) {
  VectorFn f;
  f.d = d;
  f.entries.assign(static_cast<std::size_t>(d), Fn1::zero());
  f.dep.assign(static_cast<std::size_t>(d), 0);
  return f;
}

void VectorFn::eval(const double* x, double* out) const {
  for (int i = 0; i < d; ++i)
    out[i] = entries[static_cast<std::size_t>(i)](
        x[dep[static_cast<std::size_t>(i)]]);
}

MatrixFn MatrixFn::zero(int rows, int cols) {
  MatrixFn f;
  f.rows = rows;
  f.cols = cols;
  f.entries.assign(static_cast<std::size_t>(rows) * cols, Fn1::zero());
  f.dep.assign(static_cast<std::size_t>(rows) * cols, 0);
  return f;
}

void MatrixFn::eval(const double* x, double* out) const {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[r * cols + c] = entry(r, c, x);
}

double MatrixFn::entry(int r, int c, const double* x) const {
  const std::size_t idx =
      static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c);
  return entries[idx](x[dep[idx]]);
}

double MatrixFn::dentry(int r, int c, int alpha, const double* x) const {
  const std::size_t idx =
      static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c);
  if (dep[idx] != alpha) return 0.0;
  return entries[idx].deriv(x[dep[idx]]);
}

void FastSlowSpec::validate(std::uint64_t probe_seed) const {
  if (d < 1 || e < 1) throw std::invalid_argument("dimensions must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("epsilon must be in (0,1)");
  if (static_cast<int>(xi.size()) != d)
    throw std::invalid_argument("xi size must equal d");
  if (a.d != d || static_cast<int>(a.entries.size()) != d)
    throw std::invalid_argument("drift shape mismatch");
  if (b.rows != d || b.cols != e)
    throw std::invalid_argument("diffusion shape mismatch");
  // finite-difference probe of the analytic derivatives
  Rng rng = make_rng(probe_seed);
  std::vector<double> x(static_cast<std::size_t>(d));
  const double h = 1e-6;
  for (int probe = 0; probe < 16; ++probe) {
    for (double& xi_c : x) xi_c = 4.0 * uniform01(rng) - 2.0;
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < e; ++c)
        for (int alpha = 0; alpha < d; ++alpha) {
          std::vector<double> xp = x, xm = x;
          xp[static_cast<std::size_t>(alpha)] += h;
          xm[static_cast<std::size_t>(alpha)] -= h;
          const double fd =
              (b.entry(r, c, xp.data()) - b.entry(r, c, xm.data())) / (2 * h);
          const double an = b.dentry(r, c, alpha, x.data());
          const double scale = std::max(1.0, std::fabs(an));
          if (std::fabs(fd - an) > 1e-5 * scale)
            throw std::invalid_argument(
                "diffusion derivative inconsistent with finite differences");
        }
  }
}

long FastSlowSpec::n_steps() const {
  return static_cast<long>(std::floor(1.0 / (epsilon * epsilon)));
}

std::vector<std::vector<double>> integrate_fast_slow(
    const FastSlowSpec& spec, const Ensemble& ens, const BasePath& path,
    const Density& density0, const CenteredObservable& v,
    std::uint64_t traj_seed) {
  spec.validate();
  if (v.dim() != spec.e)
    throw std::invalid_argument("observable dimension must equal e");
  const long n = spec.n_steps();
  if (n > path.n_future)
    throw std::out_of_range("path too short for 1/epsilon^2 steps");
  Rng rng = make_rng(traj_seed);
  const DensitySampler sampler(density0);
  double y = sampler.sample(rng);

  const double eps = spec.epsilon;
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  std::vector<double> x = spec.xi;
  out.push_back(x);
  std::vector<double> ax(static_cast<std::size_t>(spec.d));
  std::vector<double> bx(static_cast<std::size_t>(spec.d) * spec.e);
  std::vector<double> vy(static_cast<std::size_t>(spec.e));
  for (long j = 0; j < n; ++j) {
    spec.a.eval(x.data(), ax.data());
    spec.b.eval(x.data(), bx.data());
    v.eval(j, ens.map_at(path, j), y, vy.data());
    for (int i = 0; i < spec.d; ++i) {
      double drive = 0.0;
      for (int c = 0; c < spec.e; ++c)
        drive += bx[static_cast<std::size_t>(i) * spec.e +
                    static_cast<std::size_t>(c)] *
                 vy[static_cast<std::size_t>(c)];
      x[static_cast<std::size_t>(i)] +=
          eps * eps * ax[static_cast<std::size_t>(i)] + eps * drive;
      if (!std::isfinite(x[static_cast<std::size_t>(i)]))
        throw std::runtime_error("slow state overflow at step " +
                                 std::to_string(j));
    }
    y = step_orbit(ens.map_at(path, j), y, rng);
    out.push_back(x);
  }
  return out;
}

void HomogenizedSDE::a_tilde(const double* x, double* out) const {
  a.eval(x, out);
  for (int i = 0; i < d; ++i) {
    double corr = 0.0;
    for (int alpha = 0; alpha < d; ++alpha)
      for (int beta = 0; beta < e; ++beta)
        for (int gamma = 0; gamma < e; ++gamma)
          corr += E[static_cast<std::size_t>(beta) * e +
                    static_cast<std::size_t>(gamma)] *
                  b.dentry(i, beta, alpha, x) * b.entry(alpha, gamma, x);
    out[i] += corr;
  }
}

std::vector<std::vector<double>> euler_maruyama(const HomogenizedSDE& sde,
                                                const std::vector<double>& xi,
                                                double dt, double horizon,
                                                long n_paths,
                                                std::uint64_t seed,
                                                int n_threads) {
  if (!(dt > 0.0 && dt <= 1e-2))
    throw std::invalid_argument("dt must be in (0, 1e-2]");
  if (static_cast<int>(xi.size()) != sde.d)
    throw std::invalid_argument("xi size must equal d");
  const std::vector<double> root = sym_sqrt(sde.Sigma, sde.e);  // throws if not PSD
  const long steps = static_cast<long>(std::llround(horizon / dt));
  const double sqdt = std::sqrt(dt);
  std::vector<std::vector<double>> out(
      static_cast<std::size_t>(n_paths),
      std::vector<double>(static_cast<std::size_t>(sde.d), 0.0));
  parallel_for(
      static_cast<std::size_t>(n_paths), n_threads, [&](std::size_t p) {
        Rng rng = make_rng(seed_for(seed, "em", p));
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<double> z = xi;
        std::vector<double> drift(static_cast<std::size_t>(sde.d));
        std::vector<double> xi_std(static_cast<std::size_t>(sde.e));
        std::vector<double> dw(static_cast<std::size_t>(sde.e));
        for (long s = 0; s < steps; ++s) {
          sde.a_tilde(z.data(), drift.data());
          for (int c = 0; c < sde.e; ++c)
            xi_std[static_cast<std::size_t>(c)] = gauss(rng);
          for (int c = 0; c < sde.e; ++c) {
            double w = 0.0;
            for (int k = 0; k < sde.e; ++k)
              w += root[static_cast<std::size_t>(c) * sde.e +
                        static_cast<std::size_t>(k)] *
                   xi_std[static_cast<std::size_t>(k)];
            dw[static_cast<std::size_t>(c)] = w * sqdt;
          }
          for (int i = 0; i < sde.d; ++i) {
            double diff = 0.0;
            for (int c = 0; c < sde.e; ++c)
              diff += sde.b.entry(i, c, z.data()) *
                      dw[static_cast<std::size_t>(c)];
            z[static_cast<std::size_t>(i)] +=
                drift[static_cast<std::size_t>(i)] * dt + diff;
          }
        }
        out[p] = z;
      });
  return out;
}

ComparisonReport homogenization_compare(const FastSlowSpec& spec,
                                        const Ensemble& ens,
                                        const BasePath& path,
                                        const Density& density0,
                                        const CenteredObservable& v,
                                        const HomogenizedSDE& sde,
                                        const CompareOptions& opts) {
  if (opts.decay_rates.empty())
    throw std::invalid_argument(
        "uniform-decay regime unverified: supply fitted decay rates");
  double rmin = 1.0, rmax = 0.0;
  for (double r : opts.decay_rates) {
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  if (rmax >= 0.95 || rmax - rmin > 0.3)
    throw std::runtime_error(
        "decay-regime precondition unmet: rates must be geometric and "
        "uniform across symbols; tightness of the slow paths may fail");

  const double dt =
      opts.dt > 0.0 ? opts.dt : spec.epsilon * spec.epsilon / 4.0;
  ComparisonReport rep;
  rep.mode = opts.frozen_path ? "frozen-path" : "averaged";

  std::vector<std::vector<double>> fs(
      static_cast<std::size_t>(opts.n_paths),
      std::vector<double>(static_cast<std::size_t>(spec.d), 0.0));
  if (opts.frozen_path) {
    parallel_for(static_cast<std::size_t>(opts.n_paths), opts.n_threads,
                 [&](std::size_t p) {
                   const auto slow = integrate_fast_slow(
                       spec, ens, path, density0, v,
                       seed_for(opts.seed, "fs", p));
                   fs[p] = slow.back();
                 });
  } else {
    // averaged mode: fresh noise path per trajectory. Requires a common
    // invariant density so the centering depends on the symbol only.
    const int n_bins = static_cast<int>(density0.size());
    for (int s = 0; s < ens.n_symbols(); ++s) {
      const Density pushed = ens.op(s, n_bins).push(density0);
      if (density_l1(pushed, density0) > 1e-10)
        throw std::runtime_error(
            "averaged mode requires a common invariant density");
    }
    const int e = v.dim();
    std::vector<std::vector<double>> symbol_means(
        static_cast<std::size_t>(ens.n_symbols()),
        std::vector<double>(static_cast<std::size_t>(e), 0.0));
    for (int s = 0; s < ens.n_symbols(); ++s)
      for (int c = 0; c < e; ++c) {
        KahanSum sum;
        for (int bin = 0; bin < n_bins; ++bin)
          sum.add(v.base.eval_component(c, ens.map(s),
                                        bin_midpoint(bin, n_bins)) *
                  density0[static_cast<std::size_t>(bin)]);
        symbol_means[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)] =
            sum.value();
      }
    parallel_for(
        static_cast<std::size_t>(opts.n_paths), opts.n_threads,
        [&](std::size_t p) {
          const BasePath wpath =
              sample_path(ens.base(), path.k_past, path.n_future,
                          seed_for(opts.seed, "fs-omega", p));
          CenteredObservable w;
          w.base = v.base;
          w.k_past = wpath.k_past;
          w.n_future = wpath.n_future;
          w.centered = true;
          w.means.reserve(static_cast<std::size_t>(wpath.length()));
          for (long j = -wpath.k_past; j <= wpath.n_future; ++j)
            w.means.push_back(
                symbol_means[static_cast<std::size_t>(wpath.symbol(j))]);
          const auto slow = integrate_fast_slow(spec, ens, wpath, density0, w,
                                                seed_for(opts.seed, "fs", p));
          fs[p] = slow.back();
        });
  }
  const auto sd = euler_maruyama(sde, spec.xi, dt, 1.0, opts.n_paths,
                                 seed_for(opts.seed, "sde"), opts.n_threads);

  for (int i = 0; i < spec.d; ++i) {
    std::vector<double> xs(static_cast<std::size_t>(opts.n_paths));
    std::vector<double> zs(static_cast<std::size_t>(opts.n_paths));
    for (long p = 0; p < opts.n_paths; ++p) {
      xs[static_cast<std::size_t>(p)] =
          fs[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
      zs[static_cast<std::size_t>(p)] =
          sd[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
    }
    const MeanVar mx = mean_var(xs);
    const MeanVar mz = mean_var(zs);
    ComparisonRow row;
    row.component = i;
    row.mean_fs = mx.mean;
    row.se_mean_fs = mx.se;
    row.mean_sde = mz.mean;
    row.se_mean_sde = mz.se;
    row.var_fs = mx.var;
    row.var_sde = mz.var;
    row.mean_ok = std::fabs(mx.mean - mz.mean) <=
                  3.0 * std::hypot(mx.se, mz.se) + 1e-12;
    // variance-of-variance SE under an approximately Gaussian marginal
    const double se_var = std::hypot(
        mx.var * std::sqrt(2.0 / std::max<double>(1, mx.n - 1)),
        mz.var * std::sqrt(2.0 / std::max<double>(1, mz.n - 1)));
    row.var_ok = std::fabs(mx.var - mz.var) <= 3.0 * se_var + 1e-12;
    row.ks = ks_distance_two_sample(xs, zs);
    row.ks_ok = row.ks < opts.ks_threshold;
    if (!(row.mean_ok && row.var_ok && row.ks_ok)) rep.pass = false;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace rds
