#include "rdslab/transfer_engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rdslab/rng.hpp"
#include "rdslab/stats.hpp"

namespace rds {

namespace {
constexpr double kMassTol = 1e-10;
constexpr double kDensityFloor = 1e-14;
}  // namespace

UlamOperator UlamOperator::identity(int n_bins) {
  UlamOperator op;
  op.n_bins = n_bins;
  op.row_ptr.resize(static_cast<std::size_t>(n_bins) + 1);
  op.col.resize(static_cast<std::size_t>(n_bins));
  op.val.assign(static_cast<std::size_t>(n_bins), 1.0);
  for (int i = 0; i <= n_bins; ++i)
    op.row_ptr[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < n_bins; ++i) op.col[static_cast<std::size_t>(i)] = i;
  return op;
}

void UlamOperator::push(const std::vector<double>& in,
                        std::vector<double>& out) const {
  if (static_cast<int>(in.size()) != n_bins)
    throw std::invalid_argument("push: dimension mismatch");
  out.assign(static_cast<std::size_t>(n_bins), 0.0);
  for (int i = 0; i < n_bins; ++i) {
    const double m = in[static_cast<std::size_t>(i)];
    if (m == 0.0) continue;
    for (int k = row_ptr[static_cast<std::size_t>(i)];
         k < row_ptr[static_cast<std::size_t>(i) + 1]; ++k)
      out[static_cast<std::size_t>(col[static_cast<std::size_t>(k)])] +=
          m * val[static_cast<std::size_t>(k)];
  }
}

std::vector<double> UlamOperator::push(const std::vector<double>& in) const {
  std::vector<double> out;
  push(in, out);
  return out;
}

double UlamOperator::entry(int i, int j) const {
  for (int k = row_ptr[static_cast<std::size_t>(i)];
       k < row_ptr[static_cast<std::size_t>(i) + 1]; ++k)
    if (col[static_cast<std::size_t>(k)] == j)
      return val[static_cast<std::size_t>(k)];
  return 0.0;
}

void UlamOperator::check_row_stochastic(double tol) const {
  for (int i = 0; i < n_bins; ++i) {
    double sum = 0.0;
    for (int k = row_ptr[static_cast<std::size_t>(i)];
         k < row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
      if (val[static_cast<std::size_t>(k)] < 0.0)
        throw std::runtime_error("negative ulam entry");
      sum += val[static_cast<std::size_t>(k)];
    }
    if (std::fabs(sum - 1.0) > tol)
      throw std::runtime_error("ulam row does not sum to 1");
  }
}

UlamOperator ulam_matrix(const FiberMap& map, int n_bins) {
  if (n_bins < 2) throw std::invalid_argument("n_bins must be >= 2");
  map.validate();
  const double w = 1.0 / static_cast<double>(n_bins);
  // accumulate per-row maps first, then compress
  std::vector<std::vector<std::pair<int, double>>> rows(
      static_cast<std::size_t>(n_bins));
  for (const auto& br : map.branches) {
    const int i_lo = bin_of(br.lo, n_bins);
    const int i_hi = bin_of(std::nextafter(br.hi, br.lo), n_bins);
    for (int i = i_lo; i <= i_hi; ++i) {
      const double a = std::max(br.lo, static_cast<double>(i) * w);
      const double b = std::min(br.hi, static_cast<double>(i + 1) * w);
      if (b <= a) continue;
      // affine image of [a,b) under the branch
      double ya = br.image(a);
      double yb = br.image(b);
      if (ya > yb) std::swap(ya, yb);
      const int j_lo = bin_of(ya, n_bins);
      const int j_hi = bin_of(std::nextafter(yb, ya), n_bins);
      for (int j = j_lo; j <= j_hi; ++j) {
        const double ca = std::max(ya, static_cast<double>(j) * w);
        const double cb = std::min(yb, static_cast<double>(j + 1) * w);
        if (cb <= ca) continue;
        // mass fraction of bin i landing in bin j
        const double frac = (cb - ca) / std::fabs(br.slope) / w;
        rows[static_cast<std::size_t>(i)].emplace_back(j, frac);
      }
    }
  }
  UlamOperator op;
  op.n_bins = n_bins;
  op.row_ptr.assign(static_cast<std::size_t>(n_bins) + 1, 0);
  for (int i = 0; i < n_bins; ++i) {
    auto& r = rows[static_cast<std::size_t>(i)];
    std::sort(r.begin(), r.end());
    // merge duplicate columns
    std::size_t out = 0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (out > 0 && r[out - 1].first == r[k].first)
        r[out - 1].second += r[k].second;
      else
        r[out++] = r[k];
    }
    r.resize(out);
    op.row_ptr[static_cast<std::size_t>(i) + 1] =
        op.row_ptr[static_cast<std::size_t>(i)] + static_cast<int>(out);
    for (const auto& [j, v] : r) {
      op.col.push_back(j);
      op.val.push_back(v);
    }
  }
  op.check_row_stochastic(1e-12);
  return op;
}

UlamOperator compose(const UlamOperator& second, const UlamOperator& first) {
  if (second.n_bins != first.n_bins)
    throw std::invalid_argument("compose: dimension mismatch");
  const int n = first.n_bins;
  UlamOperator out;
  out.n_bins = n;
  out.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
  std::vector<int> touched;
  for (int i = 0; i < n; ++i) {
    touched.clear();
    for (int k = first.row_ptr[static_cast<std::size_t>(i)];
         k < first.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
      const int mid = first.col[static_cast<std::size_t>(k)];
      const double v = first.val[static_cast<std::size_t>(k)];
      for (int k2 = second.row_ptr[static_cast<std::size_t>(mid)];
           k2 < second.row_ptr[static_cast<std::size_t>(mid) + 1]; ++k2) {
        const int j = second.col[static_cast<std::size_t>(k2)];
        if (acc[static_cast<std::size_t>(j)] == 0.0) touched.push_back(j);
        acc[static_cast<std::size_t>(j)] +=
            v * second.val[static_cast<std::size_t>(k2)];
      }
    }
    std::sort(touched.begin(), touched.end());
    out.row_ptr[static_cast<std::size_t>(i) + 1] =
        out.row_ptr[static_cast<std::size_t>(i)] +
        static_cast<int>(touched.size());
    for (int j : touched) {
      out.col.push_back(j);
      out.val.push_back(acc[static_cast<std::size_t>(j)]);
      acc[static_cast<std::size_t>(j)] = 0.0;
    }
  }
  return out;
}

Density uniform_density(int n_bins) {
  return Density(static_cast<std::size_t>(n_bins),
                 1.0 / static_cast<double>(n_bins));
}

Density push_density(const UlamOperator& op, const Density& d) {
  Density out = op.push(d);
  check_density(out);
  return out;
}

double density_l1(const Density& a, const Density& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("density dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s;
}

void check_density(const Density& d, double tol) {
  KahanSum s;
  for (double x : d) {
    if (x < -tol) throw std::runtime_error("negative density mass");
    s.add(x);
  }
  if (std::fabs(s.value() - 1.0) > tol)
    throw std::runtime_error("density mass not conserved");
}

DensitySampler::DensitySampler(const Density& d)
    : n_bins_(static_cast<int>(d.size())) {
  cum_.resize(d.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    acc += d[i];
    cum_[i] = acc;
  }
}

double DensitySampler::sample(Rng& rng) const {
  const double u = uniform01(rng);
  const int bin = static_cast<int>(
      std::lower_bound(cum_.begin(), cum_.end(), u) - cum_.begin());
  const int b = std::min(bin, n_bins_ - 1);
  return (static_cast<double>(b) + uniform01(rng)) /
         static_cast<double>(n_bins_);
}

Ensemble::Ensemble(BaseProcess base, std::vector<FiberMap> maps)
    : base_(std::move(base)), maps_(std::move(maps)) {
  if (maps_.size() != base_.alphabet.size())
    throw std::invalid_argument("one fiber map per alphabet symbol required");
  for (const auto& m : maps_) m.validate();
}

const FiberMap& Ensemble::map(int symbol) const {
  return maps_[static_cast<std::size_t>(symbol)];
}

const UlamOperator& Ensemble::op(int symbol, int n_bins) const {
  const std::uint64_t key =
      (static_cast<std::uint64_t>(symbol) << 32) |
      static_cast<std::uint64_t>(static_cast<std::uint32_t>(n_bins));
  std::lock_guard<std::mutex> lock(cache_mutex_);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    auto op = std::make_unique<UlamOperator>(
        ulam_matrix(maps_[static_cast<std::size_t>(symbol)], n_bins));
    it = cache_.emplace(key, std::move(op)).first;
  }
  return *it->second;
}

Density equivariant_density(const Ensemble& ens, const BasePath& path,
                            int n_bins, long k_pullback) {
  if (k_pullback > path.k_past)
    throw std::invalid_argument("insufficient past: need k_past >= " +
                                std::to_string(k_pullback));
  Density h = uniform_density(n_bins);
  for (long j = -k_pullback; j < 0; ++j)
    h = ens.op_at(path, j, n_bins).push(h);
  check_density(h);
  return h;
}

PathDensities densities_along(const Ensemble& ens, const BasePath& path,
                              int n_bins) {
  PathDensities out;
  out.k_past = path.k_past;
  out.n_bins = n_bins;
  out.h.reserve(static_cast<std::size_t>(path.length()));
  Density h = uniform_density(n_bins);
  out.h.push_back(h);
  for (long j = -path.k_past; j < path.n_future; ++j) {
    h = ens.op_at(path, j, n_bins).push(h);
    out.h.push_back(h);
  }
  return out;
}

UlamOperator operator_cocycle(const Ensemble& ens, const BasePath& path,
                              long from, long n, int n_bins) {
  if (n < 0) throw std::invalid_argument("cocycle length must be >= 0");
  if (from < -path.k_past || from + n - 1 > path.n_future)
    throw std::out_of_range("cocycle window outside path");
  UlamOperator out = UlamOperator::identity(n_bins);
  for (long j = from; j < from + n; ++j)
    out = compose(ens.op_at(path, j, n_bins), out);
  out.check_row_stochastic(1e-10);
  return out;
}

DecayProfile decay_profile(const Ensemble& ens, const BasePath& path,
                           const PathDensities& dens,
                           const std::vector<double>& phi_bins, long n_max,
                           int n_bins) {
  if (static_cast<int>(phi_bins.size()) != n_bins)
    throw std::invalid_argument("phi must be given per bin midpoint");
  if (n_max > path.n_future)
    throw std::out_of_range("n_max exceeds path future window");
  const Density& h0 = dens.at(0);
  KahanSum mean;
  for (int i = 0; i < n_bins; ++i)
    mean.add(phi_bins[static_cast<std::size_t>(i)] *
             h0[static_cast<std::size_t>(i)]);
  const double phi_mean = mean.value();

  DecayProfile out;
  std::vector<double> signed_mass(static_cast<std::size_t>(n_bins));
  for (int i = 0; i < n_bins; ++i)
    signed_mass[static_cast<std::size_t>(i)] =
        phi_bins[static_cast<std::size_t>(i)] * h0[static_cast<std::size_t>(i)];
  long total_bins = 0;
  for (long n = 1; n <= n_max; ++n) {
    signed_mass = ens.op_at(path, n - 1, n_bins).push(signed_mass);
    const Density& hn = dens.at(n);
    double sup = 0.0;
    for (int i = 0; i < n_bins; ++i) {
      if (hn[static_cast<std::size_t>(i)] < kDensityFloor) {
        ++out.masked_bins;
        continue;
      }
      const double fn = signed_mass[static_cast<std::size_t>(i)] /
                        hn[static_cast<std::size_t>(i)];
      sup = std::max(sup, std::fabs(fn - phi_mean));
    }
    total_bins += n_bins;
    out.sup_deviation.push_back(sup);
  }
  out.mask_warning = out.masked_bins * 10 > total_bins;

  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < out.sup_deviation.size(); ++k) {
    if (out.sup_deviation[k] > 1e-14) {
      xs.push_back(static_cast<double>(k + 1));
      ys.push_back(std::log(out.sup_deviation[k]));
    }
  }
  const LineFit fit = fit_line(xs, ys);
  if (fit.ok) {
    out.fitted_rate = std::min(1.0, std::exp(fit.slope));
    out.fitted_K = std::exp(fit.intercept);
    out.fit_ok = out.fitted_rate > 0.0;
  }
  return out;
}

DualityResidual duality_check(const Ensemble& ens, const BasePath& path,
                              const PathDensities& dens,
                              const std::function<double(double)>& f,
                              const std::function<double(double)>& g, long n,
                              int n_bins, long n_samples, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  const Density& h0 = dens.at(0);

  // right side: push f d(mu_omega) forward n steps, pair with g
  std::vector<double> signed_mass(static_cast<std::size_t>(n_bins));
  for (int i = 0; i < n_bins; ++i)
    signed_mass[static_cast<std::size_t>(i)] =
        f(bin_midpoint(i, n_bins)) * h0[static_cast<std::size_t>(i)];
  for (long j = 0; j < n; ++j)
    signed_mass = ens.op_at(path, j, n_bins).push(signed_mass);
  KahanSum right;
  for (int i = 0; i < n_bins; ++i)
    right.add(signed_mass[static_cast<std::size_t>(i)] *
              g(bin_midpoint(i, n_bins)));

  // left side: Monte Carlo over mu_omega-distributed starts
  std::vector<double> cum(static_cast<std::size_t>(n_bins));
  double acc = 0.0;
  for (int i = 0; i < n_bins; ++i) {
    acc += h0[static_cast<std::size_t>(i)];
    cum[static_cast<std::size_t>(i)] = acc;
  }
  Rng rng = make_rng(seed);
  KahanSum sum, sumsq;
  for (long s = 0; s < n_samples; ++s) {
    const double u = uniform01(rng);
    const int bin = static_cast<int>(
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    const double lo = static_cast<double>(bin) / n_bins;
    double x = lo + uniform01(rng) / n_bins;
    const double fx = f(x);
    for (long j = 0; j < n; ++j) x = step_orbit(ens.map_at(path, j), x, rng);
    const double term = fx * g(x);
    sum.add(term);
    sumsq.add(term * term);
  }
  DualityResidual out;
  const double nn = static_cast<double>(n_samples);
  out.left = sum.value() / nn;
  out.right = right.value();
  out.residual = std::fabs(out.left - out.right);
  const double var = std::max(0.0, sumsq.value() / nn - out.left * out.left);
  out.mc_se = std::sqrt(var / nn);
  return out;
}

}  // namespace rds
