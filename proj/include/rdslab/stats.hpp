#ifndef RDSLAB_STATS_HPP
#define RDSLAB_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace rds {

// Compensated (Kahan) accumulator so reduction order does not leak into
// results beyond ~1e-12.
class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }
  KahanSum& operator+=(double x) {
    add(x);
    return *this;
  }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;   // unbiased sample variance
  double se = 0.0;    // standard error of the mean
  std::size_t n = 0;
};

inline MeanVar mean_var(const std::vector<double>& xs) {
  MeanVar out;
  out.n = xs.size();
  if (xs.empty()) return out;
  KahanSum s;
  for (double x : xs) s.add(x);
  out.mean = s.value() / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    KahanSum q;
    for (double x : xs) q.add((x - out.mean) * (x - out.mean));
    out.var = q.value() / static_cast<double>(xs.size() - 1);
    out.se = std::sqrt(out.var / static_cast<double>(xs.size()));
  }
  return out;
}

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

// One-sample two-sided KS distance against a normal law.
inline double ks_distance_normal(std::vector<double> samples, double mean,
                                 double sd) {
  if (samples.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = normal_cdf(samples[i], mean, sd);
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(f - lo, hi - f));
  }
  return d;
}

// Two-sample two-sided KS distance.
inline double ks_distance_two_sample(std::vector<double> a,
                                     std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na -
                              static_cast<double>(j) / nb));
  }
  return d;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  bool ok = false;
};

// Least squares y = slope*x + intercept.
inline LineFit fit_line(const std::vector<double>& x,
                        const std::vector<double>& y) {
  LineFit f;
  if (x.size() != y.size() || x.size() < 2) return f;
  const double n = static_cast<double>(x.size());
  KahanSum sx, sy, sxx, sxy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx.add(x[i]);
    sy.add(y[i]);
    sxx.add(x[i] * x[i]);
    sxy.add(x[i] * y[i]);
  }
  const double det = n * sxx.value() - sx.value() * sx.value();
  if (std::fabs(det) < 1e-300) return f;
  f.slope = (n * sxy.value() - sx.value() * sy.value()) / det;
  f.intercept = (sy.value() - f.slope * sx.value()) / n;
  f.ok = true;
  return f;
}

// --- small dense symmetric matrices (row-major e x e) ---

// Jacobi eigendecomposition; A = V diag(w) V^T. Sizes here are tiny (e <= 8).
inline void sym_eigen(std::vector<double> a, int n, std::vector<double>& w,
                      std::vector<double>& v) {
  v.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q)
        off += a[static_cast<std::size_t>(p) * n + q] *
               a[static_cast<std::size_t>(p) * n + q];
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[static_cast<std::size_t>(p) * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double app = a[static_cast<std::size_t>(p) * n + p];
        const double aqq = a[static_cast<std::size_t>(q) * n + q];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[static_cast<std::size_t>(k) * n + p];
          const double akq = a[static_cast<std::size_t>(k) * n + q];
          a[static_cast<std::size_t>(k) * n + p] = c * akp - s * akq;
          a[static_cast<std::size_t>(k) * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[static_cast<std::size_t>(p) * n + k];
          const double aqk = a[static_cast<std::size_t>(q) * n + k];
          a[static_cast<std::size_t>(p) * n + k] = c * apk - s * aqk;
          a[static_cast<std::size_t>(q) * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[static_cast<std::size_t>(k) * n + p];
          const double vkq = v[static_cast<std::size_t>(k) * n + q];
          v[static_cast<std::size_t>(k) * n + p] = c * vkp - s * vkq;
          v[static_cast<std::size_t>(k) * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  w.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] =
      a[static_cast<std::size_t>(i) * n + i];
}

// Symmetric PSD square root; negative eigenvalues below -tol are rejected.
inline std::vector<double> sym_sqrt(const std::vector<double>& a, int n,
                                    double tol = 1e-8) {
  std::vector<double> w, v;
  sym_eigen(a, n, w, v);
  for (double lam : w)
    if (lam < -tol) throw std::runtime_error("matrix not PSD within tolerance");
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k)
        s += v[static_cast<std::size_t>(i) * n + k] *
             std::sqrt(std::max(0.0, w[static_cast<std::size_t>(k)])) *
             v[static_cast<std::size_t>(j) * n + k];
      out[static_cast<std::size_t>(i) * n + j] = s;
    }
  return out;
}

inline double min_eigenvalue_sym(const std::vector<double>& a, int n) {
  std::vector<double> w, v;
  sym_eigen(a, n, w, v);
  return *std::min_element(w.begin(), w.end());
}

}  // namespace rds

#endif
