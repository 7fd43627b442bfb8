#include "rdslab/observable.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rdslab/stats.hpp"

namespace rds {

double PolyTerm::operator()(double x) const {
  double y = 0.0;
  for (std::size_t k = coeffs.size(); k-- > 0;) y = y * x + coeffs[k];
  return y;
}

double TrigTerm::operator()(double x) const {
  const double t = 2.0 * std::numbers::pi * freq * x;
  return c0 + c_cos * std::cos(t) + c_sin * std::sin(t);
}

double Observable::eval_component(int c, const FiberMap& map, double x) const {
  const Component& comp = components[static_cast<std::size_t>(c)];
  if (const auto* p = std::get_if<PolyTerm>(&comp)) return (*p)(x);
  if (const auto* t = std::get_if<TrigTerm>(&comp)) return (*t)(x);
  const auto& cb = std::get<CoboundaryTerm>(comp);
  return cb.q(x) - cb.q(map.apply(x));
}

void Observable::eval(const FiberMap& map, double x, double* out) const {
  for (int c = 0; c < dim(); ++c) out[c] = eval_component(c, map, x);
}

double Observable::sup_norm(const Ensemble& ens, int n_bins) const {
  double sup = 0.0;
  for (int s = 0; s < ens.n_symbols(); ++s)
    for (int i = 0; i < n_bins; ++i)
      for (int c = 0; c < dim(); ++c)
        sup = std::max(sup, std::fabs(eval_component(c, ens.map(s),
                                                     bin_midpoint(i, n_bins))));
  return sup;
}

void CenteredObservable::eval(long j, const FiberMap& map, double x,
                              double* out) const {
  base.eval(map, x, out);
  const auto& m = mean_at(j);
  for (int c = 0; c < dim(); ++c) out[c] -= m[static_cast<std::size_t>(c)];
}

double CenteredObservable::eval_component(long j, int c, const FiberMap& map,
                                          double x) const {
  return base.eval_component(c, map, x) -
         mean_at(j)[static_cast<std::size_t>(c)];
}

CenteredObservable center_observable(const Observable& v, const Ensemble& ens,
                                     const BasePath& path,
                                     const PathDensities& dens) {
  CenteredObservable out;
  out.base = v;
  out.k_past = path.k_past;
  out.n_future = path.n_future;
  const int n_bins = dens.n_bins;
  const int e = v.dim();
  out.means.resize(static_cast<std::size_t>(path.length()));
  for (long j = -path.k_past; j <= path.n_future; ++j) {
    const FiberMap& map = ens.map_at(path, j);
    const Density& h = dens.at(j);
    std::vector<double> mean(static_cast<std::size_t>(e), 0.0);
    for (int c = 0; c < e; ++c) {
      KahanSum s;
      for (int i = 0; i < n_bins; ++i)
        s.add(v.eval_component(c, map, bin_midpoint(i, n_bins)) *
              h[static_cast<std::size_t>(i)]);
      mean[static_cast<std::size_t>(c)] = s.value();
    }
    out.means[static_cast<std::size_t>(j + path.k_past)] = std::move(mean);
  }
  out.centered = true;
  return out;
}

std::vector<double> observable_bins(const CenteredObservable& v,
                                    const Ensemble& ens, const BasePath& path,
                                    long j, int c, int n_bins) {
  std::vector<double> out(static_cast<std::size_t>(n_bins));
  const FiberMap& map = ens.map_at(path, j);
  for (int i = 0; i < n_bins; ++i)
    out[static_cast<std::size_t>(i)] =
        v.eval_component(j, c, map, bin_midpoint(i, n_bins));
  return out;
}

}  // namespace rds
