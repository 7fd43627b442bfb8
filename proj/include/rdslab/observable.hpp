#ifndef RDSLAB_OBSERVABLE_HPP
#define RDSLAB_OBSERVABLE_HPP

#include <variant>
#include <vector>

#include "rdslab/base_env.hpp"
#include "rdslab/transfer_engine.hpp"

namespace rds {

// Named formula library for observables. Components evaluate at (symbol, x);
// only the coboundary kind actually looks at the symbol's fiber map.

struct PolyTerm {
  std::vector<double> coeffs;  // c0 + c1 x + c2 x^2 + ...
  double operator()(double x) const;
};

struct TrigTerm {
  double c0 = 0.0;
  double c_cos = 0.0;
  double c_sin = 0.0;
  double freq = 1.0;  // cos(2 pi freq x), sin(2 pi freq x)
  double operator()(double x) const;
};

// v(omega, x) = q(x) - q(T_omega x); a coboundary, so its Birkhoff sums
// telescope and the limiting variance degenerates.
struct CoboundaryTerm {
  PolyTerm q;
};

using Component = std::variant<PolyTerm, TrigTerm, CoboundaryTerm>;

struct Observable {
  std::vector<Component> components;

  int dim() const { return static_cast<int>(components.size()); }
  double eval_component(int c, const FiberMap& map, double x) const;
  void eval(const FiberMap& map, double x, double* out) const;
  // sup over bin midpoints and symbols of the component magnitudes
  double sup_norm(const Ensemble& ens, int n_bins) const;
};

// Observable minus its fiberwise mean along a concrete path. Construct via
// center_observable; evaluation is indexed by the path position.
struct CenteredObservable {
  Observable base;
  long k_past = 0;
  long n_future = 0;
  std::vector<std::vector<double>> means;  // index u = j + k_past
  bool centered = false;

  int dim() const { return base.dim(); }
  const std::vector<double>& mean_at(long j) const {
    return means[static_cast<std::size_t>(j + k_past)];
  }
  void eval(long j, const FiberMap& map, double x, double* out) const;
  double eval_component(long j, int c, const FiberMap& map, double x) const;
};

CenteredObservable center_observable(const Observable& v, const Ensemble& ens,
                                     const BasePath& path,
                                     const PathDensities& dens);

// Bin-midpoint values of component c at path index j, length n_bins.
std::vector<double> observable_bins(const CenteredObservable& v,
                                    const Ensemble& ens, const BasePath& path,
                                    long j, int c, int n_bins);

}  // namespace rds

#endif
