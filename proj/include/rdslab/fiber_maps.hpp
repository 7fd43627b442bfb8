#ifndef RDSLAB_FIBER_MAPS_HPP
#define RDSLAB_FIBER_MAPS_HPP

#include <optional>
#include <string>
#include <vector>

namespace rds {

// One affine full branch: y = slope*x + intercept maps [lo, hi) onto [0, 1).
struct Branch {
  double lo = 0.0;
  double hi = 1.0;
  double slope = 1.0;
  double intercept = 0.0;

  double image(double x) const { return slope * x + intercept; }
  double preimage(double y) const { return (y - intercept) / slope; }
};

enum class MapFamily { beta, lasota_yorke, mixed };

// Parameter record for one alphabet symbol.
struct MapSpec {
  MapFamily family = MapFamily::beta;
  int beta = 2;                        // beta family
  std::vector<double> breakpoints;     // lasota_yorke family
  std::vector<double> slopes;          // lasota_yorke, optional cross-check
  int q = 0;                           // mixed family: slack branch count
  double l = 1.0;                      // mixed: slack branch Lipschitz bound
  int d = 2;                           // mixed: total branch count
  double eta = 2.0;                    // mixed: claimed minimal expansion
};

// Branch statistics entering the dominating-expansion estimate: q slack
// branches out of d, inverse-Lipschitz bound l on the slack ones, minimal
// expansion eta on the rest.
struct ExpansionStats {
  int q = 0;
  int d = 1;
  double l = 1.0;
  double eta = 2.0;
};

// Full-branch piecewise expanding interval map on [0,1). Immutable; apply()
// is pure. Endpoints are right-open and the input 1.0 folds to 0.0.
struct FiberMap {
  std::vector<Branch> branches;
  std::string symbol_name;
  std::optional<ExpansionStats> declared_stats;  // set by the mixed builder

  double apply(double x) const;
  int branch_of(double x) const;
  int branch_count() const { return static_cast<int>(branches.size()); }
  void validate() const;
};

FiberMap build_map(const MapSpec& spec, const std::string& symbol_name = "");

// Derives (q, d, l, eta) from a map when the builder did not declare them:
// branches with |slope| <= 1 count as slack.
ExpansionStats branch_stats(const FiberMap& map);

struct ExpansionReport {
  ExpansionStats stats;
  double alpha = 1.0;
  double eps_omega = 0.0;   // oscillation of the potential
  double holder_H = 0.0;    // Hoelder constant of the composed potential
  double a_omega = 0.0;
  double s_omega = 0.0;
  double B_omega = 0.0;
  bool s_lt_1 = false;
};

// a = (q l^alpha + (d-q) eta^{-alpha}) / d, s = e^eps * a, B = 12(1+2/s)^4.
ExpansionReport expansion_report(const ExpansionStats& stats, double alpha,
                                 double eps_omega, double holder_H);

// Second dominating-expansion clause, checked pairwise along a path:
// e^{eps} H <= (s_next^{-1} - 1) / (1 + s_cur^{-1}).
bool holder_pair_ok(const ExpansionReport& cur, const ExpansionReport& next);

struct TameBound {
  double r_hat = 0.0;        // max_n a_n * B_n
  double lhs = 0.0;          // empirical ||R||_q^q (single-path surrogate)
  double rhs = 0.0;          // mean(B^q) * sum a_n^q
  bool holds = false;
};

// Empirical version of the envelope B(sigma^n omega) <= R(omega) / a_n.
TameBound tame_B(const std::vector<double>& b_values,
                 const std::vector<double>& a_n, double q);

}  // namespace rds

#endif
