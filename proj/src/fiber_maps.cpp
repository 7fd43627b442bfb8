#include "rdslab/fiber_maps.hpp"

#include <cmath>
#include <stdexcept>

namespace rds {

namespace {
constexpr double kGeomTol = 1e-12;
}

double FiberMap::apply(double x) const {
  if (x == 1.0) x = 0.0;  // right-open convention
  const int b = branch_of(x);
  double y = branches[static_cast<std::size_t>(b)].image(x);
  // roundoff guard: full branches map into [0,1) exactly in exact arithmetic
  if (y < 0.0) y = 0.0;
  if (y >= 1.0) y = 0.0;
  return y;
}

int FiberMap::branch_of(double x) const {
  if (x == 1.0) x = 0.0;
  if (x < 0.0 || x >= 1.0)
    throw std::domain_error("state outside [0,1)");
  // branches are ordered; binary search is overkill for the branch counts here
  for (std::size_t i = 0; i < branches.size(); ++i)
    if (x >= branches[i].lo && x < branches[i].hi) return static_cast<int>(i);
  return static_cast<int>(branches.size()) - 1;
}

void FiberMap::validate() const {
  if (branches.empty()) throw std::invalid_argument("map has no branches");
  double cover = 0.0;
  double prev_hi = 0.0;
  for (const auto& b : branches) {
    if (b.lo != prev_hi)
      throw std::invalid_argument("branch does not cover [0,1)");
    if (!(b.hi > b.lo)) throw std::invalid_argument("empty branch interval");
    if (!(std::isfinite(b.slope)) || b.slope == 0.0)
      throw std::invalid_argument("branch slope must be finite and nonzero");
    // full branch: the image of [lo, hi) must be [0, 1)
    const double y0 = b.image(b.lo);
    const double y1 = b.image(b.hi);
    const double ylo = std::min(y0, y1);
    const double yhi = std::max(y0, y1);
    if (std::fabs(ylo) > kGeomTol || std::fabs(yhi - 1.0) > kGeomTol)
      throw std::invalid_argument("branch does not cover [0,1)");
    cover += b.hi - b.lo;
    prev_hi = b.hi;
  }
  if (std::fabs(cover - 1.0) > kGeomTol)
    throw std::invalid_argument("branch does not cover [0,1)");
}

FiberMap build_map(const MapSpec& spec, const std::string& symbol_name) {
  FiberMap map;
  map.symbol_name = symbol_name;
  switch (spec.family) {
    case MapFamily::beta: {
      if (spec.beta < 2)
        throw std::invalid_argument("beta family requires integer beta >= 2");
      const double beta = static_cast<double>(spec.beta);
      for (int i = 0; i < spec.beta; ++i) {
        Branch b;
        b.lo = static_cast<double>(i) / beta;
        b.hi = static_cast<double>(i + 1) / beta;
        b.slope = beta;
        b.intercept = -static_cast<double>(i);
        map.branches.push_back(b);
      }
      break;
    }
    case MapFamily::lasota_yorke: {
      const auto& bp = spec.breakpoints;
      if (bp.size() < 2 || bp.front() != 0.0 || bp.back() != 1.0)
        throw std::invalid_argument(
            "lasota_yorke breakpoints must run from 0 to 1");
      for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
        if (!(bp[i + 1] > bp[i]))
          throw std::invalid_argument("breakpoints must increase");
        Branch b;
        b.lo = bp[i];
        b.hi = bp[i + 1];
        b.slope = 1.0 / (b.hi - b.lo);  // full branch forces the slope
        b.intercept = -b.slope * b.lo;
        if (!spec.slopes.empty()) {
          if (spec.slopes.size() != bp.size() - 1)
            throw std::invalid_argument("one slope per branch required");
          if (std::fabs(spec.slopes[i] - b.slope) > 1e-9)
            throw std::invalid_argument(
                "declared slope inconsistent with full-branch interval");
        }
        map.branches.push_back(b);
      }
      break;
    }
    case MapFamily::mixed: {
      if (spec.q >= spec.d || spec.q < 0)
        throw std::invalid_argument("mixed family requires 0 <= q < d");
      if (!(spec.l > 0.0)) throw std::invalid_argument("l must be positive");
      // q slack branches whose inverse is l-Lipschitz (forward slope 1/l),
      // remaining branches share the leftover length equally. Full-branch
      // maps force q*l < 1, so slack branches here are weakly expanding.
      const double len_slack = spec.l;
      const double used = spec.q * len_slack;
      if (used >= 1.0)
        throw std::invalid_argument("slack branches exceed unit length");
      const int rest = spec.d - spec.q;
      const double len_exp = (1.0 - used) / rest;
      const double exp_slope = 1.0 / len_exp;
      if (exp_slope <= 1.0 || exp_slope + 1e-12 < spec.eta)
        throw std::invalid_argument("claimed expanding branch not expanding");
      double lo = 0.0;
      for (int i = 0; i < spec.d; ++i) {
        Branch b;
        b.lo = lo;
        b.hi = lo + (i < spec.q ? len_slack : len_exp);
        if (i == spec.d - 1) b.hi = 1.0;
        b.slope = 1.0 / (b.hi - b.lo);
        b.intercept = -b.slope * b.lo;
        map.branches.push_back(b);
        lo = b.hi;
      }
      ExpansionStats st;
      st.q = spec.q;
      st.d = spec.d;
      st.l = spec.l;
      st.eta = exp_slope;
      map.declared_stats = st;
      break;
    }
  }
  map.validate();
  return map;
}

ExpansionStats branch_stats(const FiberMap& map) {
  if (map.declared_stats) return *map.declared_stats;
  ExpansionStats st;
  st.d = map.branch_count();
  st.q = 0;
  st.l = 0.0;
  st.eta = 0.0;
  bool have_eta = false;
  for (const auto& b : map.branches) {
    const double s = std::fabs(b.slope);
    if (s <= 1.0) {
      ++st.q;
      st.l = std::max(st.l, 1.0 / s);
    } else {
      st.eta = have_eta ? std::min(st.eta, s) : s;
      have_eta = true;
    }
  }
  if (!have_eta) throw std::invalid_argument("no expanding branches");
  if (st.q == 0) st.l = 0.0;
  return st;
}

ExpansionReport expansion_report(const ExpansionStats& stats, double alpha,
                                 double eps_omega, double holder_H) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in (0,1]");
  if (eps_omega < 0.0) throw std::invalid_argument("eps_omega must be >= 0");
  if (holder_H < 0.0) throw std::invalid_argument("holder_H must be >= 0");
  if (stats.q >= stats.d) throw std::invalid_argument("no expanding branches");
  if (stats.eta <= 1.0)
    throw std::invalid_argument("claimed expanding branch not expanding");
  ExpansionReport rep;
  rep.stats = stats;
  rep.alpha = alpha;
  rep.eps_omega = eps_omega;
  rep.holder_H = holder_H;
  rep.a_omega = (stats.q * std::pow(stats.l, alpha) +
                 (stats.d - stats.q) * std::pow(stats.eta, -alpha)) /
                static_cast<double>(stats.d);
  rep.s_omega = std::exp(eps_omega) * rep.a_omega;
  rep.B_omega = 12.0 * std::pow(1.0 + 2.0 / rep.s_omega, 4.0);
  rep.s_lt_1 = rep.s_omega < 1.0;
  return rep;
}

bool holder_pair_ok(const ExpansionReport& cur, const ExpansionReport& next) {
  const double lhs = std::exp(cur.eps_omega) * cur.holder_H;
  const double rhs =
      (1.0 / next.s_omega - 1.0) / (1.0 + 1.0 / cur.s_omega);
  return lhs <= rhs;
}

TameBound tame_B(const std::vector<double>& b_values,
                 const std::vector<double>& a_n, double q) {
  if (b_values.empty()) throw std::invalid_argument("empty B sequence");
  if (a_n.size() != b_values.size())
    throw std::invalid_argument("a_n must match B sequence length");
  if (!(q > 0.0)) throw std::invalid_argument("q must be positive");
  TameBound out;
  double sum_aq = 0.0;
  double sum_bq = 0.0;
  for (std::size_t i = 0; i < b_values.size(); ++i) {
    if (!(a_n[i] > 0.0)) throw std::invalid_argument("a_n must be positive");
    out.r_hat = std::max(out.r_hat, a_n[i] * b_values[i]);
    sum_aq += std::pow(a_n[i], q);
    sum_bq += std::pow(b_values[i], q);
  }
  out.lhs = std::pow(out.r_hat, q);
  out.rhs = (sum_bq / static_cast<double>(b_values.size())) * sum_aq;
  out.holds = out.lhs <= out.rhs * (1.0 + 1e-12);
  return out;
}

}  // namespace rds
