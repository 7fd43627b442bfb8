#include "rdslab/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rdslab/fast_slow.hpp"
#include "rdslab/limit_stats.hpp"
#include "rdslab/martingale.hpp"
#include "rdslab/rng.hpp"
#include "rdslab/stats.hpp"
#include "rdslab/transfer_engine.hpp"

namespace rds {

namespace {

using nlohmann::json;

const std::vector<std::string> kScenarios = {
    "decay",   "decomposition", "clt",            "lil",
    "moments", "iterated_wip",  "homogenization", "conditions"};

std::string family_name(MapFamily f) {
  switch (f) {
    case MapFamily::beta:
      return "beta";
    case MapFamily::lasota_yorke:
      return "lasota_yorke";
    case MapFamily::mixed:
      return "mixed";
  }
  return "beta";
}

MapFamily family_from(const std::string& s) {
  if (s == "beta") return MapFamily::beta;
  if (s == "lasota_yorke") return MapFamily::lasota_yorke;
  if (s == "mixed") return MapFamily::mixed;
  throw std::invalid_argument("maps.family: unknown family '" + s + "'");
}

json map_to_json(const MapSpec& m) {
  json j;
  j["family"] = family_name(m.family);
  switch (m.family) {
    case MapFamily::beta:
      j["beta"] = m.beta;
      break;
    case MapFamily::lasota_yorke:
      j["breakpoints"] = m.breakpoints;
      j["slopes"] = m.slopes;
      break;
    case MapFamily::mixed:
      j["q"] = m.q;
      j["l"] = m.l;
      j["d"] = m.d;
      j["eta"] = m.eta;
      break;
  }
  return j;
}

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const auto& k : allowed)
      if (item.key() == k) ok = true;
    if (!ok)
      throw std::invalid_argument("unknown field '" + where + item.key() +
                                  "'");
  }
}

MapSpec map_from_json(const json& j) {
  check_keys(j, {"family", "beta", "breakpoints", "slopes", "q", "l", "d",
                 "eta"},
             "maps.");
  MapSpec m;
  m.family = family_from(j.value("family", std::string("beta")));
  m.beta = j.value("beta", 2);
  m.breakpoints = j.value("breakpoints", std::vector<double>{});
  m.slopes = j.value("slopes", std::vector<double>{});
  m.q = j.value("q", 0);
  m.l = j.value("l", 1.0);
  m.d = j.value("d", 2);
  m.eta = j.value("eta", 2.0);
  return m;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["scenario"] = c.scenario;
  j["base"]["kind"] = c.base_kind;
  j["base"]["alphabet"] = c.alphabet;
  j["base"]["weights"] = c.weights;
  j["base"]["transition"] = c.transition;
  j["maps"] = json::array();
  for (const auto& m : c.maps) j["maps"].push_back(map_to_json(m));
  j["observable"] = c.observable;
  j["numerics"]["n_bins"] = c.numerics.n_bins;
  j["numerics"]["truncation_k"] = c.numerics.truncation_k;
  j["numerics"]["n_lags"] = c.numerics.n_lags;
  j["numerics"]["n"] = c.numerics.n;
  j["numerics"]["n_paths"] = c.numerics.n_paths;
  j["numerics"]["epsilon"] = c.numerics.epsilon;
  j["numerics"]["dt"] = c.numerics.dt;
  j["master_seed"] = c.master_seed;
  // output_dir and threads are execution details, not semantics: two runs of
  // the same experiment hash identically regardless of where and how wide
  j["conditions"]["alpha"] = c.alpha;
  j["conditions"]["eps_omega"] = c.eps_omega;
  j["conditions"]["holder_H"] = c.holder_H;
  j["conditions"]["rho_values"] = c.rho_values;
  return j;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

struct StageClock {
  std::vector<std::pair<std::string, double>>* out;
  std::string name;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  ~StageClock() {
    out->emplace_back(
        name, std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0)
                  .count());
  }
};

ResultRow gated(std::string name, double value, double se, double tol,
                bool pass, std::string method) {
  ResultRow r;
  r.name = std::move(name);
  r.value = value;
  r.se = se;
  r.tolerance = tol;
  r.pass = pass;
  r.method = std::move(method);
  return r;
}

ResultRow info(std::string name, double value, double se, std::string method) {
  ResultRow r;
  r.name = std::move(name);
  r.value = value;
  r.se = se;
  r.has_tolerance = false;
  r.pass = true;
  r.method = std::move(method);
  return r;
}

BaseProcess build_base(const ExperimentConfig& cfg) {
  if (cfg.base_kind == "iid")
    return BaseProcess::make_iid(cfg.alphabet, cfg.weights);
  return BaseProcess::make_markov(cfg.alphabet, cfg.transition);
}

std::vector<FiberMap> build_maps(const ExperimentConfig& cfg) {
  std::vector<FiberMap> maps;
  maps.reserve(cfg.maps.size());
  for (std::size_t i = 0; i < cfg.maps.size(); ++i)
    maps.push_back(build_map(cfg.maps[i], cfg.alphabet[i]));
  return maps;
}

std::vector<double> raw_observable_bins(const Observable& obs, int c,
                                        const FiberMap& map, int n_bins) {
  std::vector<double> out(static_cast<std::size_t>(n_bins));
  for (int bin = 0; bin < n_bins; ++bin)
    out[static_cast<std::size_t>(bin)] =
        obs.eval_component(c, map, bin_midpoint(bin, n_bins));
  return out;
}

// Geometric decay rate of one symbol's transfer operator, fitted on the
// constant path of that symbol.
double symbol_decay_rate(const Ensemble& ens, int symbol,
                         const Observable& obs, int n_bins) {
  BasePath cpath;
  cpath.k_past = 3;
  cpath.n_future = 24;
  cpath.symbols.assign(static_cast<std::size_t>(cpath.length()), symbol);
  const PathDensities dens = densities_along(ens, cpath, n_bins);
  const auto phi = raw_observable_bins(obs, 0, ens.map(symbol), n_bins);
  const DecayProfile prof =
      decay_profile(ens, cpath, dens, phi, 20, n_bins);
  return prof.fit_ok ? prof.fitted_rate : 1.0;
}

}  // namespace

Observable observable_by_name(const std::string& name) {
  Observable v;
  if (name == "x-minus-half") {
    v.components.push_back(PolyTerm{{-0.5, 1.0}});
  } else if (name == "cos2pi") {
    TrigTerm t;
    t.c_cos = 1.0;
    v.components.push_back(t);
  } else if (name == "pair") {
    v.components.push_back(PolyTerm{{-0.5, 1.0}});
    TrigTerm t;
    t.c_cos = 1.0;
    v.components.push_back(t);
  } else if (name == "coboundary-q") {
    v.components.push_back(CoboundaryTerm{PolyTerm{{0.0, 1.0, -1.0}}});
  } else {
    throw std::invalid_argument("observable: unknown formula '" + name + "'");
  }
  return v;
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") +
                                e.what());
  }
  check_keys(j,
             {"scenario", "base", "maps", "observable", "numerics",
              "master_seed", "output_dir", "threads", "conditions"},
             "");
  ExperimentConfig c;
  c.scenario = j.value("scenario", std::string(""));
  if (j.contains("base")) {
    const json& b = j["base"];
    check_keys(b, {"kind", "alphabet", "weights", "transition"}, "base.");
    c.base_kind = b.value("kind", std::string("iid"));
    c.alphabet = b.value("alphabet", std::vector<std::string>{});
    c.weights = b.value("weights", std::vector<double>{});
    c.transition = b.value("transition", std::vector<std::vector<double>>{});
  }
  if (j.contains("maps"))
    for (const auto& m : j["maps"]) c.maps.push_back(map_from_json(m));
  c.observable = j.value("observable", std::string("x-minus-half"));
  if (j.contains("numerics")) {
    const json& n = j["numerics"];
    check_keys(n,
               {"n_bins", "truncation_k", "n_lags", "n", "n_paths", "epsilon",
                "dt"},
               "numerics.");
    c.numerics.n_bins = n.value("n_bins", c.numerics.n_bins);
    c.numerics.truncation_k = n.value("truncation_k", c.numerics.truncation_k);
    c.numerics.n_lags = n.value("n_lags", c.numerics.n_lags);
    c.numerics.n = n.value("n", c.numerics.n);
    c.numerics.n_paths = n.value("n_paths", c.numerics.n_paths);
    c.numerics.epsilon = n.value("epsilon", c.numerics.epsilon);
    c.numerics.dt = n.value("dt", c.numerics.dt);
  }
  c.master_seed = j.value("master_seed", c.master_seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.threads = j.value("threads", c.threads);
  if (j.contains("conditions")) {
    const json& k = j["conditions"];
    check_keys(k, {"alpha", "eps_omega", "holder_H", "rho_values"},
               "conditions.");
    c.alpha = k.value("alpha", c.alpha);
    c.eps_omega = k.value("eps_omega", c.eps_omega);
    c.holder_H = k.value("holder_H", c.holder_H);
    c.rho_values = k.value("rho_values", c.rho_values);
  }
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_dump(const ExperimentConfig& cfg) {
  // nlohmann objects are key-sorted, so dump() is already canonical
  return config_to_json(cfg).dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash64(canonical_dump(cfg))));
  return buf;
}

std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> out;
  bool known_scenario = false;
  for (const auto& s : kScenarios)
    if (cfg.scenario == s) known_scenario = true;
  if (!known_scenario)
    out.push_back("scenario: unknown scenario '" + cfg.scenario + "'");
  if (cfg.alphabet.empty()) out.push_back("base.alphabet must be non-empty");
  if (cfg.base_kind != "iid" && cfg.base_kind != "markov")
    out.push_back("base.kind must be iid or markov");
  if (cfg.base_kind == "iid") {
    if (cfg.weights.size() != cfg.alphabet.size())
      out.push_back("base.weights size must match alphabet");
    double s = 0.0;
    for (double w : cfg.weights) {
      if (w <= 0.0) out.push_back("base.weights must be positive");
      s += w;
    }
    if (!cfg.weights.empty() && std::fabs(s - 1.0) > 1e-9)
      out.push_back("base.weights must sum to 1");
  } else if (cfg.base_kind == "markov") {
    if (cfg.transition.size() != cfg.alphabet.size())
      out.push_back("base.transition must be square over the alphabet");
    for (std::size_t r = 0; r < cfg.transition.size(); ++r) {
      if (cfg.transition[r].size() != cfg.alphabet.size()) {
        out.push_back("base.transition row " + std::to_string(r) +
                      " has wrong length");
        continue;
      }
      double s = 0.0;
      for (double p : cfg.transition[r]) s += p;
      if (std::fabs(s - 1.0) > 1e-9)
        out.push_back("base.transition row " + std::to_string(r) +
                      " must sum to 1");
    }
  }
  if (cfg.maps.size() != cfg.alphabet.size())
    out.push_back("maps: need one map per alphabet symbol");
  try {
    observable_by_name(cfg.observable);
  } catch (const std::exception& e) {
    out.push_back(e.what());
  }
  if (cfg.numerics.n_bins < 2) out.push_back("numerics.n_bins must be >= 2");
  if (cfg.numerics.truncation_k < 1)
    out.push_back("numerics.truncation_k must be positive");
  if (cfg.numerics.n_lags < 1) out.push_back("numerics.n_lags must be positive");
  if (cfg.numerics.n < 1) out.push_back("numerics.n must be positive");
  if (cfg.numerics.n_paths < 1)
    out.push_back("numerics.n_paths must be positive");
  if (!(cfg.numerics.epsilon > 0.0 && cfg.numerics.epsilon < 1.0))
    out.push_back("epsilon must be in (0,1)");
  if (cfg.numerics.dt < 0.0) out.push_back("numerics.dt must be >= 0");
  if (cfg.output_dir.empty()) out.push_back("output_dir must be non-empty");
  if (cfg.scenario == "conditions") {
    if (cfg.alpha <= 0.0 || cfg.alpha > 1.0)
      out.push_back("conditions.alpha must be in (0,1]");
    if (cfg.rho_values.size() != cfg.alphabet.size())
      out.push_back("conditions.rho_values: need one value per symbol");
    for (double r : cfg.rho_values)
      if (!(r > 0.0))
        out.push_back("conditions.rho_values must be positive");
  }
  return out;
}

const std::vector<Preset>& presets() {
  static const std::vector<Preset> kPresets = [] {
    std::vector<Preset> ps;

    ExperimentConfig doubling;
    doubling.base_kind = "iid";
    doubling.alphabet = {"doubling"};
    doubling.weights = {1.0};
    doubling.maps = {MapSpec{}};  // beta = 2
    doubling.observable = "x-minus-half";
    doubling.numerics.n_bins = 1024;
    doubling.numerics.truncation_k = 25;
    doubling.numerics.n_lags = 40;
    doubling.numerics.n = 2000;
    doubling.numerics.n_paths = 1000;
    doubling.master_seed = 20260823;

    ExperimentConfig random_beta = doubling;
    random_beta.alphabet = {"beta2", "beta3"};
    random_beta.weights = {0.5, 0.5};
    MapSpec b3;
    b3.beta = 3;
    random_beta.maps = {MapSpec{}, b3};

    {
      Preset p;
      p.name = "doubling-clt";
      p.description =
          "CLT of S_n/sqrt(n) for the doubling map with v = x - 1/2 against "
          "Normal(0, Sigma) from the lag-correlation series";
      p.config = doubling;
      p.config.scenario = "clt";
      ps.push_back(p);
    }
    {
      Preset p;
      p.name = "doubling-cos-clt";
      p.description =
          "CLT for the doubling map with v = cos 2 pi x (Sigma = 1/2)";
      p.config = doubling;
      p.config.scenario = "clt";
      p.config.observable = "cos2pi";
      ps.push_back(p);
    }
    {
      Preset p;
      p.name = "coboundary-degenerate";
      p.description =
          "Degenerate case v = q - q o T with q = x(1-x): Sigma vanishes and "
          "the CLT scaling collapses";
      p.config = doubling;
      p.config.scenario = "clt";
      p.config.observable = "coboundary-q";
      ps.push_back(p);
    }
    {
      Preset p;
      p.name = "random-beta-decay";
      p.description =
          "Fiberwise decay of correlations along a random beta in {2,3} "
          "ensemble with a geometric-rate fit";
      p.config = random_beta;
      p.config.scenario = "decay";
      ps.push_back(p);
    }
    {
      Preset p;
      p.name = "random-beta-decomposition";
      p.description =
          "Martingale-coboundary decomposition on the random beta ensemble: "
          "fiberwise vanishing L_omega m_omega = 0 and reconstruction of v";
      p.config = random_beta;
      p.config.scenario = "decomposition";
      ps.push_back(p);
    }
    {
      Preset p;
      p.name = "doubling-lil";
      p.description =
          "Law-of-iterated-logarithm envelope occupancy for the doubling map";
      p.config = doubling;
      p.config.scenario = "lil";
      p.config.numerics.n = 5000;
      p.config.numerics.n_paths = 400;
      ps.push_back(p);
    }
    {
      Preset p;
      p.name = "doubling-wip";
      p.description =
          "Iterated weak invariance principle: pairing identity and mean of "
          "the double-sum process against the drift constant E";
      p.config = doubling;
      p.config.scenario = "iterated_wip";
      p.config.numerics.n = 4000;
      p.config.numerics.n_paths = 2000;
      ps.push_back(p);
    }
    {
      Preset p;
      p.name = "doubling-moments";
      p.description =
          "Maximal-inequality moment scaling: ||max_k |S_k|||_4 ~ n^{1/2} and "
          "the iterated-sum analogue ~ n";
      p.config = doubling;
      p.config.scenario = "moments";
      p.config.numerics.n = 10000;
      p.config.numerics.n_paths = 400;
      ps.push_back(p);
    }
    {
      Preset p;
      p.name = "homog-sin";
      p.description =
          "Fast-slow homogenization with a = 0, b = sin x + 2 over doubling "
          "fast dynamics, compared to the corrected SDE limit";
      p.config = doubling;
      p.config.scenario = "homogenization";
      p.config.numerics.epsilon = 0.05;
      p.config.numerics.n_paths = 2000;
      ps.push_back(p);
    }
    {
      Preset p;
      p.name = "conditions-default";
      p.description =
          "Dominating-expansion and mixing condition checkers for a mixed "
          "ensemble with one slack branch";
      p.config = doubling;
      p.config.scenario = "conditions";
      MapSpec mixed;
      mixed.family = MapFamily::mixed;
      mixed.q = 1;
      mixed.l = 1.2;
      mixed.d = 4;
      mixed.eta = 2.0;
      p.config.maps = {mixed};
      p.config.alpha = 1.0;
      p.config.rho_values = {0.5};
      ps.push_back(p);
    }
    return ps;
  }();
  return kPresets;
}

const Preset& preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw std::invalid_argument("unknown preset '" + name + "'");
}

namespace {

void run_conditions(const ExperimentConfig& cfg, RunSummary& sum) {
  const MapSpec& m = cfg.maps.at(0);
  ExpansionStats stats;
  if (m.family == MapFamily::mixed) {
    stats.q = m.q;
    stats.d = m.d;
    stats.l = m.l;
    stats.eta = m.eta;
  } else {
    stats = branch_stats(build_map(m));
  }
  const ExpansionReport rep =
      expansion_report(stats, cfg.alpha, cfg.eps_omega, cfg.holder_H);
  sum.rows.push_back(info("a_omega", rep.a_omega, 0.0, "analytic"));
  sum.rows.push_back(info("s_omega", rep.s_omega, 0.0, "analytic"));
  sum.rows.push_back(info("B_omega", rep.B_omega, 0.0, "analytic"));
  sum.rows.push_back(gated("s_lt_1", rep.s_lt_1 ? 1.0 : 0.0, 0.0, 1.0,
                           rep.s_lt_1, "analytic"));

  const BaseProcess base = build_base(cfg);
  const int k_max = 20;
  const auto psi = psi_upper(base, k_max);
  double psi_max = 0.0;
  for (double v : psi) psi_max = std::max(psi_max, v);
  sum.rows.push_back(info("psi_upper_max", psi_max, 0.0, "analytic"));
  if (!cfg.rho_values.empty()) {
    const MixingReport mix =
        check_upper_mixing_criterion(base, cfg.rho_values, k_max);
    sum.rows.push_back(info("mixing_lhs", mix.lhs, 0.0, "analytic"));
    sum.rows.push_back(info("mixing_rhs", mix.rhs, 0.0, "analytic"));
    sum.rows.push_back(gated("mixing_criterion", mix.criterion_ok ? 1.0 : 0.0,
                             0.0, 1.0, mix.criterion_ok, "analytic"));
  }
}

struct Wired {
  BasePath path;
  PathDensities dens;
  CenteredObservable v;
};

Wired wire(const ExperimentConfig& cfg, const Ensemble& ens, long k_past,
           long n_future) {
  Wired w;
  w.path =
      sample_path(ens.base(), k_past, n_future, seed_for(cfg.master_seed, "path"));
  w.dens = densities_along(ens, w.path, cfg.numerics.n_bins);
  w.v = center_observable(observable_by_name(cfg.observable), ens, w.path,
                          w.dens);
  return w;
}

void run_decay(const ExperimentConfig& cfg, const Ensemble& ens,
               RunSummary& sum) {
  const int n_bins = cfg.numerics.n_bins;
  const long n_max = std::min<long>(cfg.numerics.n_lags, 40);
  const Wired w = wire(cfg, ens, 5, n_max);
  const Observable obs = observable_by_name(cfg.observable);
  const auto phi =
      raw_observable_bins(obs, 0, ens.map_at(w.path, 0), n_bins);
  const DecayProfile prof =
      decay_profile(ens, w.path, w.dens, phi, n_max, n_bins);
  sum.rows.push_back(gated("fitted_rate", prof.fitted_rate, 0.0, 0.55,
                           prof.fit_ok && prof.fitted_rate <= 0.55,
                           "ulam-pushforward"));
  sum.rows.push_back(info("fitted_K", prof.fitted_K, 0.0, "ulam-pushforward"));
  sum.rows.push_back(info("sup_dev_final",
                          prof.sup_deviation.empty()
                              ? 0.0
                              : prof.sup_deviation.back(),
                          0.0, "ulam-pushforward"));
  sum.rows.push_back(info("masked_bins",
                          static_cast<double>(prof.masked_bins), 0.0,
                          "ulam-pushforward"));
}

void run_decomposition(const ExperimentConfig& cfg, const Ensemble& ens,
                       RunSummary& sum) {
  const int n_bins = cfg.numerics.n_bins;
  const int k = cfg.numerics.truncation_k;
  const long j_max = 4;
  const Wired w = wire(cfg, ens, k + 2, j_max + 1);
  const ChiField chi =
      compute_chi(ens, w.path, w.dens, w.v, k, n_bins, j_max);
  const MField m = compute_m(ens, w.path, w.v, chi);
  const auto residuals = verify_vanishing(ens, w.path, w.dens, m);
  double worst = 0.0;
  for (double r : residuals) worst = std::max(worst, r);
  sum.rows.push_back(gated("max_vanishing_residual", worst, 0.0, 1e-3,
                           worst <= 1e-3, "ulam-quadrature"));
  sum.rows.push_back(info("chi_truncation_error", chi.est_error, 0.0,
                          "geometric-tail-bound"));

  // reconstruction v = m + chi - chi o tau at off-grid points
  Rng rng = make_rng(seed_for(cfg.master_seed, "recon"));
  double recon = 0.0;
  const int e = w.v.dim();
  for (long j = 0; j <= m.j_max; ++j) {
    const FiberMap& map = ens.map_at(w.path, j);
    for (int t = 0; t < 200; ++t) {
      const double x = uniform01(rng);
      const int bin = bin_of(x, n_bins);
      const int image_bin = bin_of(map.apply(x), n_bins);
      for (int c = 0; c < e; ++c) {
        const double rebuilt = m.at_point(j, x, c) - chi.at(j, bin, c) +
                               chi.at(j + 1, image_bin, c);
        recon = std::max(recon,
                         std::fabs(w.v.eval_component(j, c, map, x) - rebuilt));
      }
    }
  }
  sum.rows.push_back(gated("reconstruction_error", recon, 0.0, 2.0 / n_bins,
                           recon <= 2.0 / n_bins, "pointwise"));
}

SeriesOptions series_options(const ExperimentConfig& cfg) {
  SeriesOptions so;
  so.n_lags = cfg.numerics.n_lags;
  so.n_positions = 128;
  return so;
}

void push_sigma_rows(const EstimateMatrix& sigma, const std::string& prefix,
                     const std::string& method, RunSummary& sum) {
  for (int b = 0; b < sigma.e; ++b)
    for (int g = 0; g < sigma.e; ++g)
      sum.rows.push_back(info(prefix + "_" + std::to_string(b) +
                                  std::to_string(g),
                              sigma.at(b, g), sigma.se_at(b, g), method));
}

void run_clt(const ExperimentConfig& cfg, const Ensemble& ens,
             RunSummary& sum) {
  const int n_bins = cfg.numerics.n_bins;
  const SeriesOptions so = series_options(cfg);
  const long n_future =
      std::max<long>(cfg.numerics.n, so.n_positions + so.n_lags + 1);
  const Wired w = wire(cfg, ens, cfg.numerics.truncation_k + 2, n_future);
  const EstimateMatrix sigma =
      estimate_sigma_correlation(ens, w.path, w.dens, w.v, so);
  push_sigma_rows(sigma, "sigma", "lag-series", sum);
  const CltResult clt =
      clt_test(ens, w.path, w.dens.at(0), w.v, cfg.numerics.n,
               cfg.numerics.n_paths, sigma,
               seed_for(cfg.master_seed, "clt"), cfg.threads);
  for (const auto& entry : clt.entries) {
    if (entry.skipped) {
      sum.rows.push_back(info("ks_" + entry.label + "_skipped", 1.0, 0.0,
                              entry.note.empty() ? "monte-carlo" : entry.note));
      continue;
    }
    sum.rows.push_back(gated("ks_" + entry.label, entry.ks, 0.0,
                             entry.threshold, entry.pass, "monte-carlo"));
  }
}

void run_lil(const ExperimentConfig& cfg, const Ensemble& ens,
             RunSummary& sum) {
  const SeriesOptions so = series_options(cfg);
  const long n_future =
      std::max<long>(cfg.numerics.n, so.n_positions + so.n_lags + 1);
  const Wired w = wire(cfg, ens, cfg.numerics.truncation_k + 2, n_future);
  const EstimateMatrix sigma =
      estimate_sigma_correlation(ens, w.path, w.dens, w.v, so);
  push_sigma_rows(sigma, "sigma", "lag-series", sum);
  const LilReport lil = lil_envelope(
      ens, w.path, w.dens.at(0), w.v, sigma.at(0, 0), cfg.numerics.n,
      cfg.numerics.n_paths, seed_for(cfg.master_seed, "lil"), cfg.threads);
  sum.rows.push_back(gated("frac_above_1_5", lil.frac_above_1_5, 0.0, 0.1,
                           lil.frac_above_1_5 <= 0.1, "monte-carlo"));
  sum.rows.push_back(gated("frac_in_band", lil.frac_in_band, 0.0, 0.5,
                           lil.frac_in_band >= 0.5, "monte-carlo"));
}

void run_iterated_wip(const ExperimentConfig& cfg, const Ensemble& ens,
                      RunSummary& sum) {
  const SeriesOptions so = series_options(cfg);
  const long n_future =
      std::max<long>(cfg.numerics.n, so.n_positions + so.n_lags + 1);
  const Wired w = wire(cfg, ens, cfg.numerics.truncation_k + 2, n_future);
  const EstimateMatrix E = estimate_E(ens, w.path, w.dens, w.v, so);
  push_sigma_rows(E, "E", "lag-series", sum);

  double pairing = 0.0;
  const long pairing_paths = std::min<long>(cfg.numerics.n_paths, 200);
  for (long p = 0; p < pairing_paths; ++p) {
    const auto traj =
        sample_trajectory(ens, w.path, w.dens.at(0), cfg.numerics.n,
                          seed_for(cfg.master_seed, "pairing", p));
    const PathStats ps =
        iterated_path(traj, ens, w.path, w.v, cfg.numerics.n);
    pairing = std::max(pairing, ps.pairing_deviation());
  }
  sum.rows.push_back(gated("pairing_max_dev", pairing, 0.0, 1e-10,
                           pairing <= 1e-10, "monte-carlo"));

  const WipMeanResult wip = wip_mean_check(
      ens, w.path, w.dens.at(0), w.v, cfg.numerics.n, cfg.numerics.n_paths, E,
      seed_for(cfg.master_seed, "wip"), cfg.threads);
  const int e = wip.mean_WW.e;
  for (int b = 0; b < e; ++b)
    for (int g = 0; g < e; ++g) {
      const double z = wip.z[static_cast<std::size_t>(b) * e +
                             static_cast<std::size_t>(g)];
      sum.rows.push_back(gated(
          "wip_mean_z_" + std::to_string(b) + std::to_string(g), z,
          wip.mean_WW.se_at(b, g), 3.0, std::fabs(z) < 3.0, "monte-carlo"));
    }
}

void run_moments(const ExperimentConfig& cfg, const Ensemble& ens,
                 RunSummary& sum) {
  const long n = cfg.numerics.n;
  const std::vector<long> grid = {
      std::max<long>(10, n / 10),
      std::max<long>(10, static_cast<long>(n / std::sqrt(10.0))), n};
  const Wired w = wire(cfg, ens, cfg.numerics.truncation_k + 2, n);
  const MomentScaling ms = moment_diagnostics(
      ens, w.path, w.dens.at(0), w.v, grid, 4, cfg.numerics.n_paths,
      seed_for(cfg.master_seed, "moments"), cfg.threads);
  sum.rows.push_back(info("birkhoff_slope", ms.birkhoff_slope, 0.0,
                          "monte-carlo"));
  sum.rows.push_back(info("iterated_slope", ms.iterated_slope, 0.0,
                          "monte-carlo"));
  sum.rows.push_back(gated("birkhoff_slope_err",
                           std::fabs(ms.birkhoff_slope - 0.5), 0.0, 0.05,
                           std::fabs(ms.birkhoff_slope - 0.5) <= 0.05,
                           "monte-carlo"));
  sum.rows.push_back(gated("iterated_slope_err",
                           std::fabs(ms.iterated_slope - 1.0), 0.0, 0.1,
                           std::fabs(ms.iterated_slope - 1.0) <= 0.1,
                           "monte-carlo"));
}

void run_homogenization(const ExperimentConfig& cfg, const Ensemble& ens,
                        RunSummary& sum) {
  const int n_bins = cfg.numerics.n_bins;
  FastSlowSpec spec;
  spec.d = 1;
  spec.e = 1;
  spec.a = VectorFn::zero(1);
  spec.b = MatrixFn::zero(1, 1);
  spec.b.entries[0] = Fn1::sinusoid(2.0, 1.0);  // b(x) = sin x + 2
  spec.epsilon = cfg.numerics.epsilon;
  spec.xi = {0.0};

  const SeriesOptions so = series_options(cfg);
  const long n_future =
      std::max<long>(spec.n_steps(), so.n_positions + so.n_lags + 1);
  const Wired w = wire(cfg, ens, cfg.numerics.truncation_k + 2, n_future);
  const EstimateMatrix sigma =
      estimate_sigma_correlation(ens, w.path, w.dens, w.v, so);
  const EstimateMatrix E = estimate_E(ens, w.path, w.dens, w.v, so);
  push_sigma_rows(sigma, "sigma", "lag-series", sum);
  push_sigma_rows(E, "E", "lag-series", sum);

  const Observable obs = observable_by_name(cfg.observable);
  CompareOptions opts;
  opts.n_paths = cfg.numerics.n_paths;
  opts.seed = seed_for(cfg.master_seed, "homog");
  opts.dt = cfg.numerics.dt;
  opts.n_threads = cfg.threads;
  for (int s = 0; s < ens.n_symbols(); ++s)
    opts.decay_rates.push_back(symbol_decay_rate(ens, s, obs, n_bins));

  HomogenizedSDE sde;
  sde.d = 1;
  sde.e = 1;
  sde.a = spec.a;
  sde.b = spec.b;
  sde.Sigma = {sigma.at(0, 0)};
  sde.E = {E.at(0, 0)};

  const ComparisonReport rep =
      homogenization_compare(spec, ens, w.path, w.dens.at(0), w.v, sde, opts);
  for (const auto& row : rep.rows) {
    const std::string tag = std::to_string(row.component);
    sum.rows.push_back(
        info("mean_fs_" + tag, row.mean_fs, row.se_mean_fs, rep.mode));
    sum.rows.push_back(
        info("mean_sde_" + tag, row.mean_sde, row.se_mean_sde, rep.mode));
    const double mean_z = std::fabs(row.mean_fs - row.mean_sde) /
                          std::max(1e-300, std::hypot(row.se_mean_fs,
                                                      row.se_mean_sde));
    sum.rows.push_back(gated("mean_z_" + tag, mean_z, 0.0, 3.0, row.mean_ok,
                             rep.mode));
    sum.rows.push_back(info("var_fs_" + tag, row.var_fs, 0.0, rep.mode));
    sum.rows.push_back(info("var_sde_" + tag, row.var_sde, 0.0, rep.mode));
    sum.rows.push_back(gated("var_match_" + tag,
                             std::fabs(row.var_fs - row.var_sde), 0.0, 0.0,
                             row.var_ok, rep.mode));
    sum.rows.push_back(
        gated("ks_" + tag, row.ks, 0.0, opts.ks_threshold, row.ks_ok,
              rep.mode));
  }
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg) {
  const auto violations = validate_config(cfg);
  if (!violations.empty())
    throw std::invalid_argument("invalid config: " + violations.front());

  RunSummary sum;
  sum.scenario = cfg.scenario;
  sum.hash = config_hash(cfg);

  if (cfg.scenario == "conditions") {
    StageClock clock{&sum.stage_seconds, "conditions"};
    run_conditions(cfg, sum);
  } else {
    Ensemble ens(build_base(cfg), build_maps(cfg));
    StageClock clock{&sum.stage_seconds, cfg.scenario};
    if (cfg.scenario == "decay")
      run_decay(cfg, ens, sum);
    else if (cfg.scenario == "decomposition")
      run_decomposition(cfg, ens, sum);
    else if (cfg.scenario == "clt")
      run_clt(cfg, ens, sum);
    else if (cfg.scenario == "lil")
      run_lil(cfg, ens, sum);
    else if (cfg.scenario == "iterated_wip")
      run_iterated_wip(cfg, ens, sum);
    else if (cfg.scenario == "moments")
      run_moments(cfg, ens, sum);
    else if (cfg.scenario == "homogenization")
      run_homogenization(cfg, ens, sum);
  }

  for (const auto& row : sum.rows)
    if (row.has_tolerance && !row.pass) sum.pass = false;
  write_results(sum, cfg.output_dir);
  return sum;
}

void write_results(const RunSummary& summary, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(std::filesystem::path(dir) / "results.csv",
                      std::ios::trunc);
    csv << "name,value,stderr,tolerance,pass,method,config_hash\n";
    for (const auto& r : summary.rows) {
      csv << r.name << ',' << fmt(r.value) << ',' << fmt(r.se) << ','
          << (r.has_tolerance ? fmt(r.tolerance) : std::string()) << ','
          << (r.pass ? "true" : "false") << ',' << r.method << ','
          << summary.hash << '\n';
    }
  }
  {
    std::ofstream txt(std::filesystem::path(dir) / "summary.txt",
                      std::ios::trunc);
    txt << "scenario: " << summary.scenario << "\n";
    txt << "config_hash: " << summary.hash << "\n";
    txt << "overall: " << (summary.pass ? "PASS" : "FAIL") << "\n\n";
    for (const auto& r : summary.rows) {
      txt << (r.has_tolerance ? (r.pass ? "[pass] " : "[FAIL] ") : "[info] ")
          << r.name << " = " << fmt(r.value);
      if (r.se > 0.0) txt << " +- " << fmt(r.se);
      if (r.has_tolerance) txt << " (tolerance " << fmt(r.tolerance) << ")";
      txt << "  [" << r.method << "]\n";
    }
    txt << "\n";
    for (const auto& [stage, secs] : summary.stage_seconds)
      txt << "stage " << stage << ": " << fmt(secs) << " s\n";
  }
}

}  // namespace rds
