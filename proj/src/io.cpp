#include "qpvi/io.hpp"
#include "qpvi/sampling.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace qpvi {

// ---------------------------------------------------------------- tolerances

namespace {

template <typename F>
void for_each_tolerance(Tolerances& t, F&& f) {
  f("cond_limit", t.cond_limit);
  f("rank_rel", t.rank_rel);
  f("zero_cluster", t.zero_cluster);
  f("fuchs", t.fuchs);
  f("diff_fuchs", t.diff_fuchs);
  f("newton", t.newton);
  f("commutation", t.commutation);
  f("compat", t.compat);
  f("kernel_identity", t.kernel_identity);
  f("det", t.det);
  f("smith", t.smith);
  f("trace_cond", t.trace_cond);
  f("canonical", t.canonical);
  f("pole_margin", t.pole_margin);
}

}  // namespace

bool Tolerances::set(const std::string& name, double value) {
  bool found = false;
  for_each_tolerance(*this, [&](const char* n, double& v) {
    if (name == n) {
      v = value;
      found = true;
    }
  });
  return found;
}

std::map<std::string, double> Tolerances::as_map() const {
  std::map<std::string, double> out;
  Tolerances copy = *this;
  for_each_tolerance(copy, [&](const char* n, double& v) { out[n] = v; });
  return out;
}

// ---------------------------------------------------------------- modes

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Build: return "build";
    case Mode::Evolve: return "evolve";
    case Mode::Verify: return "verify";
    case Mode::Ode: return "ode";
    case Mode::Limit: return "limit";
    case Mode::Report: return "report";
  }
  return "?";
}

std::optional<Mode> parse_mode(const std::string& s) {
  for (Mode m : {Mode::Build, Mode::Evolve, Mode::Verify, Mode::Ode, Mode::Limit, Mode::Report})
    if (s == mode_name(m)) return m;
  return std::nullopt;
}

// ---------------------------------------------------------------- serialization

json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

cplx complex_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  throw Error(ErrorKind::ConfigError, "expected a number or [re, im]");
}

json to_json(const CMatrix& a) {
  json rows = json::array();
  for (Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < a.cols(); ++j) row.push_back(to_json(a(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

CMatrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw Error(ErrorKind::ConfigError, "expected a nested matrix array");
  const Index r = static_cast<Index>(j.size()), c = static_cast<Index>(j[0].size());
  CMatrix a(r, c);
  for (Index i = 0; i < r; ++i) {
    if (!j[static_cast<size_t>(i)].is_array() || static_cast<Index>(j[static_cast<size_t>(i)].size()) != c)
      throw Error(ErrorKind::ConfigError, "ragged matrix");
    for (Index k = 0; k < c; ++k) a(i, k) = complex_from_json(j[static_cast<size_t>(i)][static_cast<size_t>(k)]);
  }
  return a;
}

namespace {

json list_json(const std::vector<cplx>& v) {
  json a = json::array();
  for (cplx z : v) a.push_back(to_json(z));
  return a;
}

}  // namespace

json to_json(const QParameters& p) {
  json a = json::array();
  for (cplx v : p.a) a.push_back(to_json(v));
  return {{"m", p.m},
          {"q", to_json(p.q)},
          {"t", to_json(p.t)},
          {"theta1", to_json(p.theta1)},
          {"theta2", to_json(p.theta2)},
          {"kappa1", to_json(p.kappa1)},
          {"kappa2", to_json(p.kappa2)},
          {"kappa3", to_json(p.kappa3)},
          {"a", a}};
}

json to_json(const DiffParameters& d) {
  return {{"m", d.m},
          {"theta0", to_json(d.theta0)},
          {"theta1", to_json(d.theta1)},
          {"thetat", to_json(d.thetat)},
          {"thetaInf1", to_json(d.thetaInf1)},
          {"thetaInf2", to_json(d.thetaInf2)},
          {"thetaInf3", to_json(d.thetaInf3)}};
}

json to_json(const LimitDictionary& d) {
  json z = json::array(), mu = json::array();
  for (cplx v : d.zeta) z.push_back(to_json(v));
  for (cplx v : d.mu) mu.push_back(to_json(v));
  return {{"epsilon", d.epsilon}, {"sigma1", to_json(d.sigma1)}, {"sigma2", to_json(d.sigma2)}, {"zeta", z}, {"mu", mu}};
}

json to_json(const AccessoryState& s) { return {{"F", to_json(s.F)}, {"G", to_json(s.G)}, {"W", to_json(s.W)}}; }

AccessoryState state_from_json(const json& j) {
  return {matrix_from_json(j.at("F")), matrix_from_json(j.at("G")), matrix_from_json(j.at("W"))};
}

json to_json(const Trajectory& tr) {
  json recs = json::array();
  for (const auto& r : tr.records)
    recs.push_back({{"t", to_json(r.t)},
                    {"F", to_json(r.state.F)},
                    {"G", to_json(r.state.G)},
                    {"W", to_json(r.state.W)},
                    {"commutation_residual", r.commutation_residual},
                    {"compat_residual", r.compat_residual},
                    {"retraction", r.retraction},
                    {"kernel_identity", r.kernel_identity}});
  json out = {{"records", recs}, {"failed", tr.failed}, {"final_params", to_json(tr.final_params)}};
  if (tr.failed) out["failure"] = tr.failure;
  return out;
}

namespace {

QParameters qparams_from_json(const json& j) {
  QParameters p;
  p.m = j.at("m").get<int>();
  p.q = complex_from_json(j.at("q"));
  p.t = complex_from_json(j.at("t"));
  p.theta1 = complex_from_json(j.at("theta1"));
  p.theta2 = complex_from_json(j.at("theta2"));
  p.kappa1 = complex_from_json(j.at("kappa1"));
  p.kappa2 = complex_from_json(j.at("kappa2"));
  p.kappa3 = complex_from_json(j.at("kappa3"));
  for (size_t i = 0; i < 4; ++i) p.a[i] = complex_from_json(j.at("a").at(i));
  return p;
}

}  // namespace

Trajectory trajectory_from_json(const json& j) {
  Trajectory tr;
  for (const auto& r : j.at("records")) {
    TrajectoryRecord rec;
    rec.t = complex_from_json(r.at("t"));
    rec.state = state_from_json(r);
    rec.commutation_residual = r.at("commutation_residual").get<double>();
    rec.compat_residual = r.at("compat_residual").get<double>();
    rec.retraction = r.value("retraction", 0.0);
    rec.kernel_identity = r.value("kernel_identity", 0.0);
    tr.records.push_back(std::move(rec));
  }
  tr.failed = j.at("failed").get<bool>();
  tr.failure = j.value("failure", std::string());
  if (j.contains("final_params")) tr.final_params = qparams_from_json(j.at("final_params"));
  return tr;
}

// ---------------------------------------------------------------- config

namespace {

[[noreturn]] void config_fail(const std::string& path, const std::string& why) {
  throw Error(ErrorKind::ConfigError, path + ": " + why);
}

void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) config_fail(path, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : keys) ok = ok || k == a;
    if (!ok) config_fail(path + "." + k, "unknown key");
  }
}

cplx get_complex(const json& obj, const std::string& key, const std::string& path) {
  try {
    return complex_from_json(obj.at(key));
  } catch (const json::out_of_range&) {
    config_fail(path + "." + key, "missing");
  } catch (const Error&) {
    config_fail(path + "." + key, "expected a number or [re, im]");
  }
}

std::vector<cplx> get_complex_list(const json& j, const std::string& path) {
  if (!j.is_array()) config_fail(path, "expected an array");
  std::vector<cplx> v;
  for (size_t i = 0; i < j.size(); ++i) {
    try {
      v.push_back(complex_from_json(j[i]));
    } catch (const Error&) {
      config_fail(path + "[" + std::to_string(i) + "]", "expected a number or [re, im]");
    }
  }
  return v;
}

long long get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) config_fail(path, "expected an integer");
  return j.get<long long>();
}

double get_double(const json& j, const std::string& path) {
  if (!j.is_number()) config_fail(path, "expected a number");
  return j.get<double>();
}

CMatrix get_matrix(const json& j, const std::string& path, Index m) {
  CMatrix a;
  try {
    a = matrix_from_json(j);
  } catch (const Error& e) {
    config_fail(path, e.detail());
  }
  if (a.rows() != m || a.cols() != m) config_fail(path, "expected an m x m matrix");
  return a;
}

QParameters parse_qparams(const json& j, int m, const Tolerances& tol) {
  const std::string path = "$.params";
  only_keys(j, path, {"q", "t", "theta1", "theta2", "kappa1", "kappa2", "kappa3", "a"});
  QParameters p;
  p.m = m;
  p.q = get_complex(j, "q", path);
  if (!(std::abs(p.q) > 0 && std::abs(p.q) < 1)) config_fail(path + ".q", "0 < |q| < 1 violated");
  p.t = get_complex(j, "t", path);
  if (p.t == cplx(0)) config_fail(path + ".t", "t must be nonzero");
  p.theta1 = get_complex(j, "theta1", path);
  p.theta2 = get_complex(j, "theta2", path);
  p.kappa1 = get_complex(j, "kappa1", path);
  p.kappa2 = j.contains("kappa2") ? get_complex(j, "kappa2", path) : cplx(1);
  p.kappa3 = get_complex(j, "kappa3", path);
  if (!j.contains("a")) config_fail(path + ".a", "missing");
  auto a = get_complex_list(j.at("a"), path + ".a");
  if (a.size() != 4) config_fail(path + ".a", "expected 4 entries");
  for (size_t i = 0; i < 4; ++i) p.a[i] = a[i];
  for (cplx v : {p.theta1, p.theta2, p.kappa1, p.kappa2, p.kappa3, a[0], a[1], a[2], a[3]})
    if (v == cplx(0)) config_fail(path, "theta, kappa and a must be nonzero");
  if (!(qfuchs_residual(p) <= tol.fuchs)) config_fail(path, "q-Fuchs relation violated");
  return p;
}

LimitDictionary parse_limit(const json& j, int m) {
  const std::string path = "$.limit";
  only_keys(j, path, {"epsilon", "sigma1", "sigma2", "zeta", "mu"});
  LimitDictionary d;
  if (j.contains("epsilon")) d.epsilon = get_double(j.at("epsilon"), path + ".epsilon");
  if (!(d.epsilon > 0)) config_fail(path + ".epsilon", "must be positive (q = e^-eps, 0 < |q| < 1)");
  if (j.contains("sigma1")) d.sigma1 = get_complex(j, "sigma1", path);
  if (j.contains("sigma2")) d.sigma2 = get_complex(j, "sigma2", path);
  if (j.contains("zeta")) {
    auto z = get_complex_list(j.at("zeta"), path + ".zeta");
    if (z.size() != 4) config_fail(path + ".zeta", "expected 4 entries");
    std::copy(z.begin(), z.end(), d.zeta.begin());
  }
  bool explicit_mu3 = false;
  if (j.contains("mu")) {
    auto mu = get_complex_list(j.at("mu"), path + ".mu");
    if (mu.size() != 2 && mu.size() != 3) config_fail(path + ".mu", "expected 2 or 3 entries");
    std::copy(mu.begin(), mu.end(), d.mu.begin());
    explicit_mu3 = mu.size() == 3;
  }
  if (!explicit_mu3) return close_limit_relation(d, m);
  d = with_zeta_sum(d);
  const double scale = std::max({1.0, std::abs(d.mu[0]), std::abs(d.mu[1]), std::abs(d.mu[2])});
  if (std::abs(limit_relation_residual(d, m)) > 1e-12 * scale) config_fail(path + ".mu", "limit relation violated");
  return d;
}

DiffParameters parse_diff(const json& j, int m, const Tolerances& tol) {
  const std::string path = "$.diff";
  only_keys(j, path, {"theta0", "theta1", "thetat", "thetaInf1", "thetaInf2", "thetaInf3"});
  auto opt = [&](const char* k) { return j.contains(k) ? get_complex(j, k, path) : cplx(0); };
  DiffParameters d = make_diff_parameters(m, opt("theta0"), opt("theta1"), opt("thetat"), opt("thetaInf1"), opt("thetaInf2"));
  if (j.contains("thetaInf3")) {
    d.thetaInf3 = get_complex(j, "thetaInf3", path);
    if (!(fuchs_residual(d) <= tol.diff_fuchs)) config_fail(path + ".thetaInf3", "Fuchs relation violated");
  }
  return d;
}

}  // namespace

RunConfig parse_config(const std::string& text, std::optional<Mode> forced_mode) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    config_fail("$", std::string("malformed JSON: ") + e.what());
  }
  only_keys(j, "$",
            {"mode", "m", "seed", "params", "limit", "diff", "f", "g", "nsteps", "retract", "tolerances", "ode",
             "limit_sweep", "input", "out", "format"});
  RunConfig c;
  if (j.contains("mode")) {
    if (!j["mode"].is_string()) config_fail("$.mode", "expected a string");
    auto m = parse_mode(j["mode"].get<std::string>());
    if (!m) config_fail("$.mode", "unknown mode '" + j["mode"].get<std::string>() + "'");
    c.mode = *m;
  }
  if (forced_mode) c.mode = *forced_mode;

  if (j.contains("m")) {
    long long m = get_int(j["m"], "$.m");
    if (m < 1 || m > 64) config_fail("$.m", "must satisfy 1 <= m <= 64");
    c.m = static_cast<int>(m);
  } else if (c.mode != Mode::Report) {
    config_fail("$.m", "missing");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) config_fail("$.seed", "expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("tolerances")) {
    const json& t = j["tolerances"];
    if (!t.is_object()) config_fail("$.tolerances", "expected an object");
    for (const auto& [k, v] : t.items()) {
      const std::string path = "$.tolerances." + k;
      double x = get_double(v, path);
      if (!(x > 0)) config_fail(path, "must be positive");
      if (!c.tol.set(k, x)) config_fail(path, "unknown tolerance");
    }
  }

  const int blocks = j.contains("params") + j.contains("limit") + j.contains("diff");
  if (blocks > 1) config_fail("$", "exactly one of params, limit, diff may be given");
  if (j.contains("params")) c.qparams = parse_qparams(j["params"], c.m, c.tol);
  if (j.contains("limit")) c.limit = parse_limit(j["limit"], c.m);
  if (j.contains("diff")) c.diff = parse_diff(j["diff"], c.m, c.tol);
  if (c.diff && (c.mode == Mode::Build || c.mode == Mode::Evolve || c.mode == Mode::Verify || c.mode == Mode::Limit))
    config_fail("$.diff", std::string("not usable in mode ") + mode_name(c.mode));

  for (const char* key : {"f", "g"}) {
    if (!j.contains(key)) continue;
    const std::string path = std::string("$.") + key;
    auto v = get_complex_list(j[key], path);
    if (static_cast<int>(v.size()) != c.m) config_fail(path, "expected m = " + std::to_string(c.m) + " entries");
    (key[0] == 'f' ? c.f : c.g) = v;
  }
  if (c.f.empty() != c.g.empty()) config_fail(c.f.empty() ? "$.f" : "$.g", "f and g must be given together");
  if (!c.f.empty() && c.f[0] == cplx(0) && c.m > 1) config_fail("$.f[0]", "f1 must be nonzero");

  if (j.contains("nsteps")) {
    long long n = get_int(j["nsteps"], "$.nsteps");
    if (n < 0) config_fail("$.nsteps", "must be >= 0");
    c.nsteps = static_cast<int>(n);
  }
  if (j.contains("retract")) {
    if (!j["retract"].is_boolean()) config_fail("$.retract", "expected a boolean");
    c.retract = j["retract"].get<bool>();
  }
  if (j.contains("ode")) {
    const json& o = j["ode"];
    only_keys(o, "$.ode", {"t0", "t_end", "steps", "point"});
    if (o.contains("t0")) c.t0 = get_complex(o, "t0", "$.ode");
    if (o.contains("t_end")) c.t_end = get_complex(o, "t_end", "$.ode");
    for (cplx t : {c.t0, c.t_end})
      if (std::abs(t) < 1e-3 || std::abs(t - 1.0) < 1e-3) config_fail("$.ode", "t0 and t_end must avoid 0 and 1");
    if (o.contains("steps")) {
      long long n = get_int(o["steps"], "$.ode.steps");
      if (n < 0) config_fail("$.ode.steps", "must be >= 0");
      c.ode_steps = static_cast<int>(n);
    }
    if (o.contains("point")) {
      const json& p = o["point"];
      only_keys(p, "$.ode.point", {"Q", "P", "U"});
      for (const char* k : {"Q", "P"})
        if (!p.contains(k)) config_fail(std::string("$.ode.point.") + k, "missing");
      PhasePoint pt;
      pt.Q = get_matrix(p["Q"], "$.ode.point.Q", c.m);
      pt.P = get_matrix(p["P"], "$.ode.point.P", c.m);
      pt.U = p.contains("U") ? get_matrix(p["U"], "$.ode.point.U", c.m) : CMatrix::Identity(c.m, c.m);
      pt.t = c.t0;
      c.point = pt;
    }
  }
  if (j.contains("limit_sweep")) {
    const json& s = j["limit_sweep"];
    only_keys(s, "$.limit_sweep", {"eps", "window"});
    if (s.contains("eps")) {
      if (!s["eps"].is_array() || s["eps"].size() < 2) config_fail("$.limit_sweep.eps", "expected >= 2 values");
      c.eps_list.clear();
      for (size_t i = 0; i < s["eps"].size(); ++i) {
        double e = get_double(s["eps"][i], "$.limit_sweep.eps[" + std::to_string(i) + "]");
        if (!(e > 0)) config_fail("$.limit_sweep.eps[" + std::to_string(i) + "]", "must be positive");
        c.eps_list.push_back(e);
      }
    }
    if (s.contains("window")) {
      c.window = get_double(s["window"], "$.limit_sweep.window");
      if (!(c.window > 0)) config_fail("$.limit_sweep.window", "must be positive");
    }
  }
  if (j.contains("input")) {
    if (!j["input"].is_string()) config_fail("$.input", "expected a string");
    c.input = j["input"].get<std::string>();
  }
  if (j.contains("out")) {
    if (!j["out"].is_string()) config_fail("$.out", "expected a string");
    c.out = j["out"].get<std::string>();
  }
  if (j.contains("format")) {
    const std::string f = j["format"].is_string() ? j["format"].get<std::string>() : "";
    if (f == "json") c.format = Format::Json;
    else if (f == "csv") c.format = Format::Csv;
    else config_fail("$.format", "expected \"json\" or \"csv\"");
  }
  return c;
}

void apply_tolerance_override(RunConfig& cfg, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, "--tol " + spec + ": expected name=value");
  const std::string name = spec.substr(0, eq), val = spec.substr(eq + 1);
  double x = 0;
  size_t used = 0;
  try {
    x = std::stod(val, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != val.size() || !(x > 0))
    throw Error(ErrorKind::ConfigError, "$.tolerances." + name + ": expected a positive number");
  if (!cfg.tol.set(name, x)) throw Error(ErrorKind::ConfigError, "$.tolerances." + name + ": unknown tolerance");
}

// ---------------------------------------------------------------- execution

namespace {

json check(const std::string& name, double value, double tol) {
  return {{"name", name}, {"value", value}, {"tol", tol}, {"pass", std::isfinite(value) && value < tol}};
}

json partition_json(const std::vector<int>& v) { return json(v); }

bool is_expected_type(const SpectralType& st, int m) {
  std::vector<int> s0{m, m}, sinf{m};
  if (m > 1) sinf.push_back(m - 1);
  sinf.push_back(1);
  std::sort(sinf.rbegin(), sinf.rend());
  if (st.s0 != s0 || st.s_inf != sinf || st.s_div.size() != 4) return false;
  for (const auto& d : st.s_div)
    if (d != std::vector<int>{m}) return false;
  return true;
}

json spectral_json(const SpectralType& st) {
  json divs = json::array();
  for (const auto& d : st.s_div) divs.push_back(partition_json(d));
  return {{"s0", partition_json(st.s0)}, {"s_inf", partition_json(st.s_inf)}, {"zeros", list_json(st.zeros)}, {"s_div", divs}};
}

json poly_json(const MatrixPolynomial<cplx>& A) {
  json c = json::array();
  for (const auto& k : A.coeffs) c.push_back(to_json(k));
  return c;
}

struct Setup {
  QParameters p;
  AccessoryState s;
  std::vector<cplx> f, g;
};

QParameters resolve_qparams(const RunConfig& cfg, Rng& rng) {
  if (cfg.qparams) return *cfg.qparams;
  if (cfg.limit) return to_qparams(*cfg.limit, cfg.t0, cfg.m, cfg.tol);
  return random_qparams(rng, cfg.m);
}

Setup resolve_state(const RunConfig& cfg, Rng& rng) {
  Setup su;
  su.p = resolve_qparams(cfg, rng);
  if (!cfg.f.empty()) {
    su.f = cfg.f;
    su.g = cfg.g;
    su.s = build_accessory(su.p, su.f, su.g, cfg.tol);
  } else {
    AdmissibleDraw d = random_state(rng, su.p, {}, cfg.tol);
    su.f = d.f;
    su.g = d.g;
    su.s = d.s;
  }
  return su;
}

// Sample points for the Smith witness: a circle through the root scale, off the zeros.
std::vector<cplx> smith_samples(const QParameters& p, const MatrixPolynomial<cplx>& A) {
  const double r = sampling_radius(A);
  std::vector<cplx> xs;
  for (int k = 0; k < 8; ++k) xs.push_back(std::polar(r, 2.0 * std::numbers::pi * (k + 0.37) / 8.0));
  (void)p;
  return xs;
}

json run_build(const RunConfig& cfg, Rng& rng, json doc) {
  Setup su = resolve_state(cfg, rng);
  const auto nf = normal_form(su.p, su.f, su.g, cfg.tol);
  const auto A = assemble_A(su.p, su.s, cfg.tol);
  const auto st = spectral_type(A, cfg.tol);
  double tc = 0;
  for (cplx r : trace_conditions(su.p, su.s.F)) tc = std::max(tc, std::abs(r));
  json sv = json::array();
  for (Index i = 0; i < nf.singular_values.size(); ++i) sv.push_back(nf.singular_values(i));
  doc["params"] = to_json(su.p);
  doc["f"] = list_json(su.f);
  doc["g"] = list_json(su.g);
  doc["state"] = to_json(su.s);
  doc["A"] = poly_json(A);
  doc["omega_singular_values"] = sv;
  doc["spectral_type"] = spectral_json(st);
  json checks = json::array();
  checks.push_back(check("qfuchs", qfuchs_residual(su.p), cfg.tol.fuchs));
  checks.push_back(check("trace_conditions", tc, cfg.tol.trace_cond));
  checks.push_back(check("commutation", commutation_residual(su.p, su.s.F, su.s.G), cfg.tol.commutation));
  checks.push_back(check("determinant", verify_det(su.p, A), cfg.tol.det));
  checks.push_back(check("spectral_type", is_expected_type(st, su.p.m) ? 0.0 : 1.0, 0.5));
  doc["checks"] = checks;
  bool ok = true;
  for (const auto& c : checks) ok = ok && c["pass"].get<bool>();
  doc["ok"] = ok;
  return doc;
}

json run_evolve(const RunConfig& cfg, Rng& rng, json doc) {
  Setup su = resolve_state(cfg, rng);
  EvolveOptions opt;
  opt.retract = cfg.retract;
  Trajectory tr = evolve(su.p, su.s, cfg.nsteps, opt, cfg.tol);
  doc["params"] = to_json(su.p);
  doc["f"] = list_json(su.f);
  doc["g"] = list_json(su.g);
  doc["nsteps"] = cfg.nsteps;
  doc["retract"] = cfg.retract;
  doc["trajectory"] = to_json(tr);
  return doc;
}

json run_verify(const RunConfig& cfg, Rng& rng, json doc) {
  Setup su = resolve_state(cfg, rng);
  const QParameters& p = su.p;
  const auto& tol = cfg.tol;
  json checks = json::array();
  auto guarded = [&](const std::string& name, double limit, const std::function<double()>& f) {
    try {
      checks.push_back(check(name, f(), limit));
    } catch (const Error& e) {
      json c = check(name, std::numeric_limits<double>::infinity(), limit);
      c["value"] = nullptr;
      c["error"] = e.what();
      checks.push_back(c);
    }
  };
  guarded("qfuchs", tol.fuchs, [&] { return qfuchs_residual(p); });
  guarded("trace_conditions", tol.trace_cond, [&] {
    double r = 0;
    for (cplx c : trace_conditions(p, su.s.F)) r = std::max(r, std::abs(c));
    return r;
  });
  guarded("kernel_dimension", 0.5, [&] {
    kernel_basis(omega_matrix(p, su.s.F), p.m, nullptr, tol, omega_scale(p, su.s.F));
    return 0.0;
  });
  guarded("commutation", tol.commutation, [&] { return commutation_residual(p, su.s.F, su.s.G); });
  guarded("determinant", tol.det, [&] { return verify_det(p, assemble_A(p, su.s, tol)); });
  guarded("smith_witness", tol.smith, [&] {
    Tolerances loose = tol;
    loose.smith = std::numeric_limits<double>::infinity();
    const auto w = smith_witness(p, su.s, smith_samples(p, assemble_A(p, su.s, tol)), loose);
    return std::max({w.witness_residual, w.atilde_residual, w.q_residual[0], w.q_residual[1], w.q_residual[2]});
  });
  guarded("spectral_type", 0.5, [&] { return is_expected_type(spectral_type(assemble_A(p, su.s, tol), tol), p.m) ? 0.0 : 1.0; });
  FlowStep st;
  bool stepped = false;
  guarded("step_commutation", tol.commutation, [&] {
    st = flow_step(p, su.s, tol);
    stepped = true;
    return st.commutation_residual;
  });
  if (stepped) {
    guarded("compatibility", tol.compat, [&] { return verify_compat(p, su.s, st, compat_samples(p), tol); });
    guarded("kernel_identities", tol.kernel_identity,
            [&] { return kernel_identities(p, su.s, st.after, build_B(p, su.s, st.after, tol)).max(); });
    guarded("inverse_step", tol.kernel_identity, [&] {
      FlowStep back = flow_step_inverse(st.after_p, st.after, tol);
      return std::max({rel_diff(back.after.F, su.s.F), rel_diff(back.after.G, su.s.G), rel_diff(back.after.W, su.s.W)});
    });
  }
  bool ok = true;
  for (const auto& c : checks) ok = ok && c["pass"].get<bool>();
  doc["params"] = to_json(p);
  doc["f"] = list_json(su.f);
  doc["g"] = list_json(su.g);
  doc["state"] = to_json(su.s);
  doc["checks"] = checks;
  doc["ok"] = ok;
  return doc;
}

json point_json(const PhasePoint& pt) {
  return {{"t", to_json(pt.t)}, {"Q", to_json(pt.Q)}, {"P", to_json(pt.P)}, {"U", to_json(pt.U)}};
}

json run_ode(const RunConfig& cfg, Rng& rng, json doc) {
  DiffParameters d;
  if (cfg.diff) d = *cfg.diff;
  else if (cfg.limit) d = param_dictionary(*cfg.limit, cfg.m, cfg.tol);
  else d = random_diff_parameters(rng, cfg.m);
  PhasePoint pt = cfg.point ? *cfg.point : random_phase_point(rng, d, cfg.t0);
  const auto res = integrate(d, pt, cfg.t_end, cfg.ode_steps, cfg.tol);
  json pts = json::array();
  for (size_t k = 0; k < res.points.size(); ++k) {
    json p = point_json(res.points[k]);
    p["canonical_drift"] = res.canonical_drift[k];
    p["hamiltonian"] = to_json(ham_invariant(d, res.points[k]));
    pts.push_back(p);
  }
  doc["diff_params"] = to_json(d);
  doc["canonical_residual"] = canonical_residual(d, pt);
  doc["steps"] = cfg.ode_steps;
  doc["points"] = pts;
  return doc;
}

json run_limit(const RunConfig& cfg, Rng& rng, json doc) {
  LimitDictionary d = cfg.limit ? *cfg.limit : random_limit_dictionary(rng, cfg.m, cfg.eps_list.front());
  const DiffParameters dp = param_dictionary(d, cfg.m, cfg.tol);
  PhasePoint pt = cfg.point ? *cfg.point : random_phase_point(rng, dp, cfg.t0);
  pt.t = cfg.t0;
  const std::vector<cplx> xs{cplx(0.3, 0.7), cplx(-0.8, 0.2), cplx(1.7, -0.5), cplx(2.5, 1.0)};
  json rows = json::array();
  std::vector<double> eps, terr, rerr;
  for (double e : cfg.eps_list) {
    d.epsilon = e;
    const int n = static_cast<int>(std::lround(cfg.window / e));
    const auto lt = limit_trajectory_error(d, pt, n, cfg.ode_steps, cfg.tol);
    const double re = residue_limit_error(d, pt, xs, cfg.tol);
    rows.push_back({{"eps", e}, {"qsteps", n}, {"t_end", to_json(lt.t_end)}, {"trajectory_error", lt.err}, {"residue_error", re}});
    eps.push_back(e);
    terr.push_back(lt.err);
    rerr.push_back(re);
  }
  d.epsilon = cfg.eps_list.front();
  doc["dictionary"] = to_json(d);
  doc["diff_params"] = to_json(dp);
  doc["initial_point"] = point_json(pt);
  doc["window"] = cfg.window;
  doc["ode_steps"] = cfg.ode_steps;
  doc["sweep"] = rows;
  doc["trajectory_slope"] = fit_slope(eps, terr);
  doc["residue_slope"] = fit_slope(eps, rerr);
  return doc;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, "$.input: cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, "$.input: malformed JSON in '" + path + "'");
  }
}

}  // namespace

json execute(const RunConfig& cfg) {
  if (cfg.mode == Mode::Report) {
    if (cfg.input.empty()) throw Error(ErrorKind::ConfigError, "$.input: report needs the path of a prior run");
    return read_json_file(cfg.input);
  }
  Rng rng(cfg.seed);
  json doc = {{"mode", mode_name(cfg.mode)}, {"seed", cfg.seed}, {"m", cfg.m}};
  json tol;
  for (const auto& [k, v] : cfg.tol.as_map()) tol[k] = v;
  doc["tolerances"] = tol;
  switch (cfg.mode) {
    case Mode::Build: return run_build(cfg, rng, doc);
    case Mode::Evolve: return run_evolve(cfg, rng, doc);
    case Mode::Verify: return run_verify(cfg, rng, doc);
    case Mode::Ode: return run_ode(cfg, rng, doc);
    case Mode::Limit: return run_limit(cfg, rng, doc);
    case Mode::Report: break;
  }
  return doc;
}

// ---------------------------------------------------------------- views

namespace {

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

// column-by-column: name_i_j for j outer, i inner
void matrix_header(std::vector<std::string>& h, const std::string& name, const json& M) {
  const size_t r = M.size(), c = r ? M[0].size() : 0;
  for (size_t j = 0; j < c; ++j)
    for (size_t i = 0; i < r; ++i)
      for (const char* part : {"re", "im"})
        h.push_back(name + "_" + std::to_string(i + 1) + "_" + std::to_string(j + 1) + "_" + part);
}

void matrix_cells(std::vector<std::string>& row, const json& M) {
  const size_t r = M.size(), c = r ? M[0].size() : 0;
  for (size_t j = 0; j < c; ++j)
    for (size_t i = 0; i < r; ++i) {
      row.push_back(num(M[i][j][0].get<double>()));
      row.push_back(num(M[i][j][1].get<double>()));
    }
}

void emit(std::ostringstream& os, const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
  os << "\n";
}

std::string val(const json& v) {
  if (v.is_null()) return "";
  if (v.is_number()) return num(v.get<double>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string cplx_text(const json& z) {
  std::ostringstream os;
  os << std::setprecision(6) << z[0].get<double>() << (z[1].get<double>() < 0 ? " - " : " + ")
     << std::abs(z[1].get<double>()) << "i";
  return os.str();
}

}  // namespace

std::string to_csv(const json& doc) {
  std::ostringstream os;
  if (doc.contains("error")) {
    emit(os, {"kind", "detail"});
    emit(os, {doc["error"]["kind"].get<std::string>(), "\"" + doc["error"]["detail"].get<std::string>() + "\""});
    return os.str();
  }
  const std::string mode = doc.value("mode", "");
  if (mode == "evolve") {
    const auto& recs = doc["trajectory"]["records"];
    std::vector<std::string> h{"step", "t_re", "t_im"};
    for (const char* k : {"F", "G", "W"}) matrix_header(h, k, recs[0][k]);
    for (const char* k : {"commutation_residual", "compat_residual", "retraction", "failed"}) h.push_back(k);
    emit(os, h);
    const bool failed = doc["trajectory"]["failed"].get<bool>();
    for (size_t n = 0; n < recs.size(); ++n) {
      const auto& r = recs[n];
      std::vector<std::string> row{std::to_string(n), num(r["t"][0].get<double>()), num(r["t"][1].get<double>())};
      for (const char* k : {"F", "G", "W"}) matrix_cells(row, r[k]);
      for (const char* k : {"commutation_residual", "compat_residual", "retraction"}) row.push_back(val(r[k]));
      row.push_back(failed && n + 1 == recs.size() ? "true" : "false");
      emit(os, row);
    }
  } else if (mode == "ode") {
    const auto& pts = doc["points"];
    std::vector<std::string> h{"step", "t_re", "t_im"};
    for (const char* k : {"Q", "P", "U"}) matrix_header(h, k, pts[0][k]);
    h.push_back("canonical_drift");
    emit(os, h);
    for (size_t n = 0; n < pts.size(); ++n) {
      const auto& p = pts[n];
      std::vector<std::string> row{std::to_string(n), num(p["t"][0].get<double>()), num(p["t"][1].get<double>())};
      for (const char* k : {"Q", "P", "U"}) matrix_cells(row, p[k]);
      row.push_back(val(p["canonical_drift"]));
      emit(os, row);
    }
  } else if (mode == "limit") {
    emit(os, {"eps", "qsteps", "trajectory_error", "residue_error", "trajectory_slope", "residue_slope"});
    for (const auto& r : doc["sweep"])
      emit(os, {val(r["eps"]), val(r["qsteps"]), val(r["trajectory_error"]), val(r["residue_error"]),
                val(doc["trajectory_slope"]), val(doc["residue_slope"])});
  } else if (mode == "build") {
    const auto& A = doc["A"];
    std::vector<std::string> h{"k"};
    matrix_header(h, "A", A[0]);
    emit(os, h);
    for (size_t k = 0; k < A.size(); ++k) {
      std::vector<std::string> row{std::to_string(k)};
      matrix_cells(row, A[k]);
      emit(os, row);
    }
  } else if (mode == "verify") {
    emit(os, {"name", "value", "tol", "pass"});
    for (const auto& c : doc["checks"]) emit(os, {val(c["name"]), val(c["value"]), val(c["tol"]), val(c["pass"])});
  } else {
    throw Error(ErrorKind::ConfigError, "$.format: no CSV view for this document");
  }
  return os.str();
}

// report text only; the json/csv outputs keep full precision
std::string brief(const json& v) {
  if (!v.is_number()) return val(v);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v.get<double>());
  return buf;
}

std::string render_report(const json& doc) {
  std::ostringstream os;
  os << std::setprecision(4);
  if (doc.contains("error")) {
    os << "run failed: " << doc["error"]["kind"].get<std::string>() << ": " << doc["error"]["detail"].get<std::string>()
       << "\n";
    return os.str();
  }
  const std::string mode = doc.value("mode", "?");
  os << "mode " << mode << ", m = " << doc.value("m", 0) << ", seed " << doc.value("seed", std::uint64_t{0}) << "\n";
  if (doc.contains("params")) {
    const auto& p = doc["params"];
    os << "q = " << cplx_text(p["q"]) << ", t = " << cplx_text(p["t"]) << "\n";
  }
  if (doc.contains("checks")) {
    os << "\n";
    for (const auto& c : doc["checks"]) {
      os << (c["pass"].get<bool>() ? "  pass  " : "  FAIL  ") << std::left << std::setw(20) << c["name"].get<std::string>()
         << " " << (c["value"].is_null() ? std::string("error") : brief(c["value"])) << " (tol " << brief(c["tol"]) << ")";
      if (c.contains("error")) os << "  " << c["error"].get<std::string>();
      os << "\n";
    }
    os << "\n" << (doc["ok"].get<bool>() ? "all checks passed" : "some checks failed") << "\n";
  }
  if (doc.contains("spectral_type")) {
    const auto& st = doc["spectral_type"];
    os << "spectral type: s0 " << st["s0"].dump() << ", s_inf " << st["s_inf"].dump() << ", zeros " << st["s_div"].dump()
       << "\n";
  }
  if (mode == "evolve") {
    const auto& tr = doc["trajectory"];
    const auto& recs = tr["records"];
    double comm = 0, compat = 0, retr = 0;
    for (size_t k = 1; k < recs.size(); ++k) {
      comm = std::max(comm, recs[k]["commutation_residual"].get<double>());
      compat = std::max(compat, recs[k]["compat_residual"].get<double>());
      retr = std::max(retr, recs[k]["retraction"].get<double>());
    }
    os << recs.size() - 1 << " steps recorded, final t = " << cplx_text(recs.back()["t"]) << "\n";
    os << "max commutation residual " << comm << ", max compatibility residual " << compat << ", max retraction "
       << retr << "\n";
    if (tr["failed"].get<bool>()) os << "stopped early: " << tr["failure"].get<std::string>() << "\n";
  }
  if (mode == "ode") {
    const auto& pts = doc["points"];
    double drift = 0;
    for (const auto& p : pts) drift = std::max(drift, p["canonical_drift"].get<double>());
    os << pts.size() - 1 << " RK4 steps from t = " << cplx_text(pts.front()["t"]) << " to " << cplx_text(pts.back()["t"])
       << "\nmax canonical drift " << drift << "\n";
  }
  if (mode == "limit") {
    os << "\n  eps        qsteps  traj err    residue err\n";
    for (const auto& r : doc["sweep"])
      os << "  " << std::left << std::setw(10) << r["eps"].get<double>() << " " << std::setw(7) << r["qsteps"].get<int>()
         << " " << std::setw(11) << r["trajectory_error"].get<double>() << " " << r["residue_error"].get<double>() << "\n";
    os << "fitted slopes: trajectory " << doc["trajectory_slope"].get<double>() << ", residue "
       << doc["residue_slope"].get<double>() << "\n";
  }
  return os.str();
}

int run(const RunConfig& cfg) {
  json doc;
  int status = 0;
  try {
    doc = execute(cfg);
    if (doc.contains("ok") && !doc["ok"].get<bool>()) status = 2;
    if (doc.contains("trajectory") && doc["trajectory"]["failed"].get<bool>()) status = 1;
  } catch (const Error& e) {
    doc = {{"error", {{"kind", kind_name(e.kind())}, {"detail", e.detail()}}}};
    if (cfg.mode != Mode::Report) doc["mode"] = mode_name(cfg.mode);
    status = 1;
  }
  std::string text;
  if (cfg.mode == Mode::Report) text = render_report(doc);
  else if (cfg.format == Format::Csv) text = to_csv(doc);
  else text = doc.dump(1) + "\n";
  if (cfg.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(cfg.out, std::ios::binary);
    if (!out) {
      std::cerr << "cannot write " << cfg.out << "\n";
      return 1;
    }
    out << text;
  }
  return status;
}

}  // namespace qpvi
