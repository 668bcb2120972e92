// Batch front end: one command per process, JSON config in, CSV/JSON artifacts out.

#include "dtc/dtc.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#ifndef DTC_VERSION
#define DTC_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dtc;

namespace {

const std::vector<std::string> kCommands = {"spectrum",  "zz-scan",       "idle-point", "param-search", "pulse-gen",
                                            "predistort", "optimize-cz",  "gate-report", "rb-sim",      "lrb-fit",
                                            "cz-metrics", "gate-length-study", "qpt",     "error-budget", "toy-model"};

/// Config block that remembers which keys were read so leftovers can be reported as typos.
class Section {
 public:
  Section(json j, std::string name) : j_(std::move(j)), name_(std::move(name)) {
    if (!j_.is_null() && !j_.is_object()) throw ConfigError("'" + name_ + "' must be an object");
  }
  bool has(const std::string& k) {
    used_.insert(k);
    return j_.is_object() && j_.contains(k);
  }
  template <class T>
  T get(const std::string& k, T def) {
    if (!has(k)) return def;
    try {
      return j_.at(k).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + k + ": " + e.what());
    }
  }
  json raw(const std::string& k) {
    used_.insert(k);
    return j_.is_object() && j_.contains(k) ? j_.at(k) : json();
  }
  Section sub(const std::string& k) { return Section(raw(k), name_ + "." + k); }
  void finish() const {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("unknown config key '" + name_ + "." + it.key() + "'");
  }

 private:
  json j_;
  std::string name_;
  std::set<std::string> used_;
};

struct Run {
  std::string command;
  fs::path config_path, config_dir, out;
  std::uint64_t seed = 1;
  int threads = 1;
  json config = json::object();
  json resolved = json::object();  // effective inputs, recorded in the manifest
  std::vector<std::string> outputs;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_file(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class Csv {
 public:
  Csv(Run& run, const std::string& name, const std::string& header) : path_(run.out / name) {
    out_.open(path_);
    if (!out_) throw ConfigError("cannot write " + path_.string());
    out_ << header << "\n";
    run.outputs.push_back(name);
  }
  template <class... T>
  void row(const T&... v) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(v), first = false), ...);
    out_ << "\n";
  }

 private:
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
  fs::path path_;
  std::ofstream out_;
};

void write_json(Run& run, const std::string& name, const json& j) {
  std::ofstream o(run.out / name);
  if (!o) throw ConfigError("cannot write " + (run.out / name).string());
  o << j.dump(2) << "\n";
  run.outputs.push_back(name);
}

std::string fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- shared config readers ----

CircuitParams read_device(Run& run) {
  json d = run.config.contains("device") ? run.config["device"] : json();
  CircuitParams p = CircuitParams::reference_device();
  if (d.is_string()) {
    fs::path f = d.get<std::string>();
    if (f.is_relative()) f = run.config_dir / f;
    if (!fs::exists(f)) throw ConfigError("device file not found: " + f.string());
    d = parse_json_file(f);
  }
  if (!d.is_null()) {
    Section s(d, "device");
    auto cap = s.raw("cap_matrix");
    if (!cap.is_null()) {
      std::vector<double> v;
      if (cap.is_array() && !cap.empty() && cap[0].is_array()) {
        for (auto& r : cap)
          for (auto& x : r) v.push_back(x.get<double>());
      } else {
        v = cap.get<std::vector<double>>();
      }
      if (v.size() != 16) throw ConfigError("device.cap_matrix needs 16 values (4x4 row-major, fF)");
      for (int i = 0; i < 16; ++i) p.cap(i / 4, i % 4) = v[i];
    }
    auto ic = s.get<std::vector<double>>("critical_currents", {});
    if (!ic.empty()) {
      if (ic.size() != 5) throw ConfigError("device.critical_currents needs 5 values (nA)");
      for (int i = 0; i < 5; ++i) p.ic(i) = ic[i];
    }
    s.finish();
  }
  p.validate();
  std::vector<double> cv(16);
  for (int i = 0; i < 16; ++i) cv[i] = p.cap(i / 4, i % 4);
  run.resolved["device"] = {{"cap_matrix", cv}, {"critical_currents", std::vector<double>(p.ic.data(), p.ic.data() + 5)}};
  return p;
}

BasisConfig read_basis(Run& run) {
  BasisConfig b;
  Section s(run.config.contains("basis") ? run.config["basis"] : json(), "basis");
  b.charge_cutoff_qubit = s.get("charge_cutoff_qubit", b.charge_cutoff_qubit);
  b.charge_cutoff_coupler = s.get("charge_cutoff_coupler", b.charge_cutoff_coupler);
  b.kept_levels_qubit = s.get("kept_levels_qubit", b.kept_levels_qubit);
  b.kept_levels_coupler = s.get("kept_levels_coupler", b.kept_levels_coupler);
  b.kept_total = s.get("kept_total", b.kept_total);
  b.coupler_reference_fluxes = s.get("coupler_reference_fluxes", b.coupler_reference_fluxes);
  b.idle_reference = s.get("idle_reference", b.idle_reference);
  b.dynamics_reference_fluxes = s.get("dynamics_reference_fluxes", b.dynamics_reference_fluxes);
  b.qubit_coupler_coupling = s.get("qubit_coupler_coupling", b.qubit_coupler_coupling);
  b.qubit_qubit_coupling = s.get("qubit_qubit_coupling", b.qubit_qubit_coupling);
  s.finish();
  b.validate();
  run.resolved["basis"] = {{"charge_cutoff_qubit", b.charge_cutoff_qubit},
                           {"charge_cutoff_coupler", b.charge_cutoff_coupler},
                           {"kept_levels_qubit", b.kept_levels_qubit},
                           {"kept_levels_coupler", b.kept_levels_coupler},
                           {"kept_total", b.kept_total},
                           {"coupler_reference_fluxes", b.coupler_reference_fluxes},
                           {"idle_reference", b.idle_reference},
                           {"dynamics_reference_fluxes", b.dynamics_reference_fluxes},
                           {"qubit_coupler_coupling", b.qubit_coupler_coupling},
                           {"qubit_qubit_coupling", b.qubit_qubit_coupling}};
  return b;
}

Section command_section(Run& run) {
  return Section(run.config.contains(run.command) ? run.config[run.command] : json(), run.command);
}

void record(Run& run, const std::string& key, const json& v) { run.resolved[run.command][key] = v; }

SlepianConfig read_slepian(Section& s) {
  SlepianConfig c;
  c.duration = s.get("duration_ns", c.duration);
  c.dt = s.get("dt_ns", c.dt);
  c.pad = s.get("pad_ns", c.pad);
  c.theta_initial = s.get("theta_initial", c.theta_initial);
  c.theta_final = s.get("theta_final", c.theta_final);
  c.control_points = s.get("control_points", c.control_points);
  c.nw = s.get("nw", c.nw);
  c.validate();
  return c;
}

json slepian_json(const SlepianConfig& c) {
  return {{"duration_ns", c.duration}, {"dt_ns", c.dt},   {"pad_ns", c.pad},
          {"theta_initial", c.theta_initial}, {"theta_final", c.theta_final},
          {"control_points", c.control_points}, {"nw", c.nw}};
}

Waveform read_waveform_csv(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);
  if (line.rfind("t_ns,amplitude", 0) != 0) throw ConfigError(p.string() + ": expected header t_ns,amplitude");
  std::vector<double> t, y;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = line.find(',');
    if (c == std::string::npos) throw ConfigError(p.string() + ": malformed row '" + line + "'");
    try {
      t.push_back(std::stod(line.substr(0, c)));
      y.push_back(std::stod(line.substr(c + 1)));
    } catch (const std::exception&) {
      throw ConfigError(p.string() + ": malformed row '" + line + "'");
    }
  }
  if (t.size() < 2) throw ConfigError(p.string() + ": need at least two samples");
  Waveform w;
  w.dt = t[1] - t[0];
  for (std::size_t i = 2; i < t.size(); ++i)
    if (std::abs(t[i] - t[i - 1] - w.dt) > 1e-6 * w.dt) throw ConfigError(p.string() + ": samples must be uniform in time");
  w.samples = y;
  w.max_excursion = w.peak();
  w.validate();
  return w;
}

void write_waveform(Run& run, const std::string& name, const Waveform& w) {
  Csv c(run, name, "t_ns,amplitude");
  for (std::size_t i = 0; i < w.size(); ++i) c.row(w.t(i), w.samples[i]);
}

fs::path resolve(const Run& run, const std::string& f) {
  fs::path p = f;
  if (p.is_relative()) p = run.config_dir / p;
  if (!fs::exists(p)) throw ConfigError("file not found: " + p.string());
  return p;
}

/// Waveform from `waveform` (CSV path) or a Slepian pulse scaled by `amplitude`.
Waveform read_pulse(Run& run, Section& s, double default_amp) {
  const auto file = s.get<std::string>("waveform", "");
  Section sl = s.sub("slepian");
  const auto cfg = read_slepian(sl);
  sl.finish();
  const double amp = s.get("amplitude", default_amp);
  if (!file.empty()) {
    record(run, "waveform", file);
    return read_waveform_csv(resolve(run, file));
  }
  record(run, "slepian", slepian_json(cfg));
  record(run, "amplitude", amp);
  return slepian_unit_pulse(cfg).scaled(amp);
}

LeakageErrorModel read_leakage(Section s, LeakageErrorModel m) {
  m.p_d = s.get("p_d", m.p_d);
  m.l1 = s.get("l1", m.l1);
  m.l2 = s.get("l2", m.l2);
  m.gamma = s.get("gamma", m.gamma);
  m.l20 = s.get("l20", m.l20);
  m.p_id0 = s.get("p_id0", m.p_id0);
  m.p_x1_0 = s.get("p_x1_0", m.p_x1_0);
  s.finish();
  m.validate();
  return m;
}

json leakage_json(const LeakageErrorModel& m) {
  return {{"p_d", m.p_d}, {"l1", m.l1}, {"l2", m.l2}, {"gamma", m.gamma}, {"l20", m.l20}, {"p_id0", m.p_id0}, {"p_x1_0", m.p_x1_0}};
}

LeakageErrorModel default_clifford_error() {
  LeakageErrorModel m;
  m.p_d = 2e-3;
  m.l1 = 3e-4;
  m.l2 = 1.5e-3;
  m.gamma = 0.02;
  m.l20 = 0.01;
  m.p_id0 = 0.99;
  m.p_x1_0 = 0.998;
  return m;
}

std::vector<int> read_m_values(Section& s) {
  auto mv = s.get<std::vector<int>>("m_values", {});
  if (mv.empty()) {
    const int mmax = s.get("m_max", 700), step = s.get("m_step", 1);
    if (mmax < 4 || step < 1) throw ConfigError("m_max must be >= 4 and m_step >= 1");
    for (int m = 1; m <= mmax; m += step) mv.push_back(m);
  }
  for (std::size_t i = 1; i < mv.size(); ++i)
    if (mv[i] <= mv[i - 1]) throw ConfigError("m_values must be strictly increasing");
  return mv;
}

json fit_json(const FitResult& f) {
  return {{"lambda_l", f.lambda_l}, {"a_m", f.a_m},       {"b_m", f.b_m},         {"lambda_r", f.lambda_r},
          {"c_m", f.c_m},           {"d_m", f.d_m},       {"se_lambda_l", f.se_lambda_l}, {"se_lambda_r", f.se_lambda_r},
          {"se_a_m", f.se_a_m},     {"l1", f.l1()},       {"l2", f.l2()},         {"r", f.r()},
          {"p_d", f.p_d()},         {"leakage_identifiable", f.leakage_identifiable}};
}

json metrics_json(const CZMetrics& c) {
  return {{"l1_cz", c.l1_cz},   {"lambda_r_cz", c.lambda_r_cz}, {"lambda_ratio", c.lambda_ratio},
          {"r_cz", c.r_cz},     {"p_d_cz", c.p_d_cz},           {"r_d_cz", c.r_d_cz},
          {"f_bar", c.f_bar},   {"se_r_cz", c.se_r_cz},         {"se_l1_cz", c.se_l1_cz}};
}

json report_json(const GateReport& r) {
  return {{"theta_cz_rad", r.theta_cz}, {"theta1_rad", r.theta1}, {"theta2_rad", r.theta2},
          {"leakage_l1", r.leakage_l1}, {"fidelity", r.fidelity}, {"dt_ns", r.dt_ns}, {"steps", r.steps}};
}

EvolveOptions read_evolve(Run& run, Section& s) {
  EvolveOptions eo;
  eo.substeps = s.get("substeps", eo.substeps);
  if (eo.substeps < 1) throw ConfigError("substeps must be >= 1");
  record(run, "substeps", eo.substeps);
  return eo;
}

// ---- commands ----

void cmd_spectrum(Run& run) {
  auto p = read_device(run);
  auto b = read_basis(run);
  Section s = command_section(run);
  const double lo = s.get("flux_lo", 0.0), hi = s.get("flux_hi", 0.5);
  const int n = s.get("points", 101), k = s.get("levels", 12), buf = s.get("buffer", 6);
  s.finish();
  if (n < 1 || k < 1) throw ConfigError("points and levels must be >= 1");
  record(run, "flux_lo", lo);
  record(run, "flux_hi", hi);
  record(run, "points", n);
  record(run, "levels", k);
  record(run, "buffer", buf);
  auto h = build_hamiltonian(p, b);
  auto sp = spectrum_scan(h, linspace(lo, hi, n), k, buf);
  Csv c(run, "spectrum.csv", "phi_ex_over_2pi,state_label,energy_ghz,overlap");
  for (std::size_t i = 0; i < sp.flux_points.size(); ++i)
    for (int j = 0; j < k; ++j) c.row(sp.flux_points[i], sp.labels[i][j].str(), sp.energies(j, i), sp.overlap[i][j]);
  for (const auto& w : sp.warnings) std::cerr << "warning: " << w << "\n";
}

void cmd_zz_scan(Run& run) {
  auto p = read_device(run);
  auto b = read_basis(run);
  Section s = command_section(run);
  const double lo = s.get("flux_lo", 0.25), hi = s.get("flux_hi", 0.5);
  const int n = s.get("points", 201);
  TrackingOptions o;
  o.anchor = s.get("anchor", o.anchor);
  o.max_step = s.get("max_step", o.max_step);
  s.finish();
  if (n < 2) throw ConfigError("points must be >= 2");
  record(run, "flux_lo", lo);
  record(run, "flux_hi", hi);
  record(run, "points", n);
  record(run, "anchor", o.anchor);
  record(run, "max_step", o.max_step);
  auto h = build_hamiltonian(p, b);
  auto z = zz_scan(h, linspace(lo, hi, n), o);
  Csv c(run, "zz_curve.csv", "phi_ex_over_2pi,zeta_over_2pi_mhz");
  for (std::size_t i = 0; i < z.flux_points.size(); ++i) c.row(z.flux_points[i], z.zeta_mhz[i]);
  write_json(run, "zz_summary.json",
             {{"idle_point", z.idle_point}, {"zeta_min_mhz", z.zeta_min_mhz}, {"max_point", z.max_point},
              {"zeta_max_mhz", z.zeta_max_mhz}, {"onoff_ratio", z.onoff_ratio}});
}

void cmd_idle_point(Run& run) {
  auto p = read_device(run);
  auto b = read_basis(run);
  Section s = command_section(run);
  const double lo = s.get("lo", 0.25), hi = s.get("hi", 0.35), tol = s.get("tol", 1e-5);
  s.finish();
  record(run, "lo", lo);
  record(run, "hi", hi);
  record(run, "tol", tol);
  auto h = build_hamiltonian(p, b);
  auto r = find_idle_point(h, lo, hi, {}, tol);
  write_json(run, "idle_point.json",
             {{"phi_ex_over_2pi", r.flux}, {"zeta_over_2pi_khz", r.zeta_mhz * 1e3}, {"evaluations", r.evaluations}});
}

void cmd_param_search(Run& run) {
  read_device(run);
  Section s = command_section(run);
  SearchSpec sp;
  auto range = [&](const std::string& k, Range r) {
    Section q = s.sub(k);
    r.lo = q.get("lo", r.lo);
    r.hi = q.get("hi", r.hi);
    r.n = q.get("n", r.n);
    q.finish();
    record(run, k, {{"lo", r.lo}, {"hi", r.hi}, {"n", r.n}});
    return r;
  };
  sp.cg = range("c_g_ff", sp.cg);
  sp.cc = range("c_c_ff", sp.cc);
  sp.ejc = range("e_jc_ghz", sp.ejc);
  sp.alpha = range("alpha", sp.alpha);
  sp.stage1_alpha = s.get("stage1_alpha", sp.stage1_alpha);
  sp.target_zeta_min_khz = s.get("target_zeta_min_khz", sp.target_zeta_min_khz);
  sp.target_zeta_max_mhz = s.get("target_zeta_max_mhz", sp.target_zeta_max_mhz);
  sp.step = s.get("flux_step", sp.step);
  s.finish();
  record(run, "stage1_alpha", sp.stage1_alpha);
  record(run, "target_zeta_min_khz", sp.target_zeta_min_khz);
  record(run, "target_zeta_max_mhz", sp.target_zeta_max_mhz);
  record(run, "flux_step", sp.step);
  auto r = parameter_search(sp);
  const std::string header = "c_c_ff,e_jc_ghz_or_alpha,zeta_min_khz,zeta_max_mhz";
  {
    Csv c(run, "search_stage1.csv", header);
    for (const auto& x : r.map_stage1) c.row(x.cc, x.ejc, x.zeta_min_khz, x.zeta_max_mhz);
  }
  {
    Csv c(run, "search_stage2.csv", header);
    for (const auto& x : r.map_stage2) c.row(x.cc, x.alpha, x.zeta_min_khz, x.zeta_max_mhz);
  }
  json ranked = json::array();
  for (const auto& x : r.ranked)
    ranked.push_back({{"stage", x.stage}, {"c_g_ff", x.cg}, {"c_c_ff", x.cc}, {"e_jc_ghz", x.ejc}, {"alpha", x.alpha},
                      {"zeta_min_khz", x.zeta_min_khz}, {"zeta_max_mhz", x.zeta_max_mhz}, {"idle_point", x.idle_flux},
                      {"max_point", x.max_flux}, {"feasible", x.feasible}, {"note", x.note}});
  write_json(run, "search_result.json",
             {{"feasible_count", r.feasible_count}, {"diagnostics", r.diagnostics}, {"ranked", ranked}});
}

void cmd_toy_model(Run& run) {
  auto p = read_device(run);
  Section s = command_section(run);
  const double flux = s.get("flux", 0.309);
  const int n = s.get("surface_points", 61);
  const double hw = s.get("surface_half_width", kPi);
  const auto scan = s.get<std::vector<double>>("g_eff_fluxes", linspace(0.25, 0.5, 26));
  s.finish();
  record(run, "flux", flux);
  record(run, "surface_points", n);
  record(run, "surface_half_width", hw);
  record(run, "g_eff_fluxes", scan);
  auto t = derive_toy_params(p, flux);
  json g = json::array();
  for (double f : scan) {
    auto e = effective_coupling(t, f);
    g.push_back({{"phi_ex_over_2pi", f}, {"g_eff_mhz", e.g_eff * 1e3}, {"omega_m_ghz", e.omega_m}, {"dispersive", e.dispersive}});
  }
  write_json(run, "toy_model.json",
             {{"omega1_ghz", t.omega1}, {"omega2_ghz", t.omega2}, {"eta1_ghz", t.eta1}, {"eta2_ghz", t.eta2},
              {"omega_p_ghz", t.omega_p}, {"omega_m_ghz", t.omega_m}, {"g1p_ghz", t.g1p}, {"g2p_ghz", t.g2p},
              {"g1m_ghz", t.g1m}, {"g2m_ghz", t.g2m}, {"alpha", t.alpha},
              {"idle_point_estimate", idle_point_estimate(t.alpha)}, {"g_eff_scan", g}, {"warnings", t.warnings}});
  auto ps = potential_surface(p, flux, n, hw);
  Csv c(run, "potential_surface.csv", "phi_p,phi_m,v_exact_ghz,v_approx_ghz,diff_ghz");
  for (std::size_t i = 0; i < ps.phi_p.size(); ++i)
    for (std::size_t j = 0; j < ps.phi_m.size(); ++j)
      c.row(ps.phi_p[i], ps.phi_m[j], ps.v_exact(i, j), ps.v_approx(i, j), ps.diff(i, j));
}

void cmd_pulse_gen(Run& run) {
  Section s = command_section(run);
  Section sl = s.sub("slepian");
  auto cfg = read_slepian(sl);
  sl.finish();
  const double amp = s.get("amplitude", 0.0975925);
  s.finish();
  record(run, "slepian", slepian_json(cfg));
  record(run, "amplitude", amp);
  write_waveform(run, "waveform.csv", slepian_unit_pulse(cfg).scaled(amp));
}

DistortionModel read_distortion(Run& run, Section& s) {
  DistortionModel m;
  const auto name = s.get<std::string>("model", "short-term");
  auto terms = s.raw("terms");
  if (!terms.is_null()) {
    if (!terms.is_array()) throw ConfigError("terms must be a list of {a, tau_ns}");
    for (auto& t : terms) {
      Section ts(t, "terms[]");
      m.terms.push_back({ts.get("a", 0.0), ts.get("tau_ns", 0.0)});
      ts.finish();
    }
  } else if (name == "short-term") {
    m = DistortionModel::short_term();
  } else if (name == "long-term") {
    m = DistortionModel::long_term();
  } else {
    throw ConfigError("model must be 'short-term', 'long-term', or give explicit terms");
  }
  m.validate();
  if (!m.invertible()) throw ConfigError("distortion model step response is not strictly positive");
  json tj = json::array();
  for (auto& t : m.terms) tj.push_back({{"a", t.a}, {"tau_ns", t.tau_ns}});
  record(run, "terms", tj);
  return m;
}

void cmd_predistort(Run& run) {
  Section s = command_section(run);
  auto w = read_pulse(run, s, 0.0975925);
  auto m = read_distortion(run, s);
  const double tail = s.get("tail_ns", -1.0);
  s.finish();
  record(run, "tail_ns", tail);
  auto pre = predistort(w, m, tail);
  auto back = apply_distortion(pre, m, 0.0);
  double err = 0;
  for (std::size_t i = 0; i < back.size(); ++i)
    err = std::max(err, std::abs(back.samples[i] - (i < w.size() ? w.samples[i] : 0.0)));
  write_waveform(run, "predistorted.csv", pre);
  write_json(run, "predistort.json",
             {{"samples_in", w.size()}, {"samples_out", pre.size()}, {"round_trip_peak_relative_error", err / std::max(1e-300, w.peak())}});
}

DynamicsModel dynamics(Run& run, Section& s) {
  auto p = read_device(run);
  auto b = read_basis(run);
  const double idle = s.get("idle_flux", 0.309);
  record(run, "idle_flux", idle);
  return build_dynamics_model(build_hamiltonian(p, b), b, idle);
}

void cmd_gate_report(Run& run) {
  Section s = command_section(run);
  auto m = dynamics(run, s);
  auto w = read_pulse(run, s, 0.0975925);
  auto eo = read_evolve(run, s);
  const bool vz = s.has("theta1") && s.has("theta2");
  const double t1 = s.get("theta1", 0.0), t2 = s.get("theta2", 0.0);
  s.finish();
  if (vz) {
    record(run, "theta1", t1);
    record(run, "theta2", t2);
  }
  auto r = gate_report(m, evolve(m, w, eo), vz ? &t1 : nullptr, vz ? &t2 : nullptr);
  write_json(run, "gate_report.json", report_json(r));
}

void cmd_optimize_cz(Run& run) {
  Section s = command_section(run);
  auto m = dynamics(run, s);
  Section sl = s.sub("slepian");
  auto shape = read_slepian(sl);
  sl.finish();
  OptimizerConfig oc;
  oc.control_points = shape.control_points;
  oc.population = s.get("population", oc.population);
  oc.parents = s.get("parents", oc.parents);
  oc.epochs = s.get("epochs", 15);
  oc.sigma0 = s.get("sigma0", oc.sigma0);
  oc.target = 1 - s.get("target_error", 1e-4);
  oc.seed = run.seed;
  oc.threads = run.threads;
  const bool has_amp = s.has("amplitude");
  double amp = s.get("amplitude", 0.0);
  const double lo = s.get("amplitude_lo", 0.05), hi = s.get("amplitude_hi", 0.13);
  EvolveOptions fast;
  fast.substeps = s.get("search_substeps", 2);
  auto eo = read_evolve(run, s);
  s.finish();
  record(run, "slepian", slepian_json(shape));
  record(run, "population", oc.population);
  record(run, "parents", oc.parents);
  record(run, "epochs", oc.epochs);
  record(run, "sigma0", oc.sigma0);
  record(run, "target_error", 1 - oc.target);
  record(run, "search_substeps", fast.substeps);
  auto unit = slepian_unit_pulse(shape);
  if (!has_amp) {
    auto ac = calibrate_amplitude(m, unit, lo, hi, 17, {2, 10, 25}, fast);
    amp = ac.amplitude;
    record(run, "amplitude_lo", lo);
    record(run, "amplitude_hi", hi);
  }
  record(run, "amplitude", amp);
  const auto start = unit.scaled(amp);
  auto res = optimize_pulse(sample_control_points(start, shape), shape,
                            [&](const Waveform& w) { return coherent_cz_fidelity(m, w, fast); }, oc);
  {
    Csv c(run, "optimization_trace.csv", "epoch,candidate,objective");
    for (const auto& t : res.trace) c.row(t.epoch, t.candidate, t.objective);
  }
  write_waveform(run, "best_waveform.csv", res.waveform);
  auto rep = gate_report(m, evolve(m, res.waveform, eo));
  json j = report_json(rep);
  j["initial_objective"] = res.initial_objective;
  j["final_objective"] = res.objective;
  j["evaluations"] = res.evaluations;
  j["amplitude"] = amp;
  write_json(run, "gate_report.json", j);
}

void write_dataset(Csv& c, const RBDataset& d) {
  for (const auto& r : d.records) c.row(d.variant, r.m, r.seq, r.p_id, r.p_x1);
}

void cmd_rb_sim(Run& run) {
  Section s = command_section(run);
  auto cl = read_leakage(s.sub("clifford_error"), default_clifford_error());
  LeakageErrorModel czd;
  czd.p_d = 9e-4;
  czd.l1 = 3e-4;
  auto cz = read_leakage(s.sub("cz_error"), czd);
  RBOptions o;
  o.m_values = read_m_values(s);
  o.sequences = s.get("sequences", 10);
  o.shots = s.get("shots", 1000);
  o.seed = run.seed;
  o.threads = run.threads;
  const auto variants = s.get<std::vector<std::string>>("variants", {"SRB", "IRB"});
  s.finish();
  record(run, "clifford_error", leakage_json(cl));
  record(run, "cz_error", leakage_json(cz));
  record(run, "m_values", o.m_values);
  record(run, "sequences", o.sequences);
  record(run, "shots", o.shots);
  record(run, "variants", variants);
  auto g = build_clifford_group(2);
  Csv c(run, "rb_dataset.csv", "variant,m,seq_index,p_id,p_x1");
  for (const auto& v : variants) {
    RBOptions oi = o;
    if (v == "IRB") {
      oi.cz_rates = cz;
    } else if (v != "SRB") {
      throw ConfigError("variants may contain only SRB and IRB");
    }
    write_dataset(c, simulate_rb(cl, g, oi));
  }
}

std::map<std::string, RBDataset> read_rb_csv(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);
  if (line.rfind("variant,m,seq_index,p_id,p_x1", 0) != 0) throw ConfigError(p.string() + ": expected RB dataset header");
  std::map<std::string, std::map<int, std::vector<RBRecord>>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string f[5];
    for (auto& x : f)
      if (!std::getline(ls, x, ',')) throw ConfigError(p.string() + ": malformed row '" + line + "'");
    try {
      rows[f[0]][std::stoi(f[1])].push_back({std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3]), std::stod(f[4])});
    } catch (const std::exception&) {
      throw ConfigError(p.string() + ": malformed row '" + line + "'");
    }
  }
  std::map<std::string, RBDataset> out;
  for (auto& [v, bym] : rows) {
    RBDataset d;
    d.variant = v;
    for (auto& [m, recs] : bym) {
      std::vector<double> a, b;
      for (auto& r : recs) {
        a.push_back(r.p_id);
        b.push_back(r.p_x1);
        d.records.push_back(r);
      }
      double ma, sa, mb, sb;
      detail::mean_std(a, ma, sa);
      detail::mean_std(b, mb, sb);
      if (recs.size() < 2) sa = sb = 0;
      d.m.push_back(m);
      d.mean_id.push_back(ma);
      d.sd_id.push_back(sa);
      d.mean_x1.push_back(mb);
      d.sd_x1.push_back(sb);
      d.sequences = std::max<int>(d.sequences, static_cast<int>(recs.size()));
    }
    d.validate();
    out[v] = d;
  }
  if (out.empty()) throw ConfigError(p.string() + ": no data rows");
  return out;
}

void cmd_lrb_fit(Run& run) {
  Section s = command_section(run);
  const auto file = s.get<std::string>("dataset", "");
  s.finish();
  if (file.empty()) throw ConfigError("lrb-fit needs lrb-fit.dataset (an RB dataset CSV)");
  const auto path = resolve(run, file);
  record(run, "dataset", file);
  record(run, "dataset_hash", fnv1a(read_file(path)));
  auto sets = read_rb_csv(path);
  json j;
  std::map<std::string, FitResult> fits;
  for (auto& [v, d] : sets) {
    fits[v] = fit_lrb(d);
    j[v] = fit_json(fits[v]);
  }
  write_json(run, "lrb_fit.json", j);
  if (fits.count("SRB") && fits.count("IRB")) write_json(run, "cz_metrics.json", metrics_json(cz_metrics(fits["SRB"], fits["IRB"])));
}

void cmd_cz_metrics(Run& run) {
  Section s = command_section(run);
  CZMetrics c;
  if (s.has("srb") || s.has("irb")) {
    auto fit = [&](const std::string& k) {
      Section f = s.sub(k);
      FitResult r;
      r.lambda_l = f.get("lambda_l", 1.0);
      r.a_m = f.get("a_m", 1.0);
      r.lambda_r = f.get("lambda_r", 1.0);
      f.finish();
      if (!(r.lambda_r > 0 && r.lambda_r <= 1 && r.lambda_l > 0 && r.lambda_l <= 1))
        throw ConfigError(k + ": decay parameters must lie in (0, 1]");
      record(run, k, {{"lambda_l", r.lambda_l}, {"a_m", r.a_m}, {"lambda_r", r.lambda_r}});
      return r;
    };
    c = cz_metrics(fit("srb"), fit("irb"));
  } else {
    const double l1 = s.get("l1_cz", 0.00027), r = s.get("r_cz", 0.00090);
    record(run, "l1_cz", l1);
    record(run, "r_cz", r);
    c = cz_metrics_from_errors(l1, r);
  }
  s.finish();
  write_json(run, "cz_metrics.json", metrics_json(c));
}

void cmd_gate_length_study(Run& run) {
  Section s = command_section(run);
  const auto lengths = s.get<std::vector<double>>("lengths_ns", {40, 48, 64, 80, 100, 120, 160, 200, 240, 280, 320});
  const double teff = s.get("t_eff_us", 23.9), l1 = s.get("l1_cz", 3e-4), r0 = s.get("r0", 0.0);
  auto cl = read_leakage(s.sub("clifford_error"), default_clifford_error());
  RBOptions o;
  o.m_values = read_m_values(s);
  o.sequences = s.get("sequences", 10);
  o.shots = s.get("shots", 1000);
  o.seed = run.seed;
  o.threads = run.threads;
  Section out = s.sub("outlier");
  const double out_len = out.get("length_ns", -1.0), out_extra = out.get("extra_r_d", 0.0);
  out.finish();
  s.finish();
  if (!(teff > 0)) throw ConfigError("t_eff_us must be > 0");
  record(run, "lengths_ns", lengths);
  record(run, "t_eff_us", teff);
  record(run, "l1_cz", l1);
  record(run, "r0", r0);
  record(run, "clifford_error", leakage_json(cl));
  record(run, "m_values", o.m_values);
  record(run, "sequences", o.sequences);
  record(run, "shots", o.shots);
  record(run, "outlier", {{"length_ns", out_len}, {"extra_r_d", out_extra}});
  std::vector<LeakageErrorModel> cz;
  for (double t : lengths) cz.push_back(cz_model_from_t_eff(t, teff, l1, r0 + (t == out_len ? out_extra : 0.0)));
  auto st = gate_length_study(lengths, cz, cl, build_clifford_group(2), o);
  {
    Csv c(run, "gate_length.csv", "length_ns,r_cz,l1_cz,r_d,se_r_d,outlier");
    for (const auto& p : st.points) c.row(p.length_ns, p.r_cz, p.l1_cz, p.r_d, p.se_r_d, p.outlier ? 1 : 0);
  }
  write_json(run, "gate_length_fit.json",
             {{"t_eff_us", st.t_eff_us}, {"r0", st.r0}, {"se_r0", st.se_r0}, {"slope_per_us", st.inliers.slope},
              {"pearson_all", st.all.pearson}, {"pearson_inliers", st.inliers.pearson}, {"outliers", st.outliers}});
}

NoiseParams read_noise(Run& run, Section s) {
  NoiseParams n = idle_point_noise();
  const auto t1 = s.get<std::vector<double>>("t1_us", {n.t1_us[0], n.t1_us[1]});
  std::vector<double> tphi = {n.tphi_us[0], n.tphi_us[1]};
  if (s.has("t2e_us")) {
    const auto t2 = s.get<std::vector<double>>("t2e_us", {});
    if (t2.size() != 2) throw ConfigError("t2e_us needs two values");
    tphi = {tphi_from_t2(t1.at(0), t2[0]), tphi_from_t2(t1.at(1), t2[1])};
  }
  tphi = s.get("tphi_us", tphi);
  if (t1.size() != 2 || tphi.size() != 2) throw ConfigError("t1_us and tphi_us need two values");
  n.t1_us = {t1[0], t1[1]};
  n.tphi_us = {tphi[0], tphi[1]};
  const double tcz = s.get("t_cz_us", -1.0);
  n.t_cz_us = tcz > 0 ? tcz : std::numeric_limits<double>::infinity();
  n.gate_ns = s.get("gate_ns", n.gate_ns);
  s.finish();
  n.validate();
  auto fin = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  record(run, "noise", {{"t1_us", t1}, {"tphi_us", {fin(n.tphi_us[0]), fin(n.tphi_us[1])}}, {"t_cz_us", fin(n.t_cz_us)},
                        {"gate_ns", n.gate_ns}});
  return n;
}

void cmd_qpt(Run& run) {
  Section s = command_section(run);
  const auto spam = s.get<std::string>("spam", "readout");
  const auto channel = s.get<std::string>("channel", "cz");
  NoiseParams n = idle_point_noise();
  if (channel == "cz+incoherent") n = read_noise(run, s.sub("noise"));
  s.finish();
  record(run, "spam", spam);
  record(run, "channel", channel);
  MatC cz = cz_matrix();
  KrausSet ch{{cz}, "cz"};
  if (channel == "cz+incoherent") {
    ch = compose(ch, incoherent_channel(n));
  } else if (channel != "cz") {
    throw ConfigError("qpt.channel must be 'cz' or 'cz+incoherent'");
  }
  std::optional<SpamModel> sm;
  if (spam == "readout") {
    sm = SpamModel::measured();
  } else if (spam == "readout+preparation") {
    sm = SpamModel::measured_with_preparation();
  } else if (spam != "none") {
    throw ConfigError("qpt.spam must be 'none', 'readout' or 'readout+preparation'");
  }
  auto rec = reconstruct_ptm(simulate_qpt(ch, sm));
  const auto ideal = ptm_of(cz);
  const auto& lab = pauli_labels();
  {
    std::string header = "row";
    for (const auto& l : lab) header += "," + l;
    Csv c(run, "ptm.csv", header);
    for (int i = 0; i < 16; ++i) {
      std::string line = lab[i];
      for (int j = 0; j < 16; ++j) line += "," + fmt(rec.ptm(i, j));
      c.row(line);
    }
  }
  {
    Csv c(run, "ptm_long.csv", "row_label,col_label,value");
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) c.row(lab[i], lab[j], rec.ptm(i, j));
  }
  write_json(run, "qpt.json",
             {{"fidelity", fidelity_from_ptm(rec.ptm, ideal)}, {"fidelity_true_channel", fidelity_from_ptm(ptm_of(ch), ideal)},
              {"projection_iterations", rec.iterations}, {"min_choi_eigenvalue", rec.min_choi_eigenvalue}});
}

void cmd_error_budget(Run& run) {
  Section s = command_section(run);
  auto n = read_noise(run, s.sub("noise"));
  const double sq_ns = s.get("single_qubit_gate_ns", 48.0);
  Section fs_ = s.sub("flux_noise");
  FluxNoiseParams fn;
  fn.sqrt_a_uphi0 = fs_.get("sqrt_a_uphi0", fn.sqrt_a_uphi0);
  fn.f_low_hz = fs_.get("f_low_hz", fn.f_low_hz);
  fn.f_high_hz = fs_.get("f_high_hz", fn.f_high_hz);
  fn.samples = fs_.get("samples", 0);
  const double amp = fs_.get("amplitude", 0.0975925);
  fs_.finish();
  fn.seed = run.seed;
  fn.threads = run.threads;
  s.finish();
  record(run, "single_qubit_gate_ns", sq_ns);
  record(run, "flux_noise", {{"sqrt_a_uphi0", fn.sqrt_a_uphi0}, {"f_low_hz", fn.f_low_hz}, {"f_high_hz", fn.f_high_hz},
                             {"samples", fn.samples}, {"amplitude", amp}});
  auto e = incoherent_error_estimate(n);
  json j;
  j["cz"] = {{"t1_q1", e.t1_q1}, {"t1_q2", e.t1_q2}, {"tphi_q1", e.tphi_q1}, {"tphi_q2", e.tphi_q2}, {"t_cz", e.cz},
             {"total", e.total}, {"t_eff_us", e.t_eff_us},
             {"kraus_channel_error", 1 - average_fidelity_of(incoherent_channel(n))}};
  j["single_qubit"] = json::array();
  for (int q = 0; q < 2; ++q)
    j["single_qubit"].push_back({{"qubit", q + 1},
                                 {"t1_term", single_qubit_incoherent(sq_ns, n.t1_us[q], std::numeric_limits<double>::infinity())},
                                 {"tphi_term", single_qubit_incoherent(sq_ns, std::numeric_limits<double>::infinity(), n.tphi_us[q])},
                                 {"total", single_qubit_incoherent(sq_ns, n.t1_us[q], n.tphi_us[q])}});
  if (fn.samples > 0) {
    fn.validate();
    auto p = read_device(run);
    auto b = read_basis(run);
    auto m = build_dynamics_model(build_hamiltonian(p, b), b, 0.309);
    auto r = flux_noise_mc(m, slepian_unit_pulse({}).scaled(amp), fn);
    j["flux_noise"] = {{"samples", fn.samples}, {"sigma_phi0", fn.sigma_phi0()}, {"mean", r.mean}, {"stddev", r.stddev},
                       {"mean_fixed_vz", r.mean_fixed_vz}, {"stddev_fixed_vz", r.stddev_fixed_vz}};
  } else {
    j["flux_noise"] = {{"samples", 0}, {"sigma_phi0", fn.sigma_phi0()}};
  }
  j["total_cz"] = e.total + (fn.samples > 0 ? j["flux_noise"]["mean"].get<double>() : 0.0);
  write_json(run, "error_budget.json", j);
}

void write_manifest(Run& run) {
  json m;
  m["command"] = run.command;
  m["config"] = run.config_path.empty() ? json(nullptr) : json(run.config_path.string());
  m["seed"] = run.seed;
  m["threads"] = run.threads;
  m["resolved_inputs"] = run.resolved;
  m["inputs_hash"] = fnv1a(run.resolved.dump());
  m["outputs"] = run.outputs;
  m["versions"] = {{"dtc", DTC_VERSION},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  std::ofstream o(run.out / ("manifest_" + run.command + ".json"));
  o << m.dump(2) << "\n";
}

int dispatch(Run& run) {
  static const std::map<std::string, void (*)(Run&)> table = {
      {"spectrum", cmd_spectrum},       {"zz-scan", cmd_zz_scan},         {"idle-point", cmd_idle_point},
      {"param-search", cmd_param_search}, {"pulse-gen", cmd_pulse_gen},   {"predistort", cmd_predistort},
      {"optimize-cz", cmd_optimize_cz}, {"gate-report", cmd_gate_report}, {"rb-sim", cmd_rb_sim},
      {"lrb-fit", cmd_lrb_fit},         {"cz-metrics", cmd_cz_metrics},   {"gate-length-study", cmd_gate_length_study},
      {"qpt", cmd_qpt},                 {"error-budget", cmd_error_budget}, {"toy-model", cmd_toy_model}};
  if (!run.config_path.empty()) {
    run.config = parse_json_file(run.config_path);
    if (!run.config.is_object()) throw ConfigError("config must be a JSON object");
    for (auto it = run.config.begin(); it != run.config.end(); ++it) {
      const auto& k = it.key();
      if (k != "device" && k != "basis" && k != "output_dir" && k != "seed" && k != "threads" && !table.count(k))
        throw ConfigError("unknown top-level config key '" + k + "'");
    }
  }
  run.resolved["command"] = run.command;
  run.resolved["seed"] = run.seed;
  fs::create_directories(run.out);
  table.at(run.command)(run);
  write_manifest(run);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-transmon-coupler simulation toolkit"};
  app.require_subcommand(1, 1);
  std::string config, out;
  long long seed = -1;
  int threads = 0;
  app.add_option("--config", config, "JSON config file");
  app.add_option("--out", out, "output directory (default: config output_dir, else ./out)");
  app.add_option("--seed", seed, "random seed (default: config seed, else 1)");
  app.add_option("--threads", threads, "worker threads (default: config threads, else 1)");
  for (const auto& c : kCommands) app.add_subcommand(c)->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  Run run;
  run.command = app.get_subcommands().front()->get_name();
  try {
    json peek;
    if (!config.empty()) {
      run.config_path = config;
      if (!fs::exists(run.config_path)) throw ConfigError("config file not found: " + config);
      run.config_dir = fs::absolute(run.config_path).parent_path();
      peek = parse_json_file(run.config_path);
    } else {
      run.config_dir = fs::current_path();
    }
    auto top = [&](const char* k) { return peek.is_object() && peek.contains(k) ? peek[k] : json(); };
    try {
      run.out = !out.empty() ? fs::path(out) : top("output_dir").is_string() ? fs::path(top("output_dir").get<std::string>()) : fs::path("out");
      run.seed = seed >= 0 ? static_cast<std::uint64_t>(seed) : top("seed").is_number_unsigned() ? top("seed").get<std::uint64_t>() : 1;
      run.threads = threads > 0 ? threads : top("threads").is_number_integer() ? top("threads").get<int>() : 1;
    } catch (const json::exception& e) {
      throw ConfigError(e.what());
    }
    if (run.threads < 1) throw ConfigError("threads must be >= 1");
    return dispatch(run);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
