#pragma once

// Assembles complete cooling experiments: model + bath + noise + initial
// state + run length, the Delta-sweep used for gap spectroscopy, preparation
// times, and the fixed-t_p decoherence study. Also owns the flat key = value
// config format consumed by the CLI.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sympacool/dynamics.hpp"
#include "sympacool/models.hpp"
#include "sympacool/observables.hpp"
#include "sympacool/spectrum.hpp"

namespace sympacool {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum class InitialStateKind { AllUp, Neel, RandomProduct, Explicit };

struct InitialState {
  InitialStateKind kind = InitialStateKind::AllUp;
  std::uint64_t random_seed = 0;
  Vector explicit_state;
};

struct RunSpec {
  ModelSpec model;
  BathSpec bath;
  DecoherenceSpec noise;
  InitialState init;
  std::optional<double> t_max;  // empty: 100 inverse energy-scale units
  int n_grid = 400;
  // ground-manifold clustering ratio; near a phase boundary the forming
  // quasi-degenerate doublet may need a looser value than the 0.1 default
  double cluster_theta = kDefaultClusterTheta;
  std::set<std::string> track;  // subset of {energy, fidelity, bath_up}

  double resolved_t_max() const {
    return t_max ? *t_max : 100.0 / model.energy_scale();
  }

  void validate() const {
    model.validate();
    bath.validate();
    noise.validate();
    bath.resolved_sites(model.kind, model.n_sites);
    if (t_max && *t_max <= 0) throw ValidationError("t_max must be > 0");
    if (n_grid < 2) throw ValidationError("n_grid must be >= 2");
    if (cluster_theta <= 0 || cluster_theta >= 1)
      throw ValidationError("cluster_theta must be in (0, 1)");
    for (const auto& name : track)
      if (name != "energy" && name != "fidelity" && name != "bath_up")
        throw ValidationError("unknown observable in track: " + name);
  }
};

inline std::vector<double> make_grid(double t_max, int n_points) {
  std::vector<double> g(n_points);
  for (int i = 0; i < n_points; ++i)
    g[i] = t_max * double(i) / double(n_points - 1);
  g[0] = 0.0;
  return g;
}

// System-space product state for the configured initial condition.
inline Vector materialize_initial_state(const InitialState& init, int n_sites) {
  const std::int64_t dim = std::int64_t{1} << n_sites;
  switch (init.kind) {
    case InitialStateKind::AllUp: {
      Vector v = Vector::Zero(dim);
      v[0] = 1.0;
      return v;
    }
    case InitialStateKind::Neel: {
      // site 0 up, alternating; down sites carry bit 1
      std::int64_t idx = 0;
      for (int k = 1; k < n_sites; k += 2)
        idx |= std::int64_t{1} << site_bit(n_sites, k);
      Vector v = Vector::Zero(dim);
      v[idx] = 1.0;
      return v;
    }
    case InitialStateKind::RandomProduct: {
      PhiloxRng rng(init.random_seed, 0);
      std::int64_t idx = 0;
      for (int k = 0; k < n_sites; ++k)
        if (rng.uniform() < 0.5) idx |= std::int64_t{1} << site_bit(n_sites, k);
      Vector v = Vector::Zero(dim);
      v[idx] = 1.0;
      return v;
    }
    case InitialStateKind::Explicit: {
      if (init.explicit_state.size() != dim)
        throw ValidationError("explicit initial state has wrong dimension");
      const double n2 = init.explicit_state.squaredNorm();
      if (std::abs(n2 - 1.0) > 1e-8)
        throw ValidationError("explicit initial state is not normalized");
      return init.explicit_state / std::sqrt(n2);
    }
  }
  throw ValidationError("unknown initial state kind");
}

// Joint state with the bath spin appended in |down> (the dark state of the
// dissipator).
inline Vector join_with_bath_down(const Vector& sys) {
  Vector v = Vector::Zero(sys.size() * 2);
  for (std::int64_t s = 0; s < sys.size(); ++s) v[2 * s + 1] = sys[s];
  return v;
}

// Delta = Delta_E when the bath splitting is left on "auto".
inline double resolve_delta(const RunSpec& run) {
  if (run.bath.delta) return *run.bath.delta;
  return exact_spectrum(build_system_hamiltonian(run.model), run.cluster_theta)
      .gap;
}

struct RunOptions {
  int threads = 0;
  double dt_factor = 1.0;
  int rho_samples = 0;  // > 0: reconstruct ensemble rho at this many times
};

struct CoolingRun {
  EnsembleResult ens;
  SpectrumInfo spectrum;  // of H_sys
  double delta = 0.0;     // resolved bath splitting
  double gamma = 0.0;

  double final_mean(const std::string& name) const {
    return ens.at(name).mean.back();
  }
  double final_sem(const std::string& name) const {
    return ens.at(name).sem.back();
  }
  DissipationEstimate dissipation() const {
    return dissipated_energy(ens, delta, gamma);
  }
};

// The full experiment: H_total = H_sys + H_bath + H_int, bath starts in
// |down>, trajectories averaged with deterministic seeding. The epsilon
// series is attached as the affine image of the energy series.
inline CoolingRun run_cooling(const RunSpec& run, int n_traj,
                              std::uint64_t master_seed,
                              const RunOptions& opts = {}) {
  run.validate();
  const int n = run.model.n_sites;

  const auto h_sys = build_system_hamiltonian(run.model);
  auto spectrum = exact_spectrum(h_sys, run.cluster_theta);
  const double delta = run.bath.delta ? *run.bath.delta : spectrum.gap;

  const auto h_sys_joint = h_sys.embed_append(1);
  const auto h_total = h_sys_joint + build_bath_hamiltonian(delta, n) +
                       build_interaction_hamiltonian(run.bath, run.model.kind, n);
  const auto jumps = build_jump_operators(run.bath, run.noise, n);

  // fidelity against the ground manifold, extended over the bath spin
  const int m = spectrum.manifold_dim;
  Matrix basis(h_total.dim(), 2 * m);
  basis.setZero();
  for (int i = 0; i < m; ++i)
    for (std::int64_t s = 0; s < h_sys.dim(); ++s) {
      basis(2 * s, 2 * i) = spectrum.ground_manifold(s, i);
      basis(2 * s + 1, 2 * i + 1) = spectrum.ground_manifold(s, i);
    }
  auto shared_basis = std::make_shared<Matrix>(std::move(basis));

  std::vector<Observable> obs;
  obs.push_back(make_expectation_observable("energy", h_sys_joint));
  obs.push_back({"fidelity", [shared_basis](const Vector& psi) {
                   return (shared_basis->adjoint() * psi).squaredNorm();
                 }});
  obs.push_back({"bath_up", [](const Vector& psi) {
                   double p = 0.0;
                   for (std::int64_t s = 0; s < psi.size(); s += 2)
                     p += std::norm(psi[s]);
                   return p;
                 }});

  const auto grid = make_grid(run.resolved_t_max(), run.n_grid);
  const auto psi0 =
      join_with_bath_down(materialize_initial_state(run.init, n));

  EnsembleOptions eopts;
  eopts.threads = opts.threads;
  eopts.mcwf.dt_factor = opts.dt_factor;
  if (opts.rho_samples > 0) {
    const int nr = std::min(opts.rho_samples, run.n_grid);
    std::set<int> idx;
    for (int q = 0; q < nr; ++q)
      idx.insert(int(std::lround(double(q) * (run.n_grid - 1) / (nr - 1))));
    eopts.rho_sample_indices.assign(idx.begin(), idx.end());
  }

  CoolingRun out;
  out.ens = run_ensemble(h_total, jumps, psi0, grid, obs, n_traj, master_seed,
                         eopts);
  out.spectrum = std::move(spectrum);
  out.delta = delta;
  out.gamma = run.bath.gamma;

  const auto& energy = out.ens.at("energy");
  SeriesStats eps;
  eps.mean.resize(energy.mean.size());
  eps.sem.resize(energy.sem.size());
  for (std::size_t i = 0; i < energy.mean.size(); ++i) {
    eps.mean[i] = (energy.mean[i] - out.spectrum.e0) / out.spectrum.gap;
    eps.sem[i] = energy.sem[i] / out.spectrum.gap;
  }
  out.ens.series["epsilon"] = std::move(eps);
  return out;
}

// ---------------------------------------------------------------------------
// Crossings and preparation time

inline std::optional<double> first_crossing(const std::vector<double>& times,
                                            const std::vector<double>& series,
                                            double target, bool below) {
  auto ok = [&](double v) { return below ? v <= target : v >= target; };
  if (ok(series[0])) return 0.0;
  for (std::size_t i = 1; i < series.size(); ++i)
    if (ok(series[i])) {
      const double f = (target - series[i - 1]) / (series[i] - series[i - 1]);
      return times[i - 1] + f * (times[i] - times[i - 1]);
    }
  return std::nullopt;
}

// First time the ensemble-mean epsilon falls below eps_target.
inline double preparation_time(const EnsembleResult& ens, double eps_target) {
  const auto& eps = ens.at("epsilon");
  if (auto t = first_crossing(ens.times, eps.mean, eps_target, true)) return *t;
  throw NotConvergedError("epsilon never crossed " + std::to_string(eps_target) +
                          " within t_max");
}

inline double interpolate_at(const std::vector<double>& times,
                             const std::vector<double>& series, double t) {
  if (t <= times.front()) return series.front();
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] >= t) {
      const double f = (t - times[i - 1]) / (times[i] - times[i - 1]);
      return series[i - 1] + f * (series[i] - series[i - 1]);
    }
  return series.back();
}

// ---------------------------------------------------------------------------
// Delta sweep (gap spectroscopy)

struct SweepResult {
  std::vector<double> delta_grid;
  std::vector<double> final_energy;
  std::vector<double> e_dis;        // up-population integral estimator
  std::vector<double> e_dis_count;  // direct jump-count estimator
  std::vector<double> final_fidelity;
  double argmin_energy = 0.0;
  // gap estimate from the dissipated-energy curve: the location of its
  // resonance extremum. E_dis = N_jump * Delta is largest where cooling
  // extracts the most energy, so the extremum of the curve (the minimum of
  // the bath energy change -N_jump * Delta) marks Delta = Delta_E.
  double argmin_edis = 0.0;
  double gap_reference = 0.0;  // Delta_E of H_sys
};

inline SweepResult sweep_delta(const RunSpec& run,
                               const std::vector<double>& delta_grid,
                               int n_traj, std::uint64_t master_seed,
                               const RunOptions& opts = {}) {
  if (delta_grid.size() < 3)
    throw ValidationError("delta grid needs at least 3 points");
  for (std::size_t i = 1; i < delta_grid.size(); ++i)
    if (delta_grid[i] <= delta_grid[i - 1])
      throw ValidationError("delta grid must be strictly increasing");

  SweepResult res;
  res.delta_grid = delta_grid;
  res.gap_reference = resolve_delta([&] {
    RunSpec r = run;
    r.bath.delta.reset();
    return r;
  }());

  for (std::size_t d = 0; d < delta_grid.size(); ++d) {
    RunSpec r = run;
    r.bath.delta = delta_grid[d];
    const auto cr = run_cooling(r, n_traj, mix_seed(master_seed, d), opts);
    const auto dis = cr.dissipation();
    res.final_energy.push_back(cr.final_mean("energy"));
    res.final_fidelity.push_back(cr.final_mean("fidelity"));
    res.e_dis.push_back(dis.e_dis(DissipationMethod::UpPopulationIntegral));
    res.e_dis_count.push_back(dis.e_dis(DissipationMethod::DirectCount));
  }
  res.argmin_energy =
      delta_grid[std::min_element(res.final_energy.begin(),
                                  res.final_energy.end()) -
                 res.final_energy.begin()];
  res.argmin_edis =
      delta_grid[std::max_element(res.e_dis.begin(), res.e_dis.end()) -
                 res.e_dis.begin()];
  return res;
}

// ---------------------------------------------------------------------------
// Decoherence study at a fixed reference preparation time

struct DecoherencePoint {
  double kappa = 0.0;
  double kappa_tp = 0.0;
  double eps_at_tp = 0.0;
  double eps_sem = 0.0;
};

struct DecoherenceStudy {
  double t_ref = 0.0;          // from the kappa = 0 run at fidelity_target
  double fidelity_target = 0.9;
  std::vector<DecoherencePoint> points;
};

inline DecoherenceStudy decoherence_study(const RunSpec& run,
                                          const std::vector<double>& kappa_grid,
                                          int n_traj, std::uint64_t master_seed,
                                          double fidelity_target = 0.9,
                                          const RunOptions& opts = {}) {
  RunSpec base = run;
  base.noise.kappa = 0.0;
  const auto baseline = run_cooling(base, n_traj, master_seed, opts);
  const auto& fid = baseline.ens.at("fidelity");
  const auto t_ref =
      first_crossing(baseline.ens.times, fid.mean, fidelity_target, false);
  if (!t_ref)
    throw NotConvergedError(
        "baseline run never reached the target fidelity; t_p undefined");

  DecoherenceStudy study;
  study.t_ref = *t_ref;
  study.fidelity_target = fidelity_target;
  for (std::size_t i = 0; i < kappa_grid.size(); ++i) {
    if (kappa_grid[i] < 0) throw ValidationError("kappa must be >= 0");
    DecoherencePoint p;
    p.kappa = kappa_grid[i];
    p.kappa_tp = kappa_grid[i] * study.t_ref;
    if (kappa_grid[i] == 0.0) {
      p.eps_at_tp = interpolate_at(baseline.ens.times,
                                   baseline.ens.at("epsilon").mean, study.t_ref);
      p.eps_sem = interpolate_at(baseline.ens.times,
                                 baseline.ens.at("epsilon").sem, study.t_ref);
    } else {
      RunSpec r = run;
      r.noise.kappa = kappa_grid[i];
      const auto cr = run_cooling(r, n_traj, mix_seed(master_seed, i + 1), opts);
      p.eps_at_tp =
          interpolate_at(cr.ens.times, cr.ens.at("epsilon").mean, study.t_ref);
      p.eps_sem =
          interpolate_at(cr.ens.times, cr.ens.at("epsilon").sem, study.t_ref);
    }
    study.points.push_back(p);
  }
  return study;
}

// ---------------------------------------------------------------------------
// Flat key = value config files

struct ConfigEntry {
  std::string key, value;
  int line = 0;
};

struct Config {
  std::vector<ConfigEntry> entries;

  const std::string* find(const std::string& key) const {
    const std::string* out = nullptr;
    for (const auto& e : entries)
      if (e.key == key) out = &e.value;  // last occurrence wins
    return out;
  }

  void set(const std::string& key, const std::string& value) {
    for (auto& e : entries)
      if (e.key == key) {
        e.value = value;
        return;
      }
    entries.push_back({key, value, 0});
  }
};

inline Config parse_config(std::istream& is) {
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) +
                            ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ValidationError("config line " + std::to_string(lineno) +
                            ": empty key");
    cfg.entries.push_back({key, value, lineno});
  }
  return cfg;
}

inline Config parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file: " + path);
  return parse_config(is);
}

struct FullConfig {
  RunSpec run;
  int n_traj = 1000;
  std::uint64_t seed = 1;
};

namespace detail {

inline double to_double(const ConfigEntry& e) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ValidationError("config line " + std::to_string(e.line) + ": key '" +
                          e.key + "' needs a number, got '" + e.value + "'");
  }
}

inline std::int64_t to_int(const ConfigEntry& e) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ValidationError("config line " + std::to_string(e.line) + ": key '" +
                          e.key + "' needs an integer, got '" + e.value + "'");
  }
}

}  // namespace detail

// Builds a FullConfig from parsed entries; unknown keys are rejected with
// their line number so typos fail loudly.
inline FullConfig config_to_run(const Config& cfg) {
  FullConfig fc;
  bool saw_fx = false, saw_fy = false, saw_fz = false, saw_sites = false;
  for (const auto& e : cfg.entries) {
    const std::string& k = e.key;
    auto err = [&](const std::string& msg) {
      throw ValidationError("config line " + std::to_string(e.line) + ": " + msg);
    };
    if (k == "model.kind") {
      if (e.value == "transverse_ising" || e.value == "ising")
        fc.run.model.kind = ModelKind::TransverseIsing;
      else if (e.value == "power_law_ising")
        fc.run.model.kind = ModelKind::PowerLawIsing;
      else if (e.value == "heisenberg")
        fc.run.model.kind = ModelKind::Heisenberg;
      else
        err("model.kind must be transverse_ising | power_law_ising | heisenberg");
    } else if (k == "model.n") {
      fc.run.model.n_sites = int(detail::to_int(e));
    } else if (k == "model.j") {
      fc.run.model.j = detail::to_double(e);
    } else if (k == "model.g") {
      fc.run.model.g = detail::to_double(e);
    } else if (k == "model.alpha_lr") {
      fc.run.model.alpha_lr = detail::to_double(e);
    } else if (k == "bath.delta") {
      if (e.value == "auto")
        fc.run.bath.delta.reset();
      else
        fc.run.bath.delta = detail::to_double(e);
    } else if (k == "bath.gamma") {
      fc.run.bath.gamma = detail::to_double(e);
    } else if (k == "bath.g_sb") {
      fc.run.bath.g_sb = detail::to_double(e);
    } else if (k == "bath.fx") {
      fc.run.bath.fx = detail::to_double(e);
      saw_fx = true;
    } else if (k == "bath.fy") {
      fc.run.bath.fy = detail::to_double(e);
      saw_fy = true;
    } else if (k == "bath.fz") {
      fc.run.bath.fz = detail::to_double(e);
      saw_fz = true;
    } else if (k == "bath.sites") {
      std::vector<SiteWeight> sw;
      std::stringstream ss(e.value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        try {
          if (colon == std::string::npos)
            sw.push_back({std::stoi(item), 1.0});
          else
            sw.push_back({std::stoi(item.substr(0, colon)),
                          std::stod(item.substr(colon + 1))});
        } catch (...) {
          err("bath.sites expects 'site:weight[,site:weight...]'");
        }
      }
      if (sw.empty()) err("bath.sites must name at least one site");
      fc.run.bath.site_weights = std::move(sw);
      saw_sites = true;
    } else if (k == "noise.kappa") {
      fc.run.noise.kappa = detail::to_double(e);
    } else if (k == "noise.kappa_c") {
      fc.run.noise.kappa_c = detail::to_double(e);
    } else if (k == "init") {
      if (e.value == "all_up")
        fc.run.init.kind = InitialStateKind::AllUp;
      else if (e.value == "neel")
        fc.run.init.kind = InitialStateKind::Neel;
      else if (e.value.rfind("random:", 0) == 0) {
        fc.run.init.kind = InitialStateKind::RandomProduct;
        try {
          fc.run.init.random_seed = std::stoull(e.value.substr(7));
        } catch (...) {
          err("init random seed must be an integer");
        }
      } else
        err("init must be all_up | neel | random:<seed>");
    } else if (k == "cluster_theta") {
      fc.run.cluster_theta = detail::to_double(e);
    } else if (k == "t_max") {
      fc.run.t_max = detail::to_double(e);
    } else if (k == "n_grid") {
      fc.run.n_grid = int(detail::to_int(e));
    } else if (k == "n_traj") {
      fc.n_traj = int(detail::to_int(e));
    } else if (k == "seed") {
      fc.seed = std::uint64_t(detail::to_int(e));
    } else if (k == "track") {
      std::stringstream ss(e.value);
      std::string item;
      while (std::getline(ss, item, ',')) fc.run.track.insert(item);
    } else {
      err("unknown key '" + k + "'");
    }
  }
  // f defaults are model dependent; fill only the components not given
  const auto def =
      BathSpec::defaults_for(fc.run.model.kind, fc.run.model.n_sites);
  if (!saw_fx) fc.run.bath.fx = def.fx;
  if (!saw_fy) fc.run.bath.fy = def.fy;
  if (!saw_fz) fc.run.bath.fz = def.fz;
  if (!saw_sites) fc.run.bath.site_weights = def.site_weights;
  fc.run.validate();
  if (fc.n_traj < 1) throw ValidationError("n_traj must be >= 1");
  return fc;
}

inline Config run_to_config(const FullConfig& fc) {
  Config cfg;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  cfg.set("model.kind", to_string(fc.run.model.kind));
  cfg.set("model.n", std::to_string(fc.run.model.n_sites));
  cfg.set("model.j", num(fc.run.model.j));
  cfg.set("model.g", num(fc.run.model.g));
  if (fc.run.model.kind == ModelKind::PowerLawIsing)
    cfg.set("model.alpha_lr", num(fc.run.model.alpha_lr));
  cfg.set("bath.delta", fc.run.bath.delta ? num(*fc.run.bath.delta) : "auto");
  cfg.set("bath.gamma", num(fc.run.bath.gamma));
  cfg.set("bath.g_sb", num(fc.run.bath.g_sb));
  cfg.set("bath.fx", num(fc.run.bath.fx));
  cfg.set("bath.fy", num(fc.run.bath.fy));
  cfg.set("bath.fz", num(fc.run.bath.fz));
  {
    std::string s;
    const auto sites =
        fc.run.bath.resolved_sites(fc.run.model.kind, fc.run.model.n_sites);
    for (const auto& [site, weight] : sites) {
      if (!s.empty()) s += ",";
      s += std::to_string(site) + ":" + num(weight);
    }
    cfg.set("bath.sites", s);
  }
  if (fc.run.cluster_theta != kDefaultClusterTheta)
    cfg.set("cluster_theta", num(fc.run.cluster_theta));
  cfg.set("noise.kappa", num(fc.run.noise.kappa));
  cfg.set("noise.kappa_c", num(fc.run.noise.kappa_c));
  switch (fc.run.init.kind) {
    case InitialStateKind::AllUp: cfg.set("init", "all_up"); break;
    case InitialStateKind::Neel: cfg.set("init", "neel"); break;
    case InitialStateKind::RandomProduct:
      cfg.set("init", "random:" + std::to_string(fc.run.init.random_seed));
      break;
    case InitialStateKind::Explicit:
      throw ValidationError("explicit initial states have no config form");
  }
  cfg.set("t_max", num(fc.run.resolved_t_max()));
  cfg.set("n_grid", std::to_string(fc.run.n_grid));
  cfg.set("n_traj", std::to_string(fc.n_traj));
  cfg.set("seed", std::to_string(fc.seed));
  return cfg;
}

inline void write_config(std::ostream& os, const Config& cfg) {
  for (const auto& e : cfg.entries) os << e.key << " = " << e.value << "\n";
}

}  // namespace sympacool
