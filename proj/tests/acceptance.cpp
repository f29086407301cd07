// Acceptance suite: every release criterion as one pass/fail line, run
// end-to-end at the stated tolerances. Heavier criteria share their runs
// (the estimator-consistency check reuses the fidelity and spectroscopy runs).
//
// Usage: acceptance [--only K ...]   (default: run all twelve)

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sympacool/analysis.hpp"
#include "sympacool/observables.hpp"
#include "sympacool/protocol.hpp"
#include "sympacool/spectrum.hpp"

using namespace sympacool;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---- shared fixtures -------------------------------------------------------

RunSpec ferro_ising_run(int n_sites) {  // ferromagnetic Ising, reference parameters
  RunSpec run;
  run.model = {ModelKind::TransverseIsing, n_sites, 1.0, 5.0};
  run.bath = BathSpec::defaults_for(run.model.kind, n_sites);
  run.bath.gamma = 1.9;
  run.bath.g_sb = 1.15;
  run.t_max = 100.0;
  run.n_grid = 400;
  return run;
}

RunSpec heisenberg_run() {  // antiferromagnetic Heisenberg, reference parameters
  RunSpec run;
  run.model = {ModelKind::Heisenberg, 4, 1.0, 1.0};
  run.bath = BathSpec::defaults_for(run.model.kind, 4);
  run.bath.gamma = 0.6;
  run.bath.g_sb = 0.2;
  run.init.kind = InitialStateKind::Neel;
  run.t_max = 300.0;
  run.n_grid = 400;
  return run;
}

std::optional<CoolingRun> g_ferro;   // filled by criterion 2
std::optional<CoolingRun> g_heis_gap;   // Delta = gap run, filled by criterion 3
ParamMap g_heis6_params;            // filled by criterion 6 (reused by 8)

const CoolingRun& ferro_ising_result() {
  if (!g_ferro) g_ferro = run_cooling(ferro_ising_run(5), 1000, 424242);
  return *g_ferro;
}

const CoolingRun& heisenberg_gap_result() {
  if (!g_heis_gap) {
    RunSpec run = heisenberg_run();
    run.bath.delta.reset();
    g_heis_gap = run_cooling(run, 512, 357);
  }
  return *g_heis_gap;
}

// ---- criteria --------------------------------------------------------------

Outcome criterion_1() {
  // trajectory engine vs exact Lindblad integrator, Ising N=3 + bath (dim 16)
  RunSpec run = ferro_ising_run(3);
  run.t_max = 25.0;
  const auto cr = run_cooling(run, 2000, 11);

  const auto h_sys = build_system_hamiltonian(run.model);
  const auto sp = exact_spectrum(h_sys);
  const auto h_joint = h_sys.embed_append(1);
  const auto h_tot = h_joint + build_bath_hamiltonian(cr.delta, 3) +
                     build_interaction_hamiltonian(run.bath, run.model.kind, 3);
  const auto jumps = build_jump_operators(run.bath, run.noise, 3);
  const Vector psi0 = join_with_bath_down(materialize_initial_state(run.init, 3));
  const auto ex =
      lindblad_exact_evolve(h_tot, jumps, psi0 * psi0.adjoint(), cr.ens.times);

  const auto proj = ground_projector(sp, 1);
  const auto up_op = ManyBodyOperator::from_terms(
      4, {{0.5, 0, 0}, {0.5, 0, site_mask(4, 3)}});

  const int n_pts = int(cr.ens.times.size());
  int ok_e = 0, ok_f = 0, ok_u = 0;
  for (int i = 0; i < n_pts; ++i) {
    const double slack = 1e-9;
    if (std::abs(expectation(ex.rho[i], h_joint) - cr.ens.at("energy").mean[i]) <=
        3 * cr.ens.at("energy").sem[i] + slack)
      ++ok_e;
    if (std::abs(fidelity(ex.rho[i], proj) - cr.ens.at("fidelity").mean[i]) <=
        3 * cr.ens.at("fidelity").sem[i] + slack)
      ++ok_f;
    if (std::abs(expectation(ex.rho[i], up_op) - cr.ens.at("bath_up").mean[i]) <=
        3 * cr.ens.at("bath_up").sem[i] + slack)
      ++ok_u;
  }
  const double needed = 0.95 * n_pts;
  return {ok_e >= needed && ok_f >= needed && ok_u >= needed,
          fmt("agreement energy %d/%d fidelity %d/%d bath_up %d/%d points",
              ok_e, n_pts, ok_f, n_pts, ok_u, n_pts)};
}

Outcome criterion_2() {
  const auto& cr = ferro_ising_result();
  const double f = cr.final_mean("fidelity");
  return {f > 0.88, fmt("final fidelity %.4f (threshold 0.88)", f)};
}

Outcome criterion_3() {
  // the sweep runs through the cooling transient, where both the energy
  // minimum and the dissipation extremum resolve; the fidelity check uses a
  // dedicated long run at Delta = Delta_E (the protocol's operating point)
  RunSpec run = heisenberg_run();
  run.t_max = 60.0;
  run.n_grid = 150;
  const double gap = resolve_delta(run);
  std::vector<double> grid;
  for (int i = 0; i < 11; ++i) grid.push_back(gap * (0.5 + 0.1 * i));
  const auto sw = sweep_delta(run, grid, 2048, 357);
  const double step = grid[1] - grid[0];

  const auto& cr = heisenberg_gap_result();  // the Delta = gap run, long plateau
  const double f_opt = cr.final_mean("fidelity");

  const bool energy_ok = std::abs(sw.argmin_energy - gap) <= step + 1e-9;
  const bool edis_ok = std::abs(sw.argmin_edis - gap) <= step + 1e-9;
  const bool fid_ok = f_opt >= 0.85;
  return {energy_ok && edis_ok && fid_ok,
          fmt("argmin_E %.3f, E_dis extremum %.3f (gap %.3f, step %.3f), "
              "fidelity at gap %.4f",
              sw.argmin_energy, sw.argmin_edis, gap, step, f_opt)};
}

Outcome criterion_4() {
  const auto d2 = ferro_ising_result().dissipation();
  const auto d3 = heisenberg_gap_result().dissipation();
  const double dev2 = std::abs(d2.n_jump_count - d2.n_jump_integral);
  const double dev3 = std::abs(d3.n_jump_count - d3.n_jump_integral);
  const bool ok2 = dev2 <= 4.0 * d2.combined_njump_sem() + 1e-9;
  const bool ok3 = dev3 <= 4.0 * d3.combined_njump_sem() + 1e-9;
  return {ok2 && ok3,
          fmt("run2: |%.3f - %.3f| vs 4 sem %.3f; run3: |%.3f - %.3f| vs 4 sem %.3f",
              d2.n_jump_count, d2.n_jump_integral, 4 * d2.combined_njump_sem(),
              d3.n_jump_count, d3.n_jump_integral, 4 * d3.combined_njump_sem())};
}

std::string points_string(const ScalingResult& r) {
  std::string s;
  for (const auto& p : r.points) s += fmt(" (%d, %.2f)", p.n, p.t_p);
  return s;
}

Outcome criterion_5() {
  ModelSpec family{ModelKind::TransverseIsing, 4, 1.0, 5.0};
  const auto res = scaling_study(family, {4, 5, 6, 7, 8}, 0.2, 48, 20250807);
  const bool ok = res.alpha >= 2.5 && res.alpha <= 3.7;
  return {ok, fmt("alpha %.3f +- %.3f (window [2.5, 3.7]); points:%s", res.alpha,
                  res.alpha_stderr, points_string(res).c_str())};
}

Outcome criterion_6() {
  ModelSpec family{ModelKind::Heisenberg, 4, 1.0, 1.0};
  const auto res = scaling_study(family, {4, 5, 6, 7, 8}, 0.2, 48, 20250808);
  for (const auto& p : res.points)
    if (p.n == 6) g_heis6_params = p.params;
  const bool alpha_ok = res.alpha >= 2.5 && res.alpha <= 3.7;
  const bool odd_below =
      res.intercept_odd.has_value() && *res.intercept_odd < res.intercept;
  return {alpha_ok && odd_below,
          fmt("shared alpha %.3f +- %.3f, intercept even %.3f odd %.3f; points:%s",
              res.alpha, res.alpha_stderr, res.intercept,
              res.intercept_odd.value_or(0.0), points_string(res).c_str())};
}

Outcome criterion_7() {
  RunSpec run = ferro_ising_run(4);
  const int n_traj = 600;
  const auto study_probe = decoherence_study(run, {0.0}, n_traj, 777, 0.9);
  const double t_ref = study_probe.t_ref;
  const double kappa_star = 2.0 / t_ref;
  const auto study =
      decoherence_study(run, {0.0, kappa_star}, n_traj, 777, 0.9);
  const double eps = study.points[1].eps_at_tp;
  return {std::abs(eps - 1.0) <= 0.3,
          fmt("t_p(f=0.9) = %.2f, epsilon at kappa t_p = 2: %.3f (want 1.0 +- 0.3)",
              t_ref, eps)};
}

struct NegativitySeries {
  std::vector<double> times;
  std::vector<double> neg;
  double t_p = 0.0;
};

NegativitySeries negativity_series(const RunSpec& run, int n_traj,
                                   std::uint64_t seed) {
  RunOptions opts;
  opts.rho_samples = 50;
  const auto cr = run_cooling(run, n_traj, seed, opts);
  NegativitySeries out;
  out.t_p = preparation_time(cr.ens, 0.2);
  const auto split = BipartitionSpec::default_for(run.model.n_sites + 1);
  for (std::size_t i = 0; i < cr.ens.rho.size(); ++i) {
    const auto psd = clip_to_psd(cr.ens.rho[i]);
    out.times.push_back(cr.ens.rho_times[i]);
    out.neg.push_back(negativity(psd.rho, run.model.n_sites + 1, split));
  }
  return out;
}

Outcome criterion_8() {
  // Ising N=6 at the ferro-phase optimum
  RunSpec ising = ferro_ising_run(6);
  const auto ni = negativity_series(ising, 600, 31);

  // Heisenberg N=6 at parameters optimized to reach epsilon = 0.2
  RunSpec heis = heisenberg_run();
  heis.model.n_sites = 6;
  heis.bath = BathSpec::defaults_for(ModelKind::Heisenberg, 6);
  if (g_heis6_params.empty()) {
    OptimizeOptions oopts;
    oopts.nm.max_evals = 25;
    oopts.nm.tol_f = 5e-3;
    oopts.nm.tol_x = 2e-2;
    heis.t_max = 400.0;
    const auto best =
        optimize_cooling(heis, ObjectiveKind::PrepTime, 48, 20250808, oopts);
    g_heis6_params = best.best_params;
  }
  heis.bath.g_sb = g_heis6_params.at("g_sb");
  heis.bath.gamma = g_heis6_params.at("gamma");
  heis.t_max = 400.0;
  const auto nh = negativity_series(heis, 600, 32);

  auto value_at = [](const NegativitySeries& s, double t) {
    return interpolate_at(s.times, s.neg, t);
  };
  const double ising_at_tp = value_at(ni, ni.t_p);
  const double heis_at_tp = value_at(nh, nh.t_p);

  double ising_peak = 0.0;
  for (std::size_t i = 0; i < ni.times.size(); ++i)
    if (ni.times[i] < ni.t_p) ising_peak = std::max(ising_peak, ni.neg[i]);
  const double ising_late = ni.neg.back();

  const bool heis_wins = heis_at_tp > ising_at_tp;
  const bool transient = ising_late < ising_peak;
  return {heis_wins && transient,
          fmt("negativity at t_p: Heisenberg %.4f vs Ising %.4f; Ising late %.4f "
              "vs early peak %.4f",
              heis_at_tp, ising_at_tp, ising_late, ising_peak)};
}

Outcome criterion_9() {
  // three Ising regimes at N=5 with per-regime optimized parameters. The
  // sub-gap regimes cool slowly, so they run longer than the ferro case;
  // at J/g = 1.4 the forming ferro doublet (splitting 0.28 vs next gap
  // 1.98) is counted as the ground manifold via a looser clustering ratio.
  std::string detail;
  bool ok = true;
  for (double jg : {0.2, 1.4, 5.0}) {
    RunSpec run;
    run.model = {ModelKind::TransverseIsing, 5, 1.0, jg};
    run.bath = BathSpec::defaults_for(run.model.kind, 5);
    run.t_max = jg == 5.0 ? 100.0 : 250.0;
    run.n_grid = 400;
    if (jg == 1.4) run.cluster_theta = 0.15;
    ParamMap params;
    if (jg == 5.0) {
      params = {{"g_sb", 1.15}, {"gamma", 1.9}};  // known ferro-phase optimum
    } else {
      OptimizeOptions oopts;
      oopts.nm.max_evals = 25;
      oopts.nm.tol_f = 5e-3;
      oopts.nm.tol_x = 2e-2;
      const auto best =
          optimize_cooling(run, ObjectiveKind::FinalEpsilon, 128, 555, oopts);
      params = best.best_params;
    }
    run.bath.g_sb = params.at("g_sb");
    run.bath.gamma = params.at("gamma");
    const auto cr = run_cooling(run, 300, 556);
    const double eps = cr.final_mean("epsilon");
    detail += fmt(" J/g=%.1f: eps %.3f;", jg, eps);
    ok = ok && eps < 0.5;
  }

  // initial-state independence at J/g = 5
  std::vector<double> eps_vals, eps_sems;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    RunSpec run = ferro_ising_run(5);
    run.init.kind = InitialStateKind::RandomProduct;
    run.init.random_seed = 1000 + s;
    const auto cr = run_cooling(run, 300, 600 + s);
    eps_vals.push_back(cr.final_mean("epsilon"));
    eps_sems.push_back(cr.final_sem("epsilon"));
  }
  bool agree = true;
  for (std::size_t a = 0; a < eps_vals.size(); ++a)
    for (std::size_t b = a + 1; b < eps_vals.size(); ++b)
      if (std::abs(eps_vals[a] - eps_vals[b]) >
          3.0 * std::hypot(eps_sems[a], eps_sems[b]))
        agree = false;
  detail += fmt(" random-init eps: [%.3f, %.3f, %.3f, %.3f, %.3f] agree=%d",
                eps_vals[0], eps_vals[1], eps_vals[2], eps_vals[3], eps_vals[4],
                int(agree));
  return {ok && agree, detail};
}

Outcome criterion_10() {
  // Known red: with chi = -d2E0/dg2 on the open chain, the N=5 peak sits
  // near J/g = 1.8; no surveyed ground-state susceptibility of this chain
  // peaks at the reference location J/g = 1.4. Kept as an honest check.
  ModelSpec m{ModelKind::TransverseIsing, 5, 1.0, 1.0};
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(0.4 + 0.05 * i);
  const auto scan = susceptibility_scan(m, grid);
  const double target_g = 1.0 / 1.4;
  const bool ok = std::abs(scan.peak_g - target_g) <= 0.05 + 1e-9;
  return {ok, fmt("chi peak at g = %.2f i.e. J/g = %.2f (want J/g = 1.4, "
                  "g = %.3f +- 0.05)",
                  scan.peak_g, 1.0 / scan.peak_g, target_g)};
}

Outcome criterion_11() {
  std::string detail;
  bool ok = true;

  {  // two-spin Ising spectrum
    auto h = build_system_hamiltonian({ModelKind::TransverseIsing, 2, 1.0, 5.0});
    Eigen::SelfAdjointEigenSolver<Matrix> es(h.to_dense(), Eigen::EigenvaluesOnly);
    const double r = std::sqrt(29.0);
    const double dev = std::max(
        {std::abs(es.eigenvalues()[0] + r), std::abs(es.eigenvalues()[1] + 5.0),
         std::abs(es.eigenvalues()[2] - 5.0), std::abs(es.eigenvalues()[3] - r)});
    ok = ok && dev < 1e-10;
    detail += fmt("spectrum dev %.1e;", dev);
  }
  {  // singlet negativity
    Vector singlet = Vector::Zero(4);
    singlet[1] = 1 / std::sqrt(2.0);
    singlet[2] = -1 / std::sqrt(2.0);
    BipartitionSpec split;
    split.block_a = {0};
    const double n = negativity(singlet * singlet.adjoint(), 2, split);
    ok = ok && std::abs(n - 0.5) < 1e-8;
    detail += fmt(" singlet negativity %.8f;", n);
  }
  {  // single-spin decay against the analytic exponential
    auto h = ManyBodyOperator::from_terms(1, {{1.0, 0, 1}});
    Vector up(2);
    up << 1, 0;
    std::vector<Observable> obs{
        {"up", [](const Vector& p) { return std::norm(p[0]); }}};
    const auto grid = make_grid(5.0, 101);
    const auto ens = run_ensemble(h, {{sigma_minus(1, 0), 0.8}}, up, grid, obs,
                                  1200, 2718);
    int good = 0;
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (std::abs(ens.at("up").mean[i] - std::exp(-0.8 * grid[i])) <=
          3 * ens.at("up").sem[i] + 1e-9)
        ++good;
    ok = ok && good >= int(0.95 * grid.size());
    detail += fmt(" decay %d/%zu points;", good, grid.size());
  }
  {  // synthetic power-law fit
    std::vector<ScalingPoint> pts;
    for (int n : {4, 5, 6, 7, 8}) pts.push_back({n, std::pow(double(n), 3.0), {}});
    const auto fit = fit_power_law(pts);
    ok = ok && std::abs(fit.alpha - 3.0) < 1e-6;
    detail += fmt(" fit alpha %.9f", fit.alpha);
  }
  return {ok, detail};
}

Outcome criterion_12() {
  const std::string bin = SYMPACOOL_BIN;
  const fs::path dir =
      fs::temp_directory_path() / ("sympacool_acc12_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "model.kind = transverse_ising\nmodel.n = 3\nmodel.g = 1\n"
        << "model.j = 5\nbath.gamma = 1.9\nbath.g_sb = 1.15\n"
        << "t_max = 5\nn_grid = 41\nn_traj = 24\nseed = 9\n";
  }
  auto sh = [&](const std::string& cmd) {
    return WEXITSTATUS(std::system((cmd + " >/dev/null 2>&1").c_str()));
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };
  const std::string cfg = (dir / "run.cfg").string();

  struct Case {
    std::string name, args, artifact;
  };
  const std::vector<Case> cases = {
      {"cool", "cool -c " + cfg, "timeseries.csv"},
      {"sweep-delta", "sweep-delta -c " + cfg + " --points 3 --n-traj 8",
       "sweep.csv"},
      {"optimize", "optimize -c " + cfg + " --max-evals 6 --n-traj 8",
       "trace.csv"},
      {"scale",
       "scale -c " + cfg + " --n-min 2 --n-max 4 --max-evals 4 --n-traj 8 "
       "--eps-target 0.5",
       "scaling.csv"},
      {"transitions", "transitions -c " + cfg, "transitions.txt"},
      {"spectrum", "spectrum -c " + cfg, "spectrum.csv"},
  };

  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const fs::path a = dir / (c.name + "_a"), b = dir / (c.name + "_b");
    const int ra = sh(bin + " " + c.args + " -o " + a.string() + " --threads 1");
    const int rb = sh(bin + " " + c.args + " -o " + b.string() + " --threads 2");
    const bool same =
        ra == 0 && rb == 0 && slurp(a / c.artifact) == slurp(b / c.artifact) &&
        !slurp(a / c.artifact).empty();
    ok = ok && same;
    detail += fmt(" %s=%s", c.name.c_str(), same ? "ok" : "DIFF");
  }
  fs::remove_all(dir);
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--only" && i + 1 < argc)
      only.push_back(std::atoi(argv[++i]));

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "oracle equivalence (Ising N=3 + bath)", criterion_1},
      {2, "ground-state fidelity (Ising N=5)", criterion_2},
      {3, "gap spectroscopy (Heisenberg N=4)", criterion_3},
      {4, "dissipation estimator consistency", criterion_4},
      {5, "Ising preparation-time scaling", criterion_5},
      {6, "Heisenberg parity-split scaling", criterion_6},
      {7, "decoherence robustness (Ising N=4)", criterion_7},
      {8, "negativity comparison (N=6)", criterion_8},
      {9, "regimes and initial states (N=5)", criterion_9},
      {10, "critical point via susceptibility", criterion_10},
      {11, "analytic micro-oracles", criterion_11},
      {12, "CLI determinism", criterion_12},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end())
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[%s] criterion %2d (%s): %s  [%.1f s]\n",
                out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(),
                secs);
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures;
}
