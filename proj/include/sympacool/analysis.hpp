#pragma once

// Derivative-free optimization of the cooling parameters and the t_p ~ N^alpha
// scaling study. The stochastic objective is made deterministic by evaluating
// every candidate with the same master seed (common random numbers), which is
// what lets a plain Nelder-Mead converge on it.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sympacool/protocol.hpp"

namespace sympacool {

using ParamMap = std::map<std::string, double>;

struct NelderMeadOptions {
  double tol_f = 1e-9;   // terminate when the simplex objective spread is below
  double tol_x = 1e-7;   // or the log-space simplex diameter is below
  int max_evals = 150;
  double initial_step = 0.18232155679395463;  // ln 1.2: +-20% vertex perturbation
};

struct OptimizationResult {
  ParamMap best_params;
  double best_objective = 0.0;
  int n_evaluations = 0;
  std::vector<std::pair<ParamMap, double>> trace;
};

// Standard simplex method (reflection 1, expansion 2, contraction 0.5,
// shrink 0.5) in log-parameter space, which keeps every evaluated parameter
// strictly positive.
inline OptimizationResult nelder_mead(
    const std::function<double(const ParamMap&)>& objective,
    const ParamMap& initial, const NelderMeadOptions& opts = {}) {
  const int n = int(initial.size());
  if (n == 0) throw ValidationError("nelder_mead needs at least one parameter");
  std::vector<std::string> names;
  Eigen::VectorXd x0(n);
  int i = 0;
  for (const auto& [name, value] : initial) {
    if (!(value > 0) || !std::isfinite(value))
      throw ValidationError("parameter '" + name + "' must be strictly positive");
    names.push_back(name);
    x0[i++] = std::log(value);
  }

  OptimizationResult res;
  auto to_params = [&](const Eigen::VectorXd& u) {
    ParamMap p;
    for (int k = 0; k < n; ++k) p[names[k]] = std::exp(u[k]);
    return p;
  };
  auto eval = [&](const Eigen::VectorXd& u) {
    const ParamMap p = to_params(u);
    const double f = objective(p);
    if (!std::isfinite(f)) {
      std::string desc;
      for (const auto& [name, value] : p)
        desc += " " + name + "=" + std::to_string(value);
      throw IntegrationError("objective returned a non-finite value at" + desc);
    }
    res.trace.emplace_back(p, f);
    return f;
  };

  std::vector<Eigen::VectorXd> verts(n + 1, x0);
  for (int k = 0; k < n; ++k) verts[k + 1][k] += opts.initial_step;
  std::vector<double> fv(n + 1);
  for (int k = 0; k <= n; ++k) fv[k] = eval(verts[k]);

  auto order = [&] {
    std::vector<int> idx(n + 1);
    for (int k = 0; k <= n; ++k) idx[k] = k;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return fv[a] < fv[b]; });
    std::vector<Eigen::VectorXd> v2;
    std::vector<double> f2;
    for (int k : idx) {
      v2.push_back(verts[k]);
      f2.push_back(fv[k]);
    }
    verts.swap(v2);
    fv.swap(f2);
  };

  while (int(res.trace.size()) < opts.max_evals) {
    order();
    double diam = 0.0;
    for (int k = 1; k <= n; ++k)
      diam = std::max(diam, (verts[k] - verts[0]).cwiseAbs().maxCoeff());
    if (fv[n] - fv[0] < opts.tol_f || diam < opts.tol_x) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < n; ++k) centroid += verts[k];
    centroid /= double(n);

    const Eigen::VectorXd xr = centroid + (centroid - verts[n]);
    const double fr = eval(xr);
    if (fr < fv[0]) {
      if (int(res.trace.size()) >= opts.max_evals) break;
      const Eigen::VectorXd xe = centroid + 2.0 * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        verts[n] = xe;
        fv[n] = fe;
      } else {
        verts[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      verts[n] = xr;
      fv[n] = fr;
    } else {
      if (int(res.trace.size()) >= opts.max_evals) break;
      const bool outside = fr < fv[n];
      const Eigen::VectorXd xc =
          centroid + 0.5 * ((outside ? xr : verts[n]) - centroid);
      const double fc = eval(xc);
      if (fc < (outside ? fr : fv[n])) {
        verts[n] = xc;
        fv[n] = fc;
      } else {
        for (int k = 1; k <= n; ++k) {
          if (int(res.trace.size()) >= opts.max_evals) break;
          verts[k] = verts[0] + 0.5 * (verts[k] - verts[0]);
          fv[k] = eval(verts[k]);
        }
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k < res.trace.size(); ++k)
    if (res.trace[k].second < res.trace[best].second) best = k;
  res.best_params = res.trace[best].first;
  res.best_objective = res.trace[best].second;
  res.n_evaluations = int(res.trace.size());
  return res;
}

inline void write_trace_csv(std::ostream& os, const OptimizationResult& r) {
  os << "eval_index";
  if (!r.trace.empty())
    for (const auto& [name, _] : r.trace.front().first) os << "," << name;
  os << ",objective\n";
  char buf[64];
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    os << i;
    for (const auto& [_, value] : r.trace[i].first) {
      std::snprintf(buf, sizeof buf, ",%.17g", value);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g\n", r.trace[i].second);
    os << buf;
  }
}

// ---------------------------------------------------------------------------
// Cooling-objective optimization

enum class ObjectiveKind { FinalEpsilon, PrepTime };

struct OptimizeOptions {
  NelderMeadOptions nm;
  ParamMap initial;           // empty: (g_sb, gamma) = (0.2, 0.5) * energy scale
  bool optimize_delta = false;
  double eps_target = 0.2;    // PrepTime objective target
  RunOptions run_opts;
};

inline RunSpec apply_params(RunSpec run, const ParamMap& p) {
  run.bath.g_sb = p.at("g_sb");
  run.bath.gamma = p.at("gamma");
  if (auto it = p.find("delta"); it != p.end()) run.bath.delta = it->second;
  return run;
}

// Objective over (g_sb, gamma): final epsilon, or the preparation time with a
// 10 * t_max penalty when epsilon never crosses the target.
inline OptimizationResult optimize_cooling(const RunSpec& run,
                                           ObjectiveKind kind, int n_traj,
                                           std::uint64_t master_seed,
                                           const OptimizeOptions& opts = {}) {
  run.validate();
  ParamMap initial = opts.initial;
  if (initial.empty()) {
    const double e = run.model.energy_scale();
    initial = {{"g_sb", 0.2 * e}, {"gamma", 0.5 * e}};
    if (opts.optimize_delta) initial["delta"] = resolve_delta(run);
  }
  const double t_max = run.resolved_t_max();
  auto objective = [&](const ParamMap& p) {
    const auto cr =
        run_cooling(apply_params(run, p), n_traj, master_seed, opts.run_opts);
    if (kind == ObjectiveKind::FinalEpsilon)
      return cr.final_mean("epsilon");
    const auto t =
        first_crossing(cr.ens.times, cr.ens.at("epsilon").mean, opts.eps_target,
                       true);
    return t ? *t : 10.0 * t_max;
  };
  return nelder_mead(objective, initial, opts.nm);
}

// ---------------------------------------------------------------------------
// Power-law fits and the scaling study

struct ScalingPoint {
  int n = 0;
  double t_p = 0.0;
  ParamMap params;  // optimized (g_sb, gamma)
};

struct ScalingResult {
  std::vector<ScalingPoint> points;  // sorted by n
  double alpha = 0.0;
  double alpha_stderr = 0.0;
  double intercept = 0.0;                 // ln t_p at ln N = 0 (even/all fit)
  std::optional<double> intercept_odd;    // parity-split mode
  std::vector<double> log_residuals;
};

// OLS of ln t_p = alpha ln N + c. With parity_split, even and odd N share
// alpha but get separate intercepts.
inline ScalingResult fit_power_law(const std::vector<ScalingPoint>& points,
                                   bool parity_split = false) {
  const int m = int(points.size());
  if (m < 3) throw ValidationError("power-law fit needs at least 3 points");
  const int p = parity_split ? 3 : 2;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(m, p);
  Eigen::VectorXd y(m);
  for (int i = 0; i < m; ++i) {
    if (!(points[i].t_p > 0) || points[i].n < 1)
      throw ValidationError("power-law fit needs positive (N, t_p)");
    X(i, 0) = std::log(double(points[i].n));
    if (parity_split)
      X(i, points[i].n % 2 == 0 ? 1 : 2) = 1.0;
    else
      X(i, 1) = 1.0;
    y[i] = std::log(points[i].t_p);
  }
  if (parity_split &&
      (X.col(1).sum() < 1.5 || X.col(2).sum() < 0.5))
    throw ValidationError("parity-split fit needs both even and odd sizes");

  const Eigen::MatrixXd xtx = X.transpose() * X;
  const Eigen::VectorXd beta = xtx.ldlt().solve(X.transpose() * y);
  const Eigen::VectorXd resid = y - X * beta;
  const int dof = std::max(1, m - p);
  const double s2 = resid.squaredNorm() / double(dof);
  const Eigen::MatrixXd cov = s2 * xtx.inverse();

  ScalingResult r;
  r.points = points;
  std::sort(r.points.begin(), r.points.end(),
            [](const ScalingPoint& a, const ScalingPoint& b) { return a.n < b.n; });
  r.alpha = beta[0];
  r.alpha_stderr = std::sqrt(std::max(cov(0, 0), 0.0));
  r.intercept = beta[1];
  if (parity_split) r.intercept_odd = beta[2];
  r.log_residuals.assign(resid.data(), resid.data() + m);
  return r;
}

struct ScalingOptions {
  NelderMeadOptions nm{.tol_f = 5e-3, .tol_x = 2e-2, .max_evals = 36};
  int warm_max_evals = 22;     // budget for warm-started sizes after the first
  double t_max_initial = 0.0;  // 0: 60 inverse energy-scale units
  double t_max_growth = 1.6;   // t_max projection factor from the previous t_p
  int t_max_doublings = 6;
  RunOptions run_opts;
};

// Per size N: resolve Delta = Delta_E, optimize (g_sb, gamma) for the
// preparation time to eps_target, and record the optimum. Sizes run in
// ascending order and each optimization warm-starts from the previous
// optimum, which roughly halves the evaluation count.
inline ScalingResult scaling_study(const ModelSpec& family,
                                   const std::vector<int>& n_range,
                                   double eps_target, int n_traj,
                                   std::uint64_t master_seed,
                                   const ScalingOptions& opts = {}) {
  if (n_range.size() < 3)
    throw ValidationError("scaling study needs at least 3 sizes");
  if (n_traj < 1) throw ValidationError("n_traj must be >= 1");
  std::vector<int> sizes = n_range;
  std::sort(sizes.begin(), sizes.end());

  std::vector<ScalingPoint> points;
  std::vector<std::string> failures;
  ParamMap warm;
  double t_max = opts.t_max_initial > 0
                     ? opts.t_max_initial
                     : 60.0 / family.energy_scale();
  double prev_tp = 0.0;
  int prev_n = 0;

  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const int n = sizes[si];
    // project the run length from the previous optimum assuming rough
    // t_p ~ N^3.5 growth, with the doubling loop below as the safety net
    if (prev_tp > 0)
      t_max = std::max(t_max, opts.t_max_growth * prev_tp *
                                  std::pow(double(n) / prev_n, 3.5));
    RunSpec run;
    run.model = family;
    run.model.n_sites = n;
    run.bath = BathSpec::defaults_for(family.kind, n);
    run.init.kind = family.kind == ModelKind::Heisenberg
                        ? InitialStateKind::Neel
                        : InitialStateKind::AllUp;
    run.n_grid = 400;

    OptimizeOptions oopts;
    oopts.nm = opts.nm;
    if (!warm.empty()) {
      oopts.initial = warm;
      oopts.nm.max_evals = opts.warm_max_evals;
    }
    oopts.eps_target = eps_target;
    oopts.run_opts = opts.run_opts;

    const std::uint64_t seed_n = mix_seed(master_seed, std::uint64_t(n));
    try {
      // grow t_max until the starting point converges at all
      ParamMap probe = oopts.initial;
      if (probe.empty()) {
        const double e = family.energy_scale();
        probe = {{"g_sb", 0.2 * e}, {"gamma", 0.5 * e}};
      }
      int doublings = 0;
      for (;;) {
        run.t_max = t_max;
        const auto cr = run_cooling(apply_params(run, probe), n_traj,
                                    seed_n, opts.run_opts);
        if (first_crossing(cr.ens.times, cr.ens.at("epsilon").mean, eps_target,
                           true))
          break;
        if (++doublings > opts.t_max_doublings)
          throw NotConvergedError("epsilon never crossed the target");
        t_max *= 2.0;
      }

      auto best = optimize_cooling(run, ObjectiveKind::PrepTime, n_traj,
                                   seed_n, oopts);
      if (best.best_objective >= 10.0 * *run.t_max * 0.999)
        throw NotConvergedError("optimizer only found non-converged runs");
      points.push_back({n, best.best_objective, best.best_params});
      warm = best.best_params;
      prev_tp = best.best_objective;
      prev_n = n;
    } catch (const std::exception& e) {
      failures.push_back("N=" + std::to_string(n) + ": " + e.what());
    }
  }

  if (!failures.empty()) {
    std::string msg = "scaling study failed for";
    for (const auto& f : failures) msg += " [" + f + "]";
    throw NotConvergedError(msg);
  }
  return fit_power_law(points, family.kind == ModelKind::Heisenberg);
}

}  // namespace sympacool
