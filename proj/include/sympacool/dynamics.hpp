#pragma once

// Time evolution. Two routes:
//   - mcwf_evolve / run_ensemble: Monte Carlo wave function unraveling with
//     the norm-threshold jump method (draw r once, integrate the
//     non-Hermitian Schroedinger equation until |psi|^2 reaches r).
//   - lindblad_exact_evolve: deterministic density-matrix integration, the
//     small-dimension oracle the trajectory engine is validated against.
//
// Ensemble results are bit-reproducible for a fixed (master_seed, n_traj,
// grid, model) regardless of thread count: trajectories draw from
// counter-based streams and accumulators are merged in fixed block order.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sympacool/models.hpp"
#include "sympacool/pauli.hpp"
#include "sympacool/rng.hpp"

namespace sympacool {

// A tracked quantity; eval receives a normalized state and must be pure
// (observables are shared across trajectory workers).
struct Observable {
  std::string name;
  std::function<double(const Vector&)> eval;
};

inline Observable make_expectation_observable(std::string name,
                                              ManyBodyOperator op) {
  auto shared = std::make_shared<ManyBodyOperator>(std::move(op));
  return {std::move(name), [shared](const Vector& psi) {
            return std::real(psi.dot(shared->apply(psi)));
          }};
}

struct McwfOptions {
  double dt_factor = 1.0;  // scales the 0.05 / |H| base step
  double bisection_tol = 1e-10;
  int max_bisection_iters = 80;
};

struct TrajectoryResult {
  std::vector<double> times;
  std::vector<std::string> series_names;
  std::vector<std::vector<double>> series;  // [name][grid point]
  std::vector<std::pair<double, int>> jump_events;  // (time, channel)
  Vector final_state;

  const std::vector<double>& series_for(const std::string& name) const {
    for (std::size_t i = 0; i < series_names.size(); ++i)
      if (series_names[i] == name) return series[i];
    throw ValidationError("no tracked series named '" + name + "'");
  }
};

namespace detail {

// H_eff compiled for the inner loop: one complex diagonal plus XOR-gather
// off-diagonal strings (real coefficients split out; our Hamiltonians have
// only real off-diagonal strings after folding sigma_y phases).
struct ApplyPlan {
  Vector diag;
  struct OffR { double coef; std::uint32_t x, z; };
  struct OffC { Complex coef; std::uint32_t x, z; };
  std::vector<OffR> off_real;
  std::vector<OffC> off_cplx;
  std::int64_t dim = 0;

  static ApplyPlan compile(const ManyBodyOperator& op) {
    ApplyPlan p;
    p.dim = op.dim();
    p.diag = Vector::Zero(p.dim);
    for (const auto& t : op.terms()) {
      if (t.x == 0) {
        for (std::int64_t s = 0; s < p.dim; ++s)
          p.diag[s] += t.coef * parity_sign(std::uint32_t(s) & t.z);
      } else {
        // gather form: out[u] += coef * par(x & z) * par(u & z) * in[u ^ x]
        const Complex c = t.coef * parity_sign(t.x & t.z);
        if (std::abs(c.imag()) <= 1e-14 * std::abs(c))
          p.off_real.push_back({c.real(), t.x, t.z});
        else
          p.off_cplx.push_back({c, t.x, t.z});
      }
    }
    return p;
  }

  void apply(const Vector& in, Vector& out) const {
    out.array() = diag.array() * in.array();
    const Complex* xd = in.data();
    Complex* yd = out.data();
    for (const auto& t : off_real) {
      if (t.z == 0) {
        for (std::int64_t u = 0; u < dim; ++u)
          yd[u] += t.coef * xd[u ^ t.x];
      } else {
        for (std::int64_t u = 0; u < dim; ++u) {
          const double c = parity(std::uint32_t(u) & t.z) ? -t.coef : t.coef;
          yd[u] += c * xd[u ^ t.x];
        }
      }
    }
    for (const auto& t : off_cplx)
      for (std::int64_t u = 0; u < dim; ++u) {
        const Complex c = parity(std::uint32_t(u) & t.z) ? -t.coef : t.coef;
        yd[u] += c * xd[u ^ t.x];
      }
  }
};

struct CompiledEvolution {
  ApplyPlan heff;          // H - (i/2) sum_k rate_k c_k^dag c_k
  std::vector<JumpChannel> jumps;
  double dt_base = 0.0;
  std::vector<Observable> observables;
};

inline CompiledEvolution compile_evolution(const ManyBodyOperator& h_total,
                                           const std::vector<JumpChannel>& jumps,
                                           const std::vector<Observable>& observables,
                                           const McwfOptions& opts) {
  ManyBodyOperator heff = h_total;
  for (const auto& ch : jumps) {
    if (ch.rate < 0) throw ValidationError("jump rates must be >= 0");
    if (ch.rate == 0) continue;
    heff = heff + ch.op.adjoint().compose(ch.op).scaled(-0.5 * kImag * ch.rate);
  }
  CompiledEvolution c;
  c.heff = ApplyPlan::compile(heff);
  c.jumps = jumps;
  const double bound = std::max(heff.norm_bound(), 1e-12);
  c.dt_base = 0.05 * opts.dt_factor / bound;
  c.observables = observables;
  return c;
}

struct Workspace {
  Vector k1, k2, k3, k4, yt, ypre, ytry, normed;

  explicit Workspace(std::int64_t dim)
      : k1(dim), k2(dim), k3(dim), k4(dim), yt(dim), ypre(dim), ytry(dim),
        normed(dim) {}
};

// One classic RK4 step of dpsi/dt = -i H_eff psi, in place.
inline void rk4_step(const ApplyPlan& plan, Vector& y, double h, Workspace& w) {
  const Complex a1 = Complex(0, -0.5 * h);
  const Complex a2 = Complex(0, -h);
  plan.apply(y, w.k1);
  w.yt = y + a1 * w.k1;
  plan.apply(w.yt, w.k2);
  w.yt = y + a1 * w.k2;
  plan.apply(w.yt, w.k3);
  w.yt = y + a2 * w.k3;
  plan.apply(w.yt, w.k4);
  y += (a2 / 6.0) * (w.k1 + 2.0 * w.k2 + 2.0 * w.k3 + w.k4);
}

inline void validate_grid(const std::vector<double>& grid) {
  if (grid.empty() || grid[0] != 0.0)
    throw ValidationError("output grid must start at t = 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1])
      throw ValidationError("output grid must be strictly increasing");
}

// Runs one trajectory; on_sample (optional) sees the normalized state at
// every grid point, which is how ensemble rho reconstruction taps in.
inline TrajectoryResult run_single_trajectory(
    const CompiledEvolution& ev, const Vector& psi0,
    const std::vector<double>& grid, PhiloxRng rng, const McwfOptions& opts,
    Workspace& w,
    const std::function<void(int, const Vector&)>& on_sample = {}) {
  const std::int64_t dim = ev.heff.dim;
  if (psi0.size() != dim) throw ValidationError("psi0 has wrong dimension");
  if (std::abs(psi0.squaredNorm() - 1.0) > 1e-8)
    throw ValidationError("psi0 is not normalized");

  TrajectoryResult res;
  res.times = grid;
  for (const auto& ob : ev.observables) res.series_names.push_back(ob.name);
  res.series_names.push_back("jumps_cum");
  res.series.assign(res.series_names.size(),
                    std::vector<double>(grid.size(), 0.0));

  Vector psi = psi0 / psi0.norm();
  double r = rng.uniform();
  int bath_jumps = 0;

  auto sample = [&](int k) {
    const double n2 = psi.squaredNorm();
    const double inv = 1.0 / std::sqrt(n2);
    psi *= inv;
    r /= n2;  // renormalized state, rescaled survival threshold
    for (std::size_t i = 0; i < ev.observables.size(); ++i)
      res.series[i][k] = ev.observables[i].eval(psi);
    res.series.back()[k] = double(bath_jumps);
    if (on_sample) on_sample(k, psi);
  };

  sample(0);
  double t = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double t_target = grid[k];
    while (t < t_target) {
      const double h = std::min(ev.dt_base, t_target - t);
      w.ypre = psi;
      rk4_step(ev.heff, psi, h, w);
      const double n2 = psi.squaredNorm();
      if (n2 > r) {
        t += h;
        if (t_target - t < 1e-12 * ev.dt_base) t = t_target;
        continue;
      }

      // jump inside (t, t + h]: bisect the substep until |psi|^2 matches r
      double lo = 0.0, hi = h, s = h;
      double f = n2;
      w.ytry = psi;
      int iter = 0;
      while (std::abs(f - r) > opts.bisection_tol) {
        if (++iter > opts.max_bisection_iters || (hi - lo) < 1e-18 * h)
          throw IntegrationError("step-size underflow while locating a jump");
        s = 0.5 * (lo + hi);
        w.ytry = w.ypre;
        rk4_step(ev.heff, w.ytry, s, w);
        f = w.ytry.squaredNorm();
        (f > r ? lo : hi) = s;
      }
      psi = w.ytry;
      t += s;

      // channel k with probability proportional to rate_k |c_k psi|^2
      std::vector<double> weights(ev.jumps.size());
      double total = 0.0;
      for (std::size_t c = 0; c < ev.jumps.size(); ++c) {
        if (ev.jumps[c].rate == 0) {
          weights[c] = 0.0;
          continue;
        }
        w.yt.setZero();
        ev.jumps[c].op.apply_add(psi, w.yt);
        weights[c] = ev.jumps[c].rate * w.yt.squaredNorm();
        total += weights[c];
      }
      if (!(total > 0) || !std::isfinite(total))
        throw IntegrationError(
            "all jump channel weights vanished (dark-state corner)");
      const double u = rng.uniform() * total;
      std::size_t chosen = 0;
      double acc = 0.0;
      for (std::size_t c = 0; c < ev.jumps.size(); ++c) {
        acc += weights[c];
        if (u <= acc) {
          chosen = c;
          break;
        }
      }
      w.yt.setZero();
      ev.jumps[chosen].op.apply_add(psi, w.yt);
      psi = w.yt / w.yt.norm();
      res.jump_events.emplace_back(t, int(chosen));
      if (chosen == 0) ++bath_jumps;
      r = rng.uniform();
    }
    sample(int(k));
  }
  res.final_state = psi;
  return res;
}

}  // namespace detail

inline TrajectoryResult mcwf_evolve(const ManyBodyOperator& h_total,
                                    const std::vector<JumpChannel>& jumps,
                                    const Vector& psi0,
                                    const std::vector<double>& grid,
                                    std::uint64_t seed,
                                    const std::vector<Observable>& observables = {},
                                    const McwfOptions& opts = {}) {
  detail::validate_grid(grid);
  auto ev = detail::compile_evolution(h_total, jumps, observables, opts);
  detail::Workspace w(h_total.dim());
  return detail::run_single_trajectory(ev, psi0, grid, PhiloxRng(seed, 0),
                                       opts, w);
}

// ---------------------------------------------------------------------------
// Ensemble averaging

struct SeriesStats {
  std::vector<double> mean, sem;
};

struct ScalarStats {
  double mean = 0.0, sem = 0.0;
};

struct EnsembleResult {
  std::vector<double> times;
  std::map<std::string, SeriesStats> series;
  std::map<std::string, ScalarStats> scalars;  // njump_bath, bath_up_integral
  int n_traj = 0;
  std::uint64_t master_seed = 0;
  // ensemble-averaged |psi><psi| at the requested sample times
  std::vector<double> rho_times;
  std::vector<Matrix> rho;

  const SeriesStats& at(const std::string& name) const {
    auto it = series.find(name);
    if (it == series.end())
      throw ValidationError("ensemble has no series named '" + name + "'");
    return it->second;
  }
};

struct EnsembleOptions {
  int threads = 0;  // 0 = hardware concurrency
  McwfOptions mcwf;
  std::vector<int> rho_sample_indices;  // grid indices to reconstruct rho at
};

namespace detail {

struct Welford {
  std::int64_t n = 0;
  std::vector<double> mean, m2;

  explicit Welford(std::size_t len = 0) : mean(len, 0.0), m2(len, 0.0) {}

  void add(const std::vector<double>& x) {
    ++n;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / double(n);
      m2[i] += d * (x[i] - mean[i]);
    }
  }

  void merge(const Welford& other) {
    if (other.n == 0) return;
    if (n == 0) {
      *this = other;
      return;
    }
    const double na = double(n), nb = double(other.n);
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = other.mean[i] - mean[i];
      mean[i] += d * nb / (na + nb);
      m2[i] += other.m2[i] + d * d * na * nb / (na + nb);
    }
    n += other.n;
  }

  std::vector<double> sem() const {
    std::vector<double> s(mean.size(), 0.0);
    if (n >= 2)
      for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = std::sqrt(std::max(m2[i], 0.0) / double(n - 1) / double(n));
    return s;
  }
};

inline double trapezoid(const std::vector<double>& t,
                        const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 1; i < t.size(); ++i)
    acc += 0.5 * (y[i] + y[i - 1]) * (t[i] - t[i - 1]);
  return acc;
}

}  // namespace detail

// Trajectory i draws from stream (master_seed, i + 1). Accumulation is done
// in fixed-size trajectory blocks merged in index order, so any thread count
// (and any completion order) reproduces the sequential result bit for bit.
inline EnsembleResult run_ensemble(const ManyBodyOperator& h_total,
                                   const std::vector<JumpChannel>& jumps,
                                   const Vector& psi0,
                                   const std::vector<double>& grid,
                                   const std::vector<Observable>& observables,
                                   int n_traj, std::uint64_t master_seed,
                                   const EnsembleOptions& opts = {}) {
  if (n_traj < 1) throw ValidationError("n_traj must be >= 1");
  detail::validate_grid(grid);
  const auto ev = detail::compile_evolution(h_total, jumps, observables, opts.mcwf);

  constexpr int kBlock = 8;  // fixed: part of the reproducibility contract
  const int n_blocks = (n_traj + kBlock - 1) / kBlock;
  const std::size_t n_series = observables.size() + 1;
  const std::size_t n_rho = opts.rho_sample_indices.size();
  const std::int64_t dim = h_total.dim();

  int bath_up_idx = -1;
  for (std::size_t i = 0; i < observables.size(); ++i)
    if (observables[i].name == "bath_up") bath_up_idx = int(i);

  struct BlockAcc {
    std::vector<detail::Welford> series;
    detail::Welford scalars;  // [njump_bath, bath_up_integral]
    std::vector<Matrix> rho_sum;
    Vector last_final;
    int last_index = -1;
  };

  auto run_block = [&](int b, detail::Workspace& w) {
    BlockAcc acc;
    acc.series.assign(n_series, detail::Welford(grid.size()));
    acc.scalars = detail::Welford(2);
    acc.rho_sum.assign(n_rho, Matrix::Zero(dim, dim));
    const int lo = b * kBlock, hi = std::min(n_traj, lo + kBlock);
    for (int i = lo; i < hi; ++i) {
      std::function<void(int, const Vector&)> hook;
      if (n_rho > 0)
        hook = [&](int k, const Vector& psi) {
          for (std::size_t q = 0; q < n_rho; ++q)
            if (opts.rho_sample_indices[q] == k)
              acc.rho_sum[q].noalias() += psi * psi.adjoint();
        };
      TrajectoryResult tr;
      try {
        tr = detail::run_single_trajectory(
            ev, psi0, grid, PhiloxRng(master_seed, std::uint64_t(i) + 1),
            opts.mcwf, w, hook);
      } catch (const std::exception& e) {
        throw IntegrationError("trajectory " + std::to_string(i) + ": " +
                               e.what());
      }
      for (std::size_t s = 0; s < n_series; ++s)
        acc.series[s].add(tr.series[s]);
      double njump = tr.series.back().back();
      double updint = bath_up_idx >= 0
                          ? detail::trapezoid(grid, tr.series[bath_up_idx])
                          : 0.0;
      acc.scalars.add({njump, updint});
      acc.last_final = std::move(tr.final_state);
      acc.last_index = i;
    }
    return acc;
  };

  BlockAcc total;
  total.series.assign(n_series, detail::Welford(grid.size()));
  total.scalars = detail::Welford(2);
  total.rho_sum.assign(n_rho, Matrix::Zero(dim, dim));

  int threads = opts.threads > 0
                    ? opts.threads
                    : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n_blocks);

  if (threads <= 1) {
    detail::Workspace w(dim);
    for (int b = 0; b < n_blocks; ++b) {
      BlockAcc acc = run_block(b, w);
      for (std::size_t s = 0; s < n_series; ++s)
        total.series[s].merge(acc.series[s]);
      total.scalars.merge(acc.scalars);
      for (std::size_t q = 0; q < n_rho; ++q) total.rho_sum[q] += acc.rho_sum[q];
    }
  } else {
    std::mutex mu;
    std::map<int, BlockAcc> pending;
    int next_merge = 0;
    std::atomic<int> next_block{0};
    std::exception_ptr error;

    auto worker = [&] {
      detail::Workspace w(dim);
      for (;;) {
        const int b = next_block.fetch_add(1);
        if (b >= n_blocks) return;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (error) return;
        }
        BlockAcc acc;
        try {
          acc = run_block(b, w);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          return;
        }
        std::lock_guard<std::mutex> lock(mu);
        pending.emplace(b, std::move(acc));
        while (true) {
          auto it = pending.find(next_merge);
          if (it == pending.end()) break;
          for (std::size_t s = 0; s < n_series; ++s)
            total.series[s].merge(it->second.series[s]);
          total.scalars.merge(it->second.scalars);
          for (std::size_t q = 0; q < n_rho; ++q)
            total.rho_sum[q] += it->second.rho_sum[q];
          pending.erase(it);
          ++next_merge;
        }
      }
    };

    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  EnsembleResult res;
  res.times = grid;
  res.n_traj = n_traj;
  res.master_seed = master_seed;
  std::vector<std::string> names;
  for (const auto& ob : observables) names.push_back(ob.name);
  names.push_back("jumps_cum");
  for (std::size_t s = 0; s < n_series; ++s)
    res.series[names[s]] = {total.series[s].mean, total.series[s].sem()};
  const auto scalar_sem = total.scalars.sem();
  res.scalars["njump_bath"] = {total.scalars.mean[0], scalar_sem[0]};
  res.scalars["bath_up_integral"] = {total.scalars.mean[1], scalar_sem[1]};
  for (std::size_t q = 0; q < n_rho; ++q) {
    res.rho.push_back(total.rho_sum[q] / double(n_traj));
    res.rho_times.push_back(grid[opts.rho_sample_indices[q]]);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Exact Lindblad oracle (dense, small dimensions only)

struct LindbladResult {
  std::vector<double> times;
  std::vector<Matrix> rho;
};

struct LindbladOptions {
  double dt_factor = 1.0;
};

inline LindbladResult lindblad_exact_evolve(const ManyBodyOperator& h_total,
                                            const std::vector<JumpChannel>& jumps,
                                            const Matrix& rho0,
                                            const std::vector<double>& grid,
                                            const LindbladOptions& opts = {}) {
  detail::validate_grid(grid);
  const std::int64_t dim = h_total.dim();
  if (dim > 256)
    throw CapacityError("exact Lindblad integration is capped at dimension 2^8");
  if (rho0.rows() != dim || rho0.cols() != dim)
    throw ValidationError("rho0 has wrong dimension");
  if ((rho0 - rho0.adjoint().eval()).cwiseAbs().maxCoeff() > 1e-10)
    throw ValidationError("rho0 is not Hermitian");
  if (std::abs(rho0.trace().real() - 1.0) > 1e-10 ||
      std::abs(rho0.trace().imag()) > 1e-10)
    throw ValidationError("rho0 does not have unit trace");
  {
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho0, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw ValidationError("rho0 is not positive semidefinite");
  }

  const Matrix h = h_total.to_dense();
  struct Channel {
    Matrix c, cdagc;
    double rate;
  };
  std::vector<Channel> chans;
  double rate_bound = 0.0;
  for (const auto& j : jumps) {
    if (j.rate < 0) throw ValidationError("jump rates must be >= 0");
    if (j.rate == 0) continue;
    Matrix c = j.op.to_dense();
    chans.push_back({c, (c.adjoint() * c).eval(), j.rate});
    const double cb = j.op.norm_bound();
    rate_bound += j.rate * cb * cb;
  }

  const double bound = 2.0 * h_total.norm_bound() + rate_bound;
  const double dt_base = 0.05 * opts.dt_factor / std::max(bound, 1e-12);

  Matrix rho = rho0;
  Matrix k1(dim, dim), k2(dim, dim), k3(dim, dim), k4(dim, dim), tmp(dim, dim);
  auto rhs = [&](const Matrix& x, Matrix& out) {
    out.noalias() = h * x;
    out.noalias() -= x * h;
    out *= Complex(0, -1);
    for (const auto& ch : chans) {
      tmp.noalias() = ch.c * x;
      out.noalias() += ch.rate * (tmp * ch.c.adjoint());
      tmp.noalias() = ch.cdagc * x;
      out.noalias() -= (0.5 * ch.rate) * tmp;
      tmp.noalias() = x * ch.cdagc;
      out.noalias() -= (0.5 * ch.rate) * tmp;
    }
  };

  LindbladResult res;
  res.times = grid;
  res.rho.push_back(rho);
  Matrix yt(dim, dim);
  double t = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    while (t < grid[k]) {
      const double step = std::min(dt_base, grid[k] - t);
      rhs(rho, k1);
      yt = rho + (0.5 * step) * k1;
      rhs(yt, k2);
      yt = rho + (0.5 * step) * k2;
      rhs(yt, k3);
      yt = rho + step * k3;
      rhs(yt, k4);
      rho += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t += step;
      if (grid[k] - t < 1e-12 * dt_base) t = grid[k];
    }
    res.rho.push_back(rho);
  }
  if (std::abs(res.rho.back().trace().real() - 1.0) > 1e-8)
    throw IntegrationError("trace drifted beyond 1e-8 during exact integration");
  return res;
}

}  // namespace sympacool
