#pragma once

// Exact diagonalization of H_sys: ground manifold, many-body gap, finite-size
// critical point via the susceptibility peak, and the cooling transition
// graph over eigenstate pairs.

#include <cstdio>
#include <deque>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "sympacool/models.hpp"
#include "sympacool/pauli.hpp"

namespace sympacool {

struct SpectrumInfo {
  Eigen::VectorXd energies;       // ascending
  Matrix ground_manifold;         // columns: orthonormal ground states
  double e0 = 0.0;
  double gap = 0.0;               // E_{manifold_dim} - E_0
  int manifold_dim = 1;
};

// Ground-manifold clustering: level k joins the manifold while
// (E_k - E_0) <= max(theta * (E_{k+1} - E_0), degeneracy noise floor).
// A relative gap-ratio rule is scale-free, which matters because the
// ferromagnetic Ising splitting closes exponentially in N.
inline constexpr double kDefaultClusterTheta = 0.1;

inline ManyBodyOperator require_hermitian(const ManyBodyOperator& op) {
  if (!op.is_hermitian())
    throw ValidationError("operator is not Hermitian");
  return op;
}

inline SpectrumInfo exact_spectrum(const ManyBodyOperator& h_sys,
                                   double cluster_theta = kDefaultClusterTheta) {
  require_hermitian(h_sys);
  if (h_sys.dim() > (1 << 14))
    throw CapacityError("exact_spectrum supports dimensions up to 2^14");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h_sys.to_dense());
  if (solver.info() != Eigen::Success)
    throw IntegrationError("eigensolver failed to converge");

  SpectrumInfo info;
  info.energies = solver.eigenvalues();
  info.e0 = info.energies[0];
  const auto dim = info.energies.size();
  const double scale =
      std::max(std::abs(info.energies[0]), std::abs(info.energies[dim - 1]));
  const double degeneracy_floor = 1e-12 * std::max(scale, 1.0);

  int m = 1;
  while (m + 1 < dim) {
    const double ek = info.energies[m] - info.e0;
    const double next = info.energies[m + 1] - info.e0;
    if (ek <= std::max(cluster_theta * next, degeneracy_floor))
      ++m;
    else
      break;
  }
  if (m >= dim)
    throw ValidationError("spectrum has no gap above the ground manifold");
  info.manifold_dim = m;
  info.gap = info.energies[m] - info.e0;
  info.ground_manifold = solver.eigenvectors().leftCols(m);
  return info;
}

// Pi_g = sum_i |psi_0^i><psi_0^i| on the system space; pass extra_sites = 1
// for the joint system-plus-bath register.
inline ManyBodyOperator ground_projector(const SpectrumInfo& spec,
                                         int extra_sites = 0) {
  const auto dim = spec.ground_manifold.rows();
  int n_spins = 0;
  while ((std::int64_t{1} << n_spins) < dim) ++n_spins;
  Matrix p = spec.ground_manifold * spec.ground_manifold.adjoint();
  auto op = ManyBodyOperator::from_dense(n_spins, std::move(p));
  return extra_sites > 0 ? op.embed_append(extra_sites) : op;
}

// chi(g) = -d^2 E_0 / dg^2 by central differences with step 1e-3 * g.
struct SusceptibilityPoint {
  double g = 0.0;
  double chi = 0.0;
};

struct SusceptibilityScan {
  std::vector<SusceptibilityPoint> points;
  double peak_g = 0.0;
};

inline double ground_energy(const ModelSpec& spec) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(
      build_system_hamiltonian(spec).to_dense(), Eigen::EigenvaluesOnly);
  return solver.eigenvalues()[0];
}

inline SusceptibilityScan susceptibility_scan(const ModelSpec& base,
                                              const std::vector<double>& g_grid) {
  if (base.kind != ModelKind::TransverseIsing)
    throw ValidationError("susceptibility scan requires the transverse Ising kind");
  if (g_grid.size() < 3)
    throw ValidationError("susceptibility grid needs at least 3 points");
  SusceptibilityScan scan;
  double best = -1.0;
  for (double g : g_grid) {
    const double h = 1e-3 * g;
    ModelSpec m = base;
    m.g = g - h;
    const double lo = ground_energy(m);
    m.g = g;
    const double mid = ground_energy(m);
    m.g = g + h;
    const double hi = ground_energy(m);
    const double chi = -(hi - 2.0 * mid + lo) / (h * h);
    scan.points.push_back({g, chi});
    if (chi > best) {
      best = chi;
      scan.peak_g = g;
    }
  }
  return scan;
}

struct TransitionEdge {
  int from = 0;  // higher-energy eigenstate
  int to = 0;
  double e_from = 0.0;
  double e_to = 0.0;
};

struct TransitionGraph {
  double delta = 0.0;
  double gamma = 0.0;
  Eigen::VectorXd energies;
  std::vector<TransitionEdge> edges;
  // reachable[i]: a directed path from eigenstate i into the ground manifold
  std::vector<bool> reachable;
  int manifold_dim = 1;
};

// All ordered pairs with E_i - E_j inside the closed window [delta - gamma,
// delta + gamma], plus ground-manifold reachability along those edges.
inline TransitionGraph cooling_transition_graph(const SpectrumInfo& spec,
                                                double delta, double gamma) {
  if (gamma < 0) throw ValidationError("gamma must be >= 0");
  TransitionGraph g;
  g.delta = delta;
  g.gamma = gamma;
  g.energies = spec.energies;
  g.manifold_dim = spec.manifold_dim;
  const int dim = int(spec.energies.size());
  std::vector<std::vector<int>> succ(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      if (i == j) continue;
      const double de = spec.energies[i] - spec.energies[j];
      if (de >= delta - gamma && de <= delta + gamma) {
        g.edges.push_back({i, j, spec.energies[i], spec.energies[j]});
        succ[i].push_back(j);
      }
    }
  g.reachable.assign(dim, false);
  // BFS backwards from the manifold
  std::deque<int> queue;
  for (int i = 0; i < spec.manifold_dim; ++i) {
    g.reachable[i] = true;
    queue.push_back(i);
  }
  std::vector<std::vector<int>> pred(dim);
  for (const auto& e : g.edges) pred[e.to].push_back(e.from);
  while (!queue.empty()) {
    const int j = queue.front();
    queue.pop_front();
    for (int i : pred[j])
      if (!g.reachable[i]) {
        g.reachable[i] = true;
        queue.push_back(i);
      }
  }
  return g;
}

// Edge-list text format: header with the window, one "i j E_i E_j" row per edge.
inline void write_edge_list(std::ostream& os, const TransitionGraph& g) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "# delta = %.17g gamma = %.17g\n", g.delta, g.gamma);
  os << buf;
  for (const auto& e : g.edges) {
    std::snprintf(buf, sizeof buf, "%d %d %.17g %.17g\n", e.from, e.to, e.e_from, e.e_to);
    os << buf;
  }
}

}  // namespace sympacool
