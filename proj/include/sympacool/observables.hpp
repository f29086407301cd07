#pragma once

// Measured quantities: expectations, ground-manifold fidelity, dimensionless
// excitation energy, dissipated energy by jump counting and by up-population
// integration, and entanglement negativity of reconstructed density matrices.

#include <cmath>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "sympacool/dynamics.hpp"
#include "sympacool/pauli.hpp"
#include "sympacool/spectrum.hpp"

namespace sympacool {

inline double expectation(const Vector& psi, const ManyBodyOperator& op) {
  if (psi.size() != op.dim())
    throw ValidationError("state/operator dimension mismatch");
  if (!op.is_hermitian())
    throw ValidationError("expectation requires a Hermitian operator");
  const Complex v = psi.dot(op.apply(psi));
  if (std::abs(v.imag()) > 1e-10 * std::max(1.0, std::abs(v.real())))
    throw IntegrationError("expectation value has a non-negligible imaginary part");
  return v.real();
}

inline double expectation(const Matrix& rho, const ManyBodyOperator& op) {
  if (rho.rows() != op.dim())
    throw ValidationError("state/operator dimension mismatch");
  if (!op.is_hermitian())
    throw ValidationError("expectation requires a Hermitian operator");
  const Complex v = (op.to_dense() * rho).trace();
  if (std::abs(v.imag()) > 1e-10 * std::max(1.0, std::abs(v.real())))
    throw IntegrationError("expectation value has a non-negligible imaginary part");
  return v.real();
}

// f = <Pi_g> = tr(rho Pi_g); clamped only against roundoff spill.
inline double fidelity(const Vector& psi, const ManyBodyOperator& projector) {
  const double f = std::real(psi.dot(projector.apply(psi)));
  return std::clamp(f, 0.0, 1.0);
}

inline double fidelity(const Matrix& rho, const ManyBodyOperator& projector) {
  const double f = std::real((projector.to_dense() * rho).trace());
  return std::clamp(f, 0.0, 1.0);
}

// epsilon = (<H_sys> - E_0) / Delta_E
inline double epsilon(double energy, const SpectrumInfo& spec) {
  if (!(spec.gap > 0)) throw ValidationError("epsilon requires a positive gap");
  return (energy - spec.e0) / spec.gap;
}

enum class DissipationMethod { DirectCount, UpPopulationIntegral };

struct DissipationEstimate {
  double n_jump_count = 0.0;     // ensemble-mean bath jump count
  double n_jump_count_sem = 0.0;
  double n_jump_integral = 0.0;  // gamma * integral of <sigma_+ sigma_->
  double n_jump_integral_sem = 0.0;
  double delta = 0.0;

  double e_dis(DissipationMethod m) const {
    return delta * (m == DissipationMethod::DirectCount ? n_jump_count
                                                        : n_jump_integral);
  }
  double e_dis_sem(DissipationMethod m) const {
    return delta * (m == DissipationMethod::DirectCount ? n_jump_count_sem
                                                        : n_jump_integral_sem);
  }
  double combined_njump_sem() const {
    return std::hypot(n_jump_count_sem, n_jump_integral_sem);
  }
};

// Both estimators of E_dis = N_jump * Delta. The integral route needs the
// bath_up series to have been tracked.
inline DissipationEstimate dissipated_energy(const EnsembleResult& ens,
                                             double delta, double gamma) {
  auto cnt = ens.scalars.find("njump_bath");
  auto upd = ens.scalars.find("bath_up_integral");
  if (cnt == ens.scalars.end() || upd == ens.scalars.end() ||
      ens.series.find("bath_up") == ens.series.end())
    throw ValidationError("ensemble lacks the bath_up series");
  DissipationEstimate d;
  d.delta = delta;
  d.n_jump_count = cnt->second.mean;
  d.n_jump_count_sem = cnt->second.sem;
  d.n_jump_integral = gamma * upd->second.mean;
  d.n_jump_integral_sem = gamma * upd->second.sem;
  return d;
}

// ---------------------------------------------------------------------------
// Density-matrix manipulation (negativity backend)

// Trace out the given sites; remaining sites keep their relative order.
inline Matrix partial_trace(const Matrix& rho, int n_spins,
                            const std::set<int>& traced_sites) {
  const std::int64_t dim = std::int64_t{1} << n_spins;
  if (rho.rows() != dim || rho.cols() != dim)
    throw ValidationError("density matrix has wrong dimension");
  for (int s : traced_sites)
    if (s < 0 || s >= n_spins)
      throw ValidationError("traced site index out of range");
  const int n_keep = n_spins - int(traced_sites.size());
  std::vector<int> keep_bits, trace_bits;
  for (int site = 0; site < n_spins; ++site) {
    if (traced_sites.count(site))
      trace_bits.push_back(site_bit(n_spins, site));
    else
      keep_bits.push_back(site_bit(n_spins, site));
  }
  // keep_bits is descending => kept sites stay big-endian in the result
  const std::int64_t dk = std::int64_t{1} << n_keep;
  const std::int64_t dt = std::int64_t{1} << trace_bits.size();
  auto scatter = [](std::int64_t compact, const std::vector<int>& bits) {
    std::int64_t out = 0;
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (compact & (std::int64_t{1} << (bits.size() - 1 - i))) out |= std::int64_t{1} << bits[i];
    return out;
  };
  Matrix out = Matrix::Zero(dk, dk);
  for (std::int64_t r = 0; r < dk; ++r) {
    const std::int64_t rb = scatter(r, keep_bits);
    for (std::int64_t c = 0; c < dk; ++c) {
      const std::int64_t cb = scatter(c, keep_bits);
      Complex acc = 0.0;
      for (std::int64_t m = 0; m < dt; ++m) {
        const std::int64_t mb = scatter(m, trace_bits);
        acc += rho(rb | mb, cb | mb);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

// Transpose the indices belonging to block_a.
inline Matrix partial_transpose(const Matrix& rho, int n_spins,
                                const std::set<int>& block_a) {
  const std::int64_t dim = std::int64_t{1} << n_spins;
  if (rho.rows() != dim || rho.cols() != dim)
    throw ValidationError("density matrix has wrong dimension");
  std::uint32_t a_mask = 0;
  for (int s : block_a) {
    if (s < 0 || s >= n_spins)
      throw ValidationError("block_a site index out of range");
    a_mask |= site_mask(n_spins, s);
  }
  Matrix out(dim, dim);
  for (std::int64_t r = 0; r < dim; ++r)
    for (std::int64_t c = 0; c < dim; ++c) {
      const std::int64_t rt = (r & ~std::int64_t(a_mask)) | (c & a_mask);
      const std::int64_t ct = (c & ~std::int64_t(a_mask)) | (r & a_mask);
      out(rt, ct) = rho(r, c);
    }
  return out;
}

struct BipartitionSpec {
  std::set<int> traced_sites;  // default: the bath spin (last site)
  std::set<int> block_a;       // default: first floor(n/2) remaining sites

  static BipartitionSpec default_for(int n_spins_joint) {
    BipartitionSpec b;
    b.traced_sites = {n_spins_joint - 1};
    const int remaining = n_spins_joint - 1;
    for (int i = 0; i < remaining / 2; ++i) b.block_a.insert(i);
    return b;
  }
};

// N(rho) = (|rho^{T_A}|_1 - 1) / 2 after tracing out traced_sites. block_a
// indices refer to the remaining sites after the trace.
inline double negativity(const Matrix& rho, int n_spins,
                         const BipartitionSpec& split) {
  Matrix reduced = split.traced_sites.empty()
                       ? rho
                       : partial_trace(rho, n_spins, split.traced_sites);
  const int n_red = n_spins - int(split.traced_sites.size());
  if (split.block_a.empty() || int(split.block_a.size()) >= n_red)
    throw ValidationError("block_a must be a proper nonempty subset");
  Matrix pt = partial_transpose(reduced, n_red, split.block_a);
  Eigen::SelfAdjointEigenSolver<Matrix> es((0.5 * (pt + pt.adjoint())).eval(),
                                           Eigen::EigenvaluesOnly);
  const double trace_norm = es.eigenvalues().cwiseAbs().sum();
  return std::max(0.0, 0.5 * (trace_norm - 1.0));
}

// PSD repair diagnostic for trajectory-reconstructed density matrices:
// clips negative eigenvalues, renormalizes, and reports the clipped mass.
struct PsdReport {
  Matrix rho;
  double clipped_mass = 0.0;
};

inline PsdReport clip_to_psd(const Matrix& rho) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(
      (0.5 * (rho + rho.adjoint())).eval());
  Eigen::VectorXd ev = es.eigenvalues();
  double clipped = 0.0;
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i] < 0) {
      clipped += -ev[i];
      ev[i] = 0.0;
    }
  Matrix fixed = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
  const double tr = fixed.trace().real();
  if (tr > 0) fixed /= tr;
  return {std::move(fixed), clipped};
}

}  // namespace sympacool
