#pragma once

// Model, bath and noise descriptions plus the Hamiltonian / jump-operator
// builders. The joint register holds the N system spins followed by one bath
// spin at site index N (least significant bit).

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sympacool/pauli.hpp"

namespace sympacool {

enum class ModelKind { TransverseIsing, PowerLawIsing, Heisenberg };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::TransverseIsing: return "transverse_ising";
    case ModelKind::PowerLawIsing: return "power_law_ising";
    case ModelKind::Heisenberg: return "heisenberg";
  }
  return "?";
}

struct ModelSpec {
  ModelKind kind = ModelKind::TransverseIsing;
  int n_sites = 1;
  double g = 1.0;        // transverse field (Ising kinds)
  double j = 1.0;        // coupling
  double alpha_lr = 6.0; // power-law exponent (PowerLawIsing only)
  int max_sites = 14;    // capacity guard for the dense machinery

  // g for the Ising family, J for Heisenberg; times are quoted in units of
  // its inverse.
  double energy_scale() const {
    return kind == ModelKind::Heisenberg ? j : g;
  }

  void validate() const {
    if (n_sites < 1) throw ValidationError("model.n must be >= 1");
    if (n_sites > max_sites)
      throw CapacityError("model.n = " + std::to_string(n_sites) +
                          " exceeds the configured cap of " +
                          std::to_string(max_sites));
    if (j <= 0) throw ValidationError("model.j must be > 0");
    if (kind != ModelKind::Heisenberg && g <= 0)
      throw ValidationError("model.g must be > 0 for the Ising kinds");
    if (kind == ModelKind::PowerLawIsing && alpha_lr < 0)
      throw ValidationError("model.alpha_lr must be >= 0");
  }
};

struct SiteWeight {
  int site = 0;
  double weight = 1.0;
};

struct BathSpec {
  std::optional<double> delta;  // empty = "auto": resolve to the many-body gap
  double gamma = 1.0;
  double g_sb = 1.0;
  double fx = 1.0, fy = 1.1, fz = 0.9;
  std::vector<SiteWeight> site_weights;  // empty = model default

  // Slightly unequal f components avoid interaction symmetries that would
  // decouple degrees of freedom; the bath attaches to the chain end, and for
  // Heisenberg also to the second-last site at half strength.
  static BathSpec defaults_for(ModelKind kind, int n_sites) {
    BathSpec b;
    if (kind == ModelKind::Heisenberg) {
      b.fx = 0.4; b.fy = 2.3; b.fz = 0.3;
      b.site_weights = {{n_sites - 1, 1.0}};
      if (n_sites >= 2) b.site_weights.push_back({n_sites - 2, 0.5});
    } else {
      b.fx = 1.0; b.fy = 1.1; b.fz = 0.9;
      b.site_weights = {{n_sites - 1, 1.0}};
    }
    return b;
  }

  std::vector<SiteWeight> resolved_sites(ModelKind kind, int n_sites) const {
    auto sw = site_weights.empty()
                  ? defaults_for(kind, n_sites).site_weights
                  : site_weights;
    for (const auto& [site, weight] : sw) {
      if (site < 0 || site >= n_sites)
        throw ValidationError("bath.sites index " + std::to_string(site) +
                              " outside [0, " + std::to_string(n_sites - 1) + "]");
      if (weight <= 0) throw ValidationError("bath.sites weights must be > 0");
    }
    return sw;
  }

  void validate() const {
    if (gamma < 0) throw ValidationError("bath.gamma must be >= 0");
    if (g_sb < 0) throw ValidationError("bath.g_sb must be >= 0");
  }
};

struct DecoherenceSpec {
  double kappa = 0.0;    // per-site sigma_z rate
  double kappa_c = 0.0;  // collective sigma_z rate

  void validate() const {
    if (kappa < 0) throw ValidationError("noise.kappa must be >= 0");
    if (kappa_c < 0) throw ValidationError("noise.kappa_c must be >= 0");
  }
};

// H_sys on the N-site system register (no bath).
inline ManyBodyOperator build_system_hamiltonian(const ModelSpec& spec) {
  spec.validate();
  const int n = spec.n_sites;
  std::vector<PauliTerm> terms;
  switch (spec.kind) {
    case ModelKind::TransverseIsing:
      for (int i = 0; i < n; ++i)
        terms.push_back({spec.g, 0, site_mask(n, i)});
      for (int i = 0; i + 1 < n; ++i)
        terms.push_back({-spec.j, site_mask(n, i) | site_mask(n, i + 1), 0});
      break;
    case ModelKind::PowerLawIsing:
      for (int i = 0; i < n; ++i)
        terms.push_back({spec.g, 0, site_mask(n, i)});
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          terms.push_back({-spec.j / std::pow(double(j - i), spec.alpha_lr),
                           site_mask(n, i) | site_mask(n, j), 0});
      break;
    case ModelKind::Heisenberg:
      for (int i = 0; i + 1 < n; ++i) {
        const auto mi = site_mask(n, i), mj = site_mask(n, i + 1);
        terms.push_back({spec.j, mi | mj, 0});           // xx
        terms.push_back({-spec.j, mi | mj, mi | mj});    // yy
        terms.push_back({spec.j, 0, mi | mj});           // zz
      }
      break;
  }
  return ManyBodyOperator::from_terms(n, std::move(terms));
}

// (delta/2) sigma_z on the bath site of an (n_sites + 1)-spin register.
inline ManyBodyOperator build_bath_hamiltonian(double delta, int n_sites) {
  const int n = n_sites + 1;
  return ManyBodyOperator::from_terms(n, {{0.5 * delta, 0, site_mask(n, n_sites)}});
}

// sum over coupled sites s: w_s g_sb (fx XX + fy YY + fz ZZ) between s and bath.
inline ManyBodyOperator build_interaction_hamiltonian(const BathSpec& bath,
                                                      ModelKind kind,
                                                      int n_sites) {
  bath.validate();
  const auto sites = bath.resolved_sites(kind, n_sites);
  if (sites.empty()) throw ValidationError("bath.sites must be non-empty");
  const int n = n_sites + 1;
  const auto mb = site_mask(n, n_sites);
  std::vector<PauliTerm> terms;
  for (const auto& [site, weight] : sites) {
    const auto ms = site_mask(n, site);
    const double c = weight * bath.g_sb;
    terms.push_back({c * bath.fx, ms | mb, 0});
    terms.push_back({-c * bath.fy, ms | mb, ms | mb});
    terms.push_back({c * bath.fz, 0, ms | mb});
  }
  return ManyBodyOperator::from_terms(n, std::move(terms));
}

struct JumpChannel {
  ManyBodyOperator op;  // bare operator c (not rate-scaled)
  double rate = 0.0;

  ManyBodyOperator scaled_op() const { return op.scaled(std::sqrt(rate)); }
};

// Channel 0 is always the bath decay sigma_-^(b) with rate gamma; per-site and
// collective sigma_z dephasing channels follow when their rates are nonzero.
inline std::vector<JumpChannel> build_jump_operators(const BathSpec& bath,
                                                     const DecoherenceSpec& noise,
                                                     int n_sites) {
  bath.validate();
  noise.validate();
  const int n = n_sites + 1;
  std::vector<JumpChannel> out;
  out.push_back({sigma_minus(n, n_sites), bath.gamma});
  if (noise.kappa > 0)
    for (int i = 0; i < n_sites; ++i)
      out.push_back({sigma_z(n, i), noise.kappa});
  if (noise.kappa_c > 0) {
    std::vector<PauliTerm> terms;
    for (int i = 0; i < n_sites; ++i)
      terms.push_back({1.0, 0, site_mask(n, i)});
    out.push_back({ManyBodyOperator::from_terms(n, std::move(terms)), noise.kappa_c});
  }
  return out;
}

}  // namespace sympacool
