#pragma once

// Many-spin operators as sums of Pauli strings, plus a dense fallback for
// operators (projectors) that have no compact string form.
//
// Basis convention, fixed across the whole library:
//   - |up> is the sigma_z = +1 eigenstate and carries bit value 0.
//   - Site ordering is big-endian: site 0 is the most significant bit, so
//     the all-up product state is basis index 0 and appending a spin at the
//     end of the chain appends the least significant bit.

#include <algorithm>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sympacool {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXcd;
using Matrix = Eigen::MatrixXcd;

inline constexpr Complex kImag{0.0, 1.0};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IntegrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotConvergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Hard cap on total spins: masks are 32-bit and dense eigensolvers stop
// being viable long before that.
inline constexpr int kMaxSpins = 24;

inline int site_bit(int n_spins, int site) { return n_spins - 1 - site; }

inline std::uint32_t site_mask(int n_spins, int site) {
  return 1u << site_bit(n_spins, site);
}

inline int parity(std::uint32_t v) { return __builtin_parity(v); }

// sign = (-1)^popcount(v)
inline double parity_sign(std::uint32_t v) { return parity(v) ? -1.0 : 1.0; }

// One Pauli string coef * X(x) Z(z), with Z acting first:
//   P|s> = coef * (-1)^popcount(s & z) |s ^ x>
// sigma_x -> X, sigma_z -> Z, sigma_y -> i X Z on the same site.
struct PauliTerm {
  Complex coef;
  std::uint32_t x = 0;
  std::uint32_t z = 0;
};

class ManyBodyOperator {
 public:
  ManyBodyOperator() = default;

  static ManyBodyOperator from_terms(int n_spins, std::vector<PauliTerm> terms) {
    check_spin_count(n_spins);
    ManyBodyOperator op;
    op.n_spins_ = n_spins;
    op.dim_ = std::int64_t{1} << n_spins;
    op.terms_ = canonicalize(std::move(terms));
    return op;
  }

  static ManyBodyOperator from_dense(int n_spins, Matrix m) {
    check_spin_count(n_spins);
    const auto dim = std::int64_t{1} << n_spins;
    if (m.rows() != dim || m.cols() != dim)
      throw ValidationError("dense operator has wrong dimension");
    ManyBodyOperator op;
    op.n_spins_ = n_spins;
    op.dim_ = dim;
    op.dense_ = std::move(m);
    op.is_dense_ = true;
    return op;
  }

  static ManyBodyOperator zero(int n_spins) { return from_terms(n_spins, {}); }

  static ManyBodyOperator identity(int n_spins) {
    return from_terms(n_spins, {{1.0, 0, 0}});
  }

  int n_spins() const { return n_spins_; }
  std::int64_t dim() const { return dim_; }
  bool is_dense() const { return is_dense_; }
  const std::vector<PauliTerm>& terms() const {
    if (is_dense_) throw ValidationError("dense operator has no Pauli terms");
    return terms_;
  }

  // y += A x
  void apply_add(const Vector& x, Vector& y) const {
    if (x.size() != dim_ || y.size() != dim_)
      throw ValidationError("operator/state dimension mismatch");
    if (is_dense_) {
      y.noalias() += dense_ * x;
      return;
    }
    for (const auto& t : terms_) {
      if (t.x == 0 && t.z == 0) {
        y += t.coef * x;
      } else if (t.x == 0) {
        for (std::int64_t s = 0; s < dim_; ++s)
          y[s] += t.coef * parity_sign(std::uint32_t(s) & t.z) * x[s];
      } else {
        for (std::int64_t s = 0; s < dim_; ++s)
          y[s ^ t.x] += t.coef * parity_sign(std::uint32_t(s) & t.z) * x[s];
      }
    }
  }

  Vector apply(const Vector& x) const {
    Vector y = Vector::Zero(dim_);
    apply_add(x, y);
    return y;
  }

  Matrix to_dense() const {
    if (is_dense_) return dense_;
    Matrix m = Matrix::Zero(dim_, dim_);
    for (const auto& t : terms_)
      for (std::int64_t s = 0; s < dim_; ++s)
        m(s ^ t.x, s) += t.coef * parity_sign(std::uint32_t(s) & t.z);
    return m;
  }

  ManyBodyOperator adjoint() const {
    if (is_dense_) return from_dense(n_spins_, dense_.adjoint());
    std::vector<PauliTerm> adj = terms_;
    // (coef X(x) Z(z))^dag = conj(coef) (-1)^|x & z| X(x) Z(z)
    for (auto& t : adj) t.coef = std::conj(t.coef) * parity_sign(t.x & t.z);
    return from_terms(n_spins_, std::move(adj));
  }

  ManyBodyOperator scaled(Complex c) const {
    if (is_dense_) return from_dense(n_spins_, c * dense_);
    std::vector<PauliTerm> ts = terms_;
    for (auto& t : ts) t.coef *= c;
    return from_terms(n_spins_, std::move(ts));
  }

  ManyBodyOperator operator+(const ManyBodyOperator& other) const {
    require_same_space(other);
    if (is_dense_ || other.is_dense_)
      return from_dense(n_spins_, to_dense() + other.to_dense());
    std::vector<PauliTerm> ts = terms_;
    ts.insert(ts.end(), other.terms_.begin(), other.terms_.end());
    return from_terms(n_spins_, std::move(ts));
  }

  ManyBodyOperator operator-(const ManyBodyOperator& other) const {
    return *this + other.scaled(-1.0);
  }

  // Pauli-string product: X(x1)Z(z1) X(x2)Z(z2) = (-1)^|z1 & x2| X(x1^x2) Z(z1^z2)
  ManyBodyOperator compose(const ManyBodyOperator& other) const {
    require_same_space(other);
    if (is_dense_ || other.is_dense_)
      return from_dense(n_spins_, to_dense() * other.to_dense());
    std::vector<PauliTerm> out;
    out.reserve(terms_.size() * other.terms_.size());
    for (const auto& a : terms_)
      for (const auto& b : other.terms_)
        out.push_back({a.coef * b.coef * parity_sign(a.z & b.x),
                       a.x ^ b.x, a.z ^ b.z});
    return from_terms(n_spins_, std::move(out));
  }

  // Same operator acting on a space with `extra` spins appended at the end
  // of the chain (identity on the new sites).
  ManyBodyOperator embed_append(int extra) const {
    check_spin_count(n_spins_ + extra);
    if (is_dense_) {
      const std::int64_t sub = std::int64_t{1} << extra;
      Matrix m = Matrix::Zero(dim_ * sub, dim_ * sub);
      for (std::int64_t r = 0; r < dim_; ++r)
        for (std::int64_t c = 0; c < dim_; ++c)
          if (dense_(r, c) != 0.0)
            for (std::int64_t b = 0; b < sub; ++b)
              m(r * sub + b, c * sub + b) = dense_(r, c);
      return from_dense(n_spins_ + extra, std::move(m));
    }
    std::vector<PauliTerm> ts = terms_;
    for (auto& t : ts) {
      t.x <<= extra;
      t.z <<= extra;
    }
    return from_terms(n_spins_ + extra, std::move(ts));
  }

  // Exact for Pauli sums (term algebra), elementwise for dense.
  double hermiticity_error() const {
    if (is_dense_) return (dense_ - dense_.adjoint().eval()).cwiseAbs().maxCoeff();
    double err = 0.0;
    for (const auto& t : terms_) {
      const Complex adj = std::conj(t.coef) * parity_sign(t.x & t.z);
      err = std::max(err, std::abs(t.coef - adj));
    }
    return err;
  }

  bool is_hermitian(double tol = 1e-12) const {
    const double scale = std::max(max_abs_coef(), 1e-300);
    return hermiticity_error() < tol * scale;
  }

  // Upper bound on the spectral norm: sum of |coef| (each string is unitary).
  double norm_bound() const {
    if (is_dense_) return dense_.cwiseAbs().rowwise().sum().maxCoeff();
    double s = 0.0;
    for (const auto& t : terms_) s += std::abs(t.coef);
    return s;
  }

  double max_abs_coef() const {
    if (is_dense_) return dense_.size() ? dense_.cwiseAbs().maxCoeff() : 0.0;
    double m = 0.0;
    for (const auto& t : terms_) m = std::max(m, std::abs(t.coef));
    return m;
  }

 private:
  static void check_spin_count(int n_spins) {
    if (n_spins < 0 || n_spins > kMaxSpins)
      throw CapacityError("spin count " + std::to_string(n_spins) +
                          " outside supported range [0, " +
                          std::to_string(kMaxSpins) + "]");
  }

  void require_same_space(const ManyBodyOperator& other) const {
    if (n_spins_ != other.n_spins_)
      throw ValidationError("operators act on different spin counts");
  }

  static std::vector<PauliTerm> canonicalize(std::vector<PauliTerm> ts) {
    std::sort(ts.begin(), ts.end(), [](const PauliTerm& a, const PauliTerm& b) {
      return a.x != b.x ? a.x < b.x : a.z < b.z;
    });
    std::vector<PauliTerm> out;
    for (const auto& t : ts) {
      if (!out.empty() && out.back().x == t.x && out.back().z == t.z)
        out.back().coef += t.coef;
      else
        out.push_back(t);
    }
    std::erase_if(out, [](const PauliTerm& t) {
      return std::abs(t.coef) < 1e-300;
    });
    return out;
  }

  int n_spins_ = 0;
  std::int64_t dim_ = 1;
  std::vector<PauliTerm> terms_;
  Matrix dense_;
  bool is_dense_ = false;
};

// Single-site generators embedded in an n_spins register.

inline ManyBodyOperator sigma_x(int n_spins, int site) {
  return ManyBodyOperator::from_terms(n_spins, {{1.0, site_mask(n_spins, site), 0}});
}

inline ManyBodyOperator sigma_y(int n_spins, int site) {
  const auto m = site_mask(n_spins, site);
  return ManyBodyOperator::from_terms(n_spins, {{kImag, m, m}});
}

inline ManyBodyOperator sigma_z(int n_spins, int site) {
  return ManyBodyOperator::from_terms(n_spins, {{1.0, 0, site_mask(n_spins, site)}});
}

// sigma_- |up> = |down>, sigma_- |down> = 0
inline ManyBodyOperator sigma_minus(int n_spins, int site) {
  const auto m = site_mask(n_spins, site);
  return ManyBodyOperator::from_terms(n_spins, {{0.5, m, 0}, {0.5, m, m}});
}

inline ManyBodyOperator sigma_plus(int n_spins, int site) {
  const auto m = site_mask(n_spins, site);
  return ManyBodyOperator::from_terms(n_spins, {{0.5, m, 0}, {-0.5, m, m}});
}

// Two-site coupling sigma_a^(i) sigma_a^(j), a in {x,y,z}.
inline ManyBodyOperator pauli_pair(int n_spins, char axis, int i, int j) {
  const auto mi = site_mask(n_spins, i), mj = site_mask(n_spins, j);
  switch (axis) {
    case 'x': return ManyBodyOperator::from_terms(n_spins, {{1.0, mi | mj, 0}});
    case 'y': return ManyBodyOperator::from_terms(n_spins, {{-1.0, mi | mj, mi | mj}});
    case 'z': return ManyBodyOperator::from_terms(n_spins, {{1.0, 0, mi | mj}});
    default: throw ValidationError("unknown Pauli axis");
  }
}

}  // namespace sympacool
