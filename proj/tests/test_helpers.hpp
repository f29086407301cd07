#pragma once

// Shared oracles for the test suites. Everything here builds operators by
// explicit Kronecker products, independently of the PauliTerm machinery it
// is used to check.

#include <Eigen/Dense>

#include "sympacool/pauli.hpp"

namespace sympacool::testing {

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Matrix pauli(char axis) {
  Matrix m(2, 2);
  switch (axis) {
    case 'x': m << 0, 1, 1, 0; break;
    case 'y': m << 0, Complex(0, -1), Complex(0, 1), 0; break;
    case 'z': m << 1, 0, 0, -1; break;
    case 'i': m << 1, 0, 0, 1; break;
    default: throw std::invalid_argument("axis");
  }
  return m;
}

// sigma_axis on `site` of an n-spin register, site 0 leftmost (most
// significant), built purely with Kronecker products.
inline Matrix site_op(int n_spins, int site, char axis) {
  Matrix out = Matrix::Identity(1, 1);
  for (int k = 0; k < n_spins; ++k)
    out = kron(out, pauli(k == site ? axis : 'i'));
  return out;
}

inline Eigen::VectorXd sorted_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace sympacool::testing
