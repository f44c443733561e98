#ifndef QCM_GATES_HPP
#define QCM_GATES_HPP

// Small fixed gates used by fixtures, demos and tests.

#include "qcm/channel.hpp"

namespace qcm {

inline Matrix pauli_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline Matrix pauli_y() {
  Matrix m(2, 2);
  m << Complex(0, 0), Complex(0, -1), Complex(0, 1), Complex(0, 0);
  return m;
}

inline Matrix pauli_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

inline Matrix hadamard() {
  Matrix m(2, 2);
  const double s = 1.0 / std::sqrt(2.0);
  m << s, s, s, -s;
  return m;
}

// Rotation about Y by angle theta (real rotation of the Bloch Z axis).
inline Matrix rotation_y(double theta) {
  Matrix m(2, 2);
  m << std::cos(theta / 2), -std::sin(theta / 2), std::sin(theta / 2), std::cos(theta / 2);
  return m;
}

// CNOT on (control, target), control most significant.
inline Matrix cnot() {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = 1;  // 00 -> 00
  m(1, 1) = 1;  // 01 -> 01
  m(2, 3) = 1;  // 10 -> 11
  m(3, 2) = 1;  // 11 -> 10
  return m;
}

inline Matrix swap_gate() {
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = 1;
  m(1, 2) = 1;
  m(2, 1) = 1;
  m(3, 3) = 1;
  return m;
}

inline Matrix ket_bra(int d, int i, int j) {
  Matrix m = Matrix::Zero(d, d);
  m(i, j) = 1.0;
  return m;
}

inline ComplexDense basis_state(const SystemLabel& l, int k) {
  Matrix m = Matrix::Zero(l.dim, l.dim);
  m(k, k) = 1.0;
  return {SpaceStructure({l}), std::move(m)};
}

inline ComplexDense pure_state(const SystemLabel& l, const Vector& psi) {
  Vector v = psi.normalized();
  return {SpaceStructure({l}), Matrix(v * v.adjoint())};
}

inline ComplexDense maximally_mixed(const SystemLabel& l) {
  return {SpaceStructure({l}), Matrix(Matrix::Identity(l.dim, l.dim) / double(l.dim))};
}

inline Vector plus_state() {
  Vector v(2);
  v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  return v;
}

}  // namespace qcm

#endif  // QCM_GATES_HPP
