#ifndef QCM_TEST_HELPERS_HPP
#define QCM_TEST_HELPERS_HPP

// Shared oracles for the test suites. These reimplement contracted behavior
// by brute force, independently of the library code paths they check.

#include "qcm/channel.hpp"
#include "qcm/gates.hpp"

#include <map>
#include <vector>

namespace qcm_test {

using namespace qcm;

inline double mat_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Brute-force partial trace by direct index summation: factor digits are
// decoded one at a time, no stride precomputation shared with the library.
inline Matrix partial_trace_oracle(const ComplexDense& m, const std::vector<std::string>& over) {
  const auto& fs = m.structure.factors();
  const int nf = m.structure.size();
  std::vector<int> dims(nf);
  for (int i = 0; i < nf; ++i) dims[i] = fs[i].dim;

  auto digits = [&](long flat) {
    std::vector<int> d(nf);
    for (int i = nf - 1; i >= 0; --i) {
      d[i] = flat % dims[i];
      flat /= dims[i];
    }
    return d;
  };

  std::vector<bool> traced(nf, false);
  for (const auto& n : over) traced[m.structure.find(n)] = true;

  int kept_dim = 1;
  for (int i = 0; i < nf; ++i)
    if (!traced[i]) kept_dim *= dims[i];

  auto kept_index = [&](const std::vector<int>& d) {
    long idx = 0;
    for (int i = 0; i < nf; ++i)
      if (!traced[i]) idx = idx * dims[i] + d[i];
    return idx;
  };

  Matrix out = Matrix::Zero(kept_dim, kept_dim);
  const int total = m.dim();
  for (long r = 0; r < total; ++r)
    for (long c = 0; c < total; ++c) {
      auto dr = digits(r), dc = digits(c);
      bool diag = true;
      for (int i = 0; i < nf; ++i)
        if (traced[i] && dr[i] != dc[i]) diag = false;
      if (diag) out(kept_index(dr), kept_index(dc)) += m.mat(r, c);
    }
  return out;
}

// Kraus action oracle for channel application.
inline Matrix kraus_action_oracle(const std::vector<Matrix>& kraus, const Matrix& rho) {
  Matrix out = Matrix::Zero(kraus[0].rows(), kraus[0].rows());
  for (const auto& k : kraus) out += k * rho * k.adjoint();
  return out;
}

// Eq. 5 built in a rotated basis {U|i>} with the conjugate dual basis.
inline Matrix choi_in_rotated_basis(const std::vector<Matrix>& kraus, const Matrix& u) {
  const int din = static_cast<int>(u.rows());
  const int dout = static_cast<int>(kraus[0].rows());
  Matrix rho = Matrix::Zero(dout * din, dout * din);
  for (int i = 0; i < din; ++i)
    for (int j = 0; j < din; ++j) {
      Matrix eij = u.col(i) * u.col(j).adjoint();
      Matrix body = Matrix::Zero(dout, dout);
      for (const auto& k : kraus) body += k * eij * k.adjoint();
      Vector di = u.col(i).conjugate();
      Vector dj = u.col(j).conjugate();
      Matrix dual_part = di * dj.adjoint();
      for (int b = 0; b < dout; ++b)
        for (int b2 = 0; b2 < dout; ++b2)
          for (int a = 0; a < din; ++a)
            for (int a2 = 0; a2 < din; ++a2)
              rho(b * din + a, b2 * din + a2) += body(b, b2) * dual_part(a, a2);
    }
  return rho;
}

// Spanning set of pure states for channel-equality checks.
inline std::vector<Matrix> spanning_states(int d) {
  std::vector<Matrix> states;
  for (int i = 0; i < d; ++i) {
    Vector v = Vector::Zero(d);
    v(i) = 1.0;
    states.push_back(v * v.adjoint());
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      Vector v = Vector::Zero(d);
      v(i) = 1.0 / std::sqrt(2.0);
      v(j) = 1.0 / std::sqrt(2.0);
      states.push_back(v * v.adjoint());
      Vector w = Vector::Zero(d);
      w(i) = 1.0 / std::sqrt(2.0);
      w(j) = Complex(0.0, 1.0 / std::sqrt(2.0));
      states.push_back(w * w.adjoint());
    }
  return states;
}

// The incoherent copy instrument: measure A, prepare |kk>_{BC}.
inline KrausSet incoherent_copy_kraus() {
  SystemLabel b{"B", 2}, c{"C", 2}, a{"A", 2};
  Matrix k0 = Matrix::Zero(4, 2);
  k0(0, 0) = 1.0;  // |00><0|
  Matrix k1 = Matrix::Zero(4, 2);
  k1(3, 1) = 1.0;  // |11><1|
  return {{k0, k1}, SpaceStructure({b, c}), SpaceStructure({a})};
}

inline ChoiOperator incoherent_copy_channel() { return choi_from_kraus(incoherent_copy_kraus()); }

// The coherent copy: the isometry a|0> + b|1> -> a|00> + b|11| as a channel;
// its operator is the unnormalized GHZ projector on (B, C, A*).
inline ChoiOperator coherent_copy_channel() {
  SystemLabel b{"B", 2}, c{"C", 2}, a{"A", 2};
  Matrix k = Matrix::Zero(4, 2);
  k(0, 0) = 1.0;
  k(3, 1) = 1.0;
  return choi_from_kraus({{k}, SpaceStructure({b, c}), SpaceStructure({a})});
}

// k-output versions on 2^k-dimensional output space.
inline ChoiOperator incoherent_copy_channel_k(int k) {
  std::vector<SystemLabel> outs;
  for (int i = 0; i < k; ++i) outs.push_back({"B" + std::to_string(i + 1), 2});
  const int dout = 1 << k;
  Matrix k0 = Matrix::Zero(dout, 2), k1 = Matrix::Zero(dout, 2);
  k0(0, 0) = 1.0;
  k1(dout - 1, 1) = 1.0;
  return choi_from_kraus({{k0, k1}, SpaceStructure(outs), SpaceStructure({{"A", 2}})});
}

inline ChoiOperator coherent_copy_channel_k(int k) {
  std::vector<SystemLabel> outs;
  for (int i = 0; i < k; ++i) outs.push_back({"B" + std::to_string(i + 1), 2});
  const int dout = 1 << k;
  Matrix kk = Matrix::Zero(dout, 2);
  kk(0, 0) = 1.0;
  kk(dout - 1, 1) = 1.0;
  return choi_from_kraus({{kk}, SpaceStructure(outs), SpaceStructure({{"A", 2}})});
}

}  // namespace qcm_test

#endif
