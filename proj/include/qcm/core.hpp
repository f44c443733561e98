#ifndef QCM_CORE_HPP
#define QCM_CORE_HPP

// Dense complex linear algebra over labeled tensor-factor spaces.
//
// Every operator carries a SpaceStructure: an ordered list of named factors
// with their dimensions. Indexing is row-major lexicographic with the first
// factor most significant. Operations align factors by label, so callers
// never track positions by hand.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qcm {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StructureError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct NotConditionallyIndependent : Error {
  double value;  // CMI in bits for channels, table deviation for cpds
  explicit NotConditionallyIndependent(double v)
      : Error("outputs are not conditionally independent given the input (violation " +
              std::to_string(v) + ")"),
        value(v) {}
};

struct DecompositionFailed : Error {
  double residual;
  explicit DecompositionFailed(const std::string& what, double res = 0.0)
      : Error(what), residual(res) {}
};

struct NotDiagonal : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Labels and structures
// ---------------------------------------------------------------------------

struct SystemLabel {
  std::string name;
  int dim = 1;

  friend bool operator==(const SystemLabel& a, const SystemLabel& b) {
    return a.name == b.name && a.dim == b.dim;
  }
};

// The dual-space partner of a label. Dual factors are ordinary factors
// distinguished only by the trailing star.
inline std::string dual_name(const std::string& name) { return name + "*"; }
inline SystemLabel dual(const SystemLabel& l) { return {dual_name(l.name), l.dim}; }

class SpaceStructure {
 public:
  SpaceStructure() = default;
  explicit SpaceStructure(std::vector<SystemLabel> factors) : factors_(std::move(factors)) {
    for (const auto& f : factors_) {
      if (f.dim < 1) throw StructureError("factor '" + f.name + "' has dim < 1");
      for (const auto& g : factors_)
        if (&f != &g && f.name == g.name)
          throw StructureError("duplicate factor label '" + f.name + "'");
    }
  }

  const std::vector<SystemLabel>& factors() const { return factors_; }
  int size() const { return static_cast<int>(factors_.size()); }
  bool empty() const { return factors_.empty(); }

  int total_dim() const {
    int d = 1;
    for (const auto& f : factors_) d *= f.dim;
    return d;
  }

  bool contains(const std::string& name) const { return find(name) >= 0; }

  int find(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
      if (factors_[i].name == name) return i;
    return -1;
  }

  const SystemLabel& at(const std::string& name) const {
    int i = find(name);
    if (i < 0) throw StructureError("unknown factor label '" + name + "'");
    return factors_[i];
  }

  // Stride of each factor under row-major lexicographic indexing.
  std::vector<int> strides() const {
    std::vector<int> s(factors_.size(), 1);
    for (int i = size() - 2; i >= 0; --i) s[i] = s[i + 1] * factors_[i + 1].dim;
    return s;
  }

  SpaceStructure concat(const SpaceStructure& other) const {
    auto fs = factors_;
    for (const auto& f : other.factors_) {
      if (contains(f.name))
        throw StructureError("label collision on '" + f.name + "' in tensor product");
      fs.push_back(f);
    }
    return SpaceStructure(std::move(fs));
  }

  SpaceStructure without(const std::vector<std::string>& names) const {
    for (const auto& n : names)
      if (!contains(n)) throw StructureError("unknown factor label '" + n + "'");
    std::vector<SystemLabel> fs;
    for (const auto& f : factors_)
      if (std::find(names.begin(), names.end(), f.name) == names.end()) fs.push_back(f);
    return SpaceStructure(std::move(fs));
  }

  SpaceStructure keep(const std::vector<std::string>& names) const {
    std::vector<std::string> drop;
    for (const auto& f : factors_)
      if (std::find(names.begin(), names.end(), f.name) == names.end()) drop.push_back(f.name);
    for (const auto& n : names)
      if (!contains(n)) throw StructureError("unknown factor label '" + n + "'");
    return without(drop);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> ns;
    ns.reserve(factors_.size());
    for (const auto& f : factors_) ns.push_back(f.name);
    return ns;
  }

  // Same factors regardless of order.
  bool same_factors(const SpaceStructure& other) const {
    if (size() != other.size()) return false;
    for (const auto& f : factors_) {
      int i = other.find(f.name);
      if (i < 0 || other.factors_[i].dim != f.dim) return false;
    }
    return true;
  }

  friend bool operator==(const SpaceStructure& a, const SpaceStructure& b) {
    return a.factors_ == b.factors_;
  }

 private:
  std::vector<SystemLabel> factors_;
};

inline SpaceStructure make_space(std::initializer_list<SystemLabel> ls) {
  return SpaceStructure(std::vector<SystemLabel>(ls));
}

// ---------------------------------------------------------------------------
// ComplexDense: square operator on a labeled tensor-factor space
// ---------------------------------------------------------------------------

struct ComplexDense {
  SpaceStructure structure;
  Matrix mat;

  ComplexDense() : mat(Matrix::Zero(1, 1)) {}
  ComplexDense(SpaceStructure s, Matrix m) : structure(std::move(s)), mat(std::move(m)) {
    if (mat.rows() != mat.cols() || mat.rows() != structure.total_dim())
      throw StructureError("matrix shape does not match structure dimension");
  }

  int dim() const { return structure.total_dim(); }
  Complex trace() const { return mat.trace(); }
};

inline ComplexDense identity_on(const SpaceStructure& s) {
  return {s, Matrix::Identity(s.total_dim(), s.total_dim())};
}

inline ComplexDense dagger(const ComplexDense& m) { return {m.structure, m.mat.adjoint()}; }

inline double frobenius_norm(const Matrix& m) { return m.norm(); }
inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

inline bool is_hermitian(const Matrix& m, double tol = 1e-10) {
  double scale = std::max(1.0, max_abs(m));
  return max_abs(Matrix(m - m.adjoint())) <= tol * scale;
}

// ---------------------------------------------------------------------------
// kron / partial trace / permutation
// ---------------------------------------------------------------------------

// Tensor (Kronecker) product in the lexicographic product basis; the result
// structure is the concatenation of the factor lists.
inline ComplexDense kron(const ComplexDense& a, const ComplexDense& b) {
  SpaceStructure s = a.structure.concat(b.structure);
  const int da = a.dim(), db = b.dim();
  Matrix out(da * db, da * db);
  for (int i = 0; i < da; ++i)
    for (int j = 0; j < da; ++j)
      out.block(i * db, j * db, db, db) = a.mat(i, j) * b.mat;
  return {std::move(s), std::move(out)};
}

// Trace out the named factors; remaining factors keep their order.
inline ComplexDense partial_trace(const ComplexDense& m, const std::vector<std::string>& over) {
  if (over.empty()) return m;
  SpaceStructure kept = m.structure.without(over);

  const auto strides = m.structure.strides();
  std::vector<int> kept_pos, traced_pos;
  for (int i = 0; i < m.structure.size(); ++i) {
    const auto& n = m.structure.factors()[i].name;
    if (std::find(over.begin(), over.end(), n) == over.end())
      kept_pos.push_back(i);
    else
      traced_pos.push_back(i);
  }

  // Flat offsets contributed by the kept and traced sub-indices separately.
  auto offsets = [&](const std::vector<int>& pos) {
    int count = 1;
    for (int p : pos) count *= m.structure.factors()[p].dim;
    std::vector<long> off(count, 0);
    for (int idx = 0; idx < count; ++idx) {
      int rest = idx;
      long o = 0;
      for (int k = static_cast<int>(pos.size()) - 1; k >= 0; --k) {
        int d = m.structure.factors()[pos[k]].dim;
        o += static_cast<long>(rest % d) * strides[pos[k]];
        rest /= d;
      }
      off[idx] = o;
    }
    return off;
  };
  const auto kp = offsets(kept_pos);
  const auto tp = offsets(traced_pos);

  Matrix out = Matrix::Zero(kept.total_dim(), kept.total_dim());
  for (size_t i = 0; i < kp.size(); ++i)
    for (size_t j = 0; j < kp.size(); ++j) {
      Complex acc = 0.0;
      for (long t : tp) acc += m.mat(kp[i] + t, kp[j] + t);
      out(static_cast<int>(i), static_cast<int>(j)) = acc;
    }
  return {std::move(kept), std::move(out)};
}

inline ComplexDense partial_trace(const ComplexDense& m, std::initializer_list<std::string> over) {
  return partial_trace(m, std::vector<std::string>(over));
}

// Map from old flat indices to flat indices in the reordered structure.
inline std::vector<long> index_permutation(const SpaceStructure& from, const SpaceStructure& to) {
  if (!from.same_factors(to)) throw StructureError("not a permutation of the same factors");
  const auto to_strides = to.strides();
  std::vector<int> target_pos(from.size());
  std::vector<long> stride_in_to(from.size());
  for (int i = 0; i < from.size(); ++i) {
    int j = to.find(from.factors()[i].name);
    target_pos[i] = j;
    stride_in_to[i] = to_strides[j];
  }
  const int total = from.total_dim();
  std::vector<long> map(total);
  for (int idx = 0; idx < total; ++idx) {
    int rest = idx;
    long out = 0;
    for (int k = from.size() - 1; k >= 0; --k) {
      int d = from.factors()[k].dim;
      out += static_cast<long>(rest % d) * stride_in_to[k];
      rest /= d;
    }
    map[idx] = out;
  }
  return map;
}

// Reorder factors; entries are re-indexed, the spectrum is unchanged.
inline ComplexDense permute_to(const ComplexDense& m, const SpaceStructure& order) {
  if (m.structure == order) return m;
  const auto map = index_permutation(m.structure, order);
  Matrix out(m.dim(), m.dim());
  for (int i = 0; i < m.dim(); ++i)
    for (int j = 0; j < m.dim(); ++j) out(map[i], map[j]) = m.mat(i, j);
  return {order, std::move(out)};
}

inline ComplexDense permute_systems(const ComplexDense& m, const std::vector<std::string>& order) {
  std::vector<SystemLabel> fs;
  for (const auto& n : order) fs.push_back(m.structure.at(n));
  SpaceStructure target(fs);
  if (!m.structure.same_factors(target)) throw StructureError("order is not a permutation");
  return permute_to(m, target);
}

// Tensor with identities on the target's extra factors, then reorder to the
// target. Factor alignment is by label, not by position.
inline ComplexDense embed(const ComplexDense& m, const SpaceStructure& target) {
  std::vector<std::string> missing;
  for (const auto& f : target.factors()) {
    if (!m.structure.contains(f.name))
      missing.push_back(f.name);
    else if (m.structure.at(f.name).dim != f.dim)
      throw StructureError("dimension mismatch on factor '" + f.name + "'");
  }
  for (const auto& f : m.structure.factors())
    if (!target.contains(f.name))
      throw StructureError("factor '" + f.name + "' absent from embedding target");
  ComplexDense wide = m;
  if (!missing.empty()) wide = kron(m, identity_on(target.keep(missing)));
  return permute_to(wide, target);
}

// Union structure: factors of a in order, then the factors of b not in a.
inline SpaceStructure union_structure(const SpaceStructure& a, const SpaceStructure& b) {
  auto fs = a.factors();
  for (const auto& f : b.factors()) {
    int i = a.find(f.name);
    if (i < 0)
      fs.push_back(f);
    else if (a.factors()[i].dim != f.dim)
      throw StructureError("dimension mismatch on factor '" + f.name + "'");
  }
  return SpaceStructure(fs);
}

// Product of operators on (possibly) different spaces: embed all into the
// union structure, multiply in the written order.
inline ComplexDense aligned_product(const std::vector<ComplexDense>& ops) {
  if (ops.empty()) throw StructureError("empty product");
  SpaceStructure s = ops[0].structure;
  for (size_t i = 1; i < ops.size(); ++i) s = union_structure(s, ops[i].structure);
  Matrix acc = embed(ops[0], s).mat;
  for (size_t i = 1; i < ops.size(); ++i) acc = acc * embed(ops[i], s).mat;
  return {s, std::move(acc)};
}

// ---------------------------------------------------------------------------
// Spectral analysis and entropies
// ---------------------------------------------------------------------------

struct EigResult {
  RealVector eigenvalues;  // descending
  ComplexDense eigenvectors;
};

inline EigResult hermitian_eig(const ComplexDense& m, double herm_tol = 1e-10) {
  double scale = std::max(1.0, max_abs(m.mat));
  if (max_abs(Matrix(m.mat - m.mat.adjoint())) > herm_tol * scale)
    throw ValidationError("hermitian_eig: input is not Hermitian within tolerance");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (m.mat + m.mat.adjoint()));
  if (solver.info() != Eigen::Success) throw Error("eigensolver failed to converge");
  const int n = m.dim();
  RealVector vals(n);
  Matrix vecs(n, n);
  for (int i = 0; i < n; ++i) {  // Eigen returns ascending order
    vals(i) = solver.eigenvalues()(n - 1 - i);
    vecs.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return {std::move(vals), ComplexDense{m.structure, std::move(vecs)}};
}

constexpr double kEntropyZeroCutoff = 1e-12;

// Von Neumann entropy in bits; eigenvalues below the zero cutoff count as 0.
inline double von_neumann_entropy(const ComplexDense& rho, double psd_tol = 1e-9) {
  if (std::abs(rho.trace() - Complex(1.0)) > 1e-10)
    throw ValidationError("von_neumann_entropy: trace differs from 1");
  auto eig = hermitian_eig(rho);
  double s = 0.0;
  for (int i = 0; i < eig.eigenvalues.size(); ++i) {
    double lam = eig.eigenvalues(i);
    if (lam < -psd_tol)
      throw ValidationError("von_neumann_entropy: negative eigenvalue beyond tolerance");
    if (lam > kEntropyZeroCutoff) s -= lam * std::log2(lam);
  }
  return s;
}

inline double commutator_norm(const ComplexDense& a, const ComplexDense& b) {
  if (!a.structure.same_factors(b.structure))
    throw StructureError("commutator_norm: structures do not match");
  ComplexDense bb = permute_to(b, a.structure);
  return frobenius_norm(Matrix(a.mat * bb.mat - bb.mat * a.mat));
}

inline bool psd_check(const ComplexDense& m, double tol) {
  auto eig = hermitian_eig(m);
  return eig.eigenvalues(eig.eigenvalues.size() - 1) >= -tol;
}

inline double min_eigenvalue(const ComplexDense& m) {
  auto eig = hermitian_eig(m);
  return eig.eigenvalues(eig.eigenvalues.size() - 1);
}

}  // namespace qcm

#endif  // QCM_CORE_HPP
