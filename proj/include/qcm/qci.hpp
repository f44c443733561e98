#ifndef QCM_QCI_HPP
#define QCM_QCI_HPP

// Quantum conditional independence of channel outputs given the input:
// the operator factorization test, the conditional-mutual-information test,
// the direct-sum-of-tensor-products decomposition of the input space, the
// no-causal-influence test for unitaries, and the constructive common-cause
// dilation assembled from the decomposition.

#include "qcm/channel.hpp"
#include "qcm/classical.hpp"

namespace qcm {

constexpr double kQciDefaultTol = 1e-8;

// ---------------------------------------------------------------------------
// No causal influence (input -> output of a channel operator)
// ---------------------------------------------------------------------------

struct InfluenceResult {
  bool no_influence = false;
  double residual = 0.0;
};

namespace detail {

// ||M - I_{from*} (x) Tr_{from*}(M)/d_from||_F for M on (to, inputs*).
inline InfluenceResult influence_residual(const ComplexDense& m, const std::string& from,
                                          double tol) {
  std::string from_dual = dual_name(from);
  const auto& lbl = m.structure.at(from_dual);
  ComplexDense rest = partial_trace(m, {from_dual});
  rest.mat /= double(lbl.dim);
  ComplexDense candidate = embed(rest, m.structure);
  double res = frobenius_norm(Matrix(m.mat - candidate.mat));
  return {res <= tol, res};
}

}  // namespace detail

// Marginal of the channel operator on one kept output, tested against the
// product form that certifies the named input cannot influence it.
inline InfluenceResult no_causal_influence(const ChoiOperator& ch, const std::string& from_label,
                                           const std::string& to_label,
                                           double tol = kQciDefaultTol) {
  if (!ch.outputs.contains(to_label))
    throw StructureError("unknown output label '" + to_label + "'");
  if (!ch.inputs.contains(dual_name(from_label)))
    throw StructureError("unknown input label '" + from_label + "'");
  ChoiOperator kept = marginal_channel(ch, {to_label});
  return detail::influence_residual(kept.op, from_label, tol);
}

// Same test computed directly from a unitary gate, without materializing its
// Choi operator: the kept-output marginal is a single contraction of U with
// its conjugate.
inline InfluenceResult no_causal_influence(const UnitaryGate& u, const std::string& from_label,
                                           const std::string& to_label,
                                           double tol = kQciDefaultTol) {
  const int n = u.in_structure.total_dim();
  int keep_pos = u.out_structure.find(to_label);
  if (keep_pos < 0) throw StructureError("unknown output label '" + to_label + "'");
  if (!u.in_structure.contains(from_label))
    throw StructureError("unknown input label '" + from_label + "'");
  const int dk = u.out_structure.factors()[keep_pos].dim;
  const int dt = u.out_structure.total_dim() / dk;

  const auto strides = u.out_structure.strides();
  // Decompose the out index as (k, t): kept digit and the rest, flattened.
  std::vector<long> kmap(dk), tmap(dt);
  for (int k = 0; k < dk; ++k) kmap[k] = long(k) * strides[keep_pos];
  std::vector<int> pos;
  for (int i = 0; i < u.out_structure.size(); ++i)
    if (i != keep_pos) pos.push_back(i);
  for (int t = 0; t < dt; ++t) {
    int rest = t;
    long o = 0;
    for (int q = static_cast<int>(pos.size()) - 1; q >= 0; --q) {
      int d = u.out_structure.factors()[pos[q]].dim;
      o += long(rest % d) * strides[pos[q]];
      rest /= d;
    }
    tmap[t] = o;
  }

  Matrix t_mat(dt, dk * n);
  for (int t = 0; t < dt; ++t)
    for (int k = 0; k < dk; ++k)
      for (int x = 0; x < n; ++x) t_mat(t, k * n + x) = u.matrix(kmap[k] + tmap[t], x);
  Matrix m = (t_mat.adjoint() * t_mat).transpose();

  SpaceStructure s =
      SpaceStructure({u.out_structure.factors()[keep_pos]}).concat(dual_structure(u.in_structure));
  return detail::influence_residual({s, std::move(m)}, from_label, tol);
}

// ---------------------------------------------------------------------------
// Factorization and conditional mutual information
// ---------------------------------------------------------------------------

struct FactorizationResult {
  bool independent = false;
  double defect = 0.0;      // ||rho_{BC|A} - rho_{B|A} rho_{C|A}||_F
  double commutator = 0.0;  // ||[rho_{B|A}, rho_{C|A}]||_F
};

// rho_{BC|A} = rho_{B|A} rho_{C|A}, with the output groups given by `left`
// and its complement.
inline FactorizationResult qci_factorization_check_grouped(const ChoiOperator& ch,
                                                           const std::vector<std::string>& left,
                                                           double tol = kQciDefaultTol) {
  std::vector<std::string> right;
  for (const auto& f : ch.outputs.factors())
    if (std::find(left.begin(), left.end(), f.name) == left.end()) right.push_back(f.name);
  if (left.empty() || right.empty())
    throw StructureError("factorization check needs two nonempty output groups");
  ChoiOperator mb = marginal_channel(ch, left);
  ChoiOperator mc = marginal_channel(ch, right);
  ComplexDense b = embed(mb.op, ch.op.structure);
  ComplexDense c = embed(mc.op, ch.op.structure);
  FactorizationResult r;
  r.defect = frobenius_norm(Matrix(ch.op.mat - b.mat * c.mat));
  r.commutator = frobenius_norm(Matrix(b.mat * c.mat - c.mat * b.mat));
  r.independent = r.defect <= tol && r.commutator <= tol;
  return r;
}

inline FactorizationResult qci_factorization_check(const ChoiOperator& ch,
                                                   double tol = kQciDefaultTol) {
  if (ch.outputs.size() != 2)
    throw StructureError("qci_factorization_check expects exactly two outputs");
  return qci_factorization_check_grouped(ch, {ch.outputs.factors()[0].name}, tol);
}

// I(B:C|A) in bits on the trace-one operator op/d_in, the dual input factor
// playing the role of A. Output groups as above.
inline double conditional_mutual_information_grouped(const ChoiOperator& ch,
                                                     const std::vector<std::string>& left) {
  std::vector<std::string> right;
  for (const auto& f : ch.outputs.factors())
    if (std::find(left.begin(), left.end(), f.name) == left.end()) right.push_back(f.name);
  if (left.empty() || right.empty())
    throw StructureError("conditional mutual information needs two nonempty output groups");
  ComplexDense hat = ch.op;
  hat.mat /= double(ch.dim_in());
  double s_ba = von_neumann_entropy(partial_trace(hat, right));
  double s_ca = von_neumann_entropy(partial_trace(hat, left));
  double s_abc = von_neumann_entropy(hat);
  double s_a = von_neumann_entropy(partial_trace(hat, ch.outputs.names()));
  return s_ba + s_ca - s_abc - s_a;
}

inline double conditional_mutual_information(const ChoiOperator& ch) {
  if (ch.outputs.size() < 2)
    throw StructureError("conditional mutual information expects at least two outputs");
  return conditional_mutual_information_grouped(ch, {ch.outputs.factors()[0].name});
}

// ---------------------------------------------------------------------------
// Operator-algebra machinery
// ---------------------------------------------------------------------------

namespace algebra {

constexpr double kClusterGap = 1e-7;  // relative gap for rank / eigenvalue splits

inline Vector vec(const Matrix& m) {
  Vector v(m.size());
  int k = 0;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) v(k++) = m(i, j);
  return v;
}

inline Matrix unvec(const Vector& v, int d) {
  Matrix m(d, d);
  int k = 0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = v(k++);
  return m;
}

// Orthonormal basis (Hilbert-Schmidt) of the span of the given matrices.
inline std::vector<Matrix> orthonormal_span(const std::vector<Matrix>& mats, int d) {
  if (mats.empty()) return {};
  Matrix stack(static_cast<int>(mats.size()), d * d);
  for (size_t i = 0; i < mats.size(); ++i)
    stack.row(static_cast<int>(i)) = vec(mats[i]).transpose();
  Eigen::JacobiSVD<Matrix> svd(stack, Eigen::ComputeThinV);
  double cutoff = svd.singularValues()(0) * kClusterGap;
  std::vector<Matrix> basis;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > cutoff) basis.push_back(unvec(svd.matrixV().col(i), d));
  return basis;
}

// The unital *-algebra generated by the input matrices, as an orthonormal
// basis: close the span under adjoints and multiplication until stable.
inline std::vector<Matrix> generated_algebra(std::vector<Matrix> gens, int d) {
  gens.push_back(Matrix::Identity(d, d));
  const size_t ngen = gens.size();
  for (size_t i = 0; i < ngen; ++i) gens.push_back(gens[i].adjoint());
  std::vector<Matrix> basis = orthonormal_span(gens, d);
  for (int round = 0; round <= d * d; ++round) {
    std::vector<Matrix> candidates = basis;
    for (const auto& a : basis)
      for (const auto& b : basis) candidates.push_back(a * b);
    std::vector<Matrix> next = orthonormal_span(candidates, d);
    if (next.size() == basis.size()) return next;
    basis = std::move(next);
  }
  throw DecompositionFailed("algebra closure did not stabilize");
}

// Basis of the center: algebra elements commuting with every basis element,
// via the nullspace of the stacked commutator map.
inline std::vector<Matrix> center_of(const std::vector<Matrix>& basis, int d) {
  const int m = static_cast<int>(basis.size());
  Matrix sys(m * d * d, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i)
      sys.block(j * d * d, i, d * d, 1) = vec(Matrix(basis[i] * basis[j] - basis[j] * basis[i]));
  Eigen::JacobiSVD<Matrix> svd(sys, Eigen::ComputeFullV);
  double cutoff = std::max(1.0, svd.singularValues()(0)) * kClusterGap;
  std::vector<Matrix> center;
  for (int i = 0; i < static_cast<int>(svd.matrixV().cols()); ++i) {
    if (i < svd.singularValues().size() && svd.singularValues()(i) > cutoff) continue;
    Matrix z = Matrix::Zero(d, d);
    for (int k = 0; k < m; ++k) z += svd.matrixV()(k, i) * basis[k];
    center.push_back(std::move(z));
  }
  return center;
}

// Random Hermitian element of a *-closed span.
inline Matrix random_hermitian_element(const std::vector<Matrix>& basis, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x = Matrix::Zero(basis[0].rows(), basis[0].cols());
  for (const auto& b : basis) x += Complex(g(rng), g(rng)) * b;
  return 0.5 * (x + x.adjoint());
}

inline Matrix random_element(const std::vector<Matrix>& basis, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x = Matrix::Zero(basis[0].rows(), basis[0].cols());
  for (const auto& b : basis) x += Complex(g(rng), g(rng)) * b;
  return x;
}

// Cluster sorted eigenvalues by relative gap; returns (start, count) pairs.
inline std::vector<std::pair<int, int>> cluster_eigenvalues(const RealVector& vals) {
  const int n = static_cast<int>(vals.size());
  double spread = std::max(1.0, vals.maxCoeff() - vals.minCoeff());
  std::vector<std::pair<int, int>> clusters;
  int start = 0;
  for (int i = 1; i <= n; ++i) {
    if (i == n || std::abs(vals(i) - vals(i - 1)) > kClusterGap * spread) {
      clusters.push_back({start, i - start});
      start = i;
    }
  }
  return clusters;
}

// Factor a simple matrix algebra M_l (x) I_r on C^n: returns (l, r) and the
// basis change g with g^dag X g = x (x) I_r for every algebra element X.
struct SimpleFactorization {
  int l = 1, r = 1;
  Matrix g;
};

inline SimpleFactorization factor_simple_block(const std::vector<Matrix>& block_basis, int n,
                                               Rng& rng) {
  const int l2 = static_cast<int>(block_basis.size());
  int l = static_cast<int>(std::lround(std::sqrt(double(l2))));
  if (l * l != l2)
    throw DecompositionFailed("restricted algebra dimension " + std::to_string(l2) +
                              " is not a perfect square");
  if (n % l != 0) throw DecompositionFailed("algebra rank does not divide the block dimension");
  const int r = n / l;

  SimpleFactorization out;
  out.l = l;
  out.r = r;
  if (l == 1) {  // scalars: any basis realizes C (x) I_r
    out.g = Matrix::Identity(n, n);
    return out;
  }

  for (int attempt = 0; attempt < 8; ++attempt) {
    // A generic Hermitian element has l distinct eigenvalues, each of
    // multiplicity r; its eigenspaces are the L-basis rays tensored with
    // the full multiplicity space.
    Matrix h = random_hermitian_element(block_basis, rng);
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    auto clusters = cluster_eigenvalues(es.eigenvalues());
    if (static_cast<int>(clusters.size()) != l) continue;
    bool uniform = true;
    for (auto [s, c] : clusters)
      if (c != r) uniform = false;
    if (!uniform) continue;

    // Align the multiplicity frames across eigenspaces with a generic
    // connector element: F_k^dag X F_0 is a scalar times a unitary.
    std::vector<Matrix> frames;
    for (auto [s, c] : clusters) frames.push_back(es.eigenvectors().middleCols(s, c));
    Matrix x = random_element(block_basis, rng);
    Matrix g = Matrix::Zero(n, n);
    bool ok = true;
    g.middleCols(0, r) = frames[0];
    for (int k = 1; k < l && ok; ++k) {
      Matrix conn = frames[k].adjoint() * x * frames[0];
      double s = conn.norm() / std::sqrt(double(r));
      if (s < 1e-8 ||
          (conn.adjoint() * conn / (s * s) - Matrix::Identity(r, r)).norm() >
              1e-6 * std::sqrt(double(r))) {
        ok = false;
        continue;
      }
      g.middleCols(k * r, r) = frames[k] * (conn / s);
    }
    if (!ok) continue;

    // Every basis element must become x (x) I_r in this basis.
    double worst = 0.0;
    for (const auto& e : block_basis) {
      Matrix rot = g.adjoint() * e * g;
      Matrix small = Matrix::Zero(l, l);
      for (int a = 0; a < l; ++a)
        for (int b = 0; b < l; ++b) {
          Complex acc = 0.0;
          for (int t = 0; t < r; ++t) acc += rot(a * r + t, b * r + t);
          small(a, b) = acc / double(r);
        }
      for (int a = 0; a < l; ++a)
        for (int b = 0; b < l; ++b)
          for (int t = 0; t < r; ++t)
            for (int t2 = 0; t2 < r; ++t2) {
              Complex model = (t == t2) ? small(a, b) : Complex(0.0);
              worst = std::max(worst, std::abs(rot(a * r + t, b * r + t2) - model));
            }
    }
    if (worst > 1e-6) continue;

    out.g = std::move(g);
    return out;
  }
  throw DecompositionFailed("could not factor a simple algebra block (degenerate spectra)");
}

}  // namespace algebra

// ---------------------------------------------------------------------------
// find_decomposition: H_A = (+)_i L_i (x) R_i with rho = sum_i beta_i (x) gamma_i
// ---------------------------------------------------------------------------

struct SubspaceDecomposition {
  UnitaryGate basis_change;                 // on H_A (fixed-basis identification)
  std::vector<std::pair<int, int>> blocks;  // (d_L, d_R) per block
};

struct CommonCauseWitness {
  SubspaceDecomposition decomposition;
  std::vector<ChoiOperator> left_channels;   // B|L_i
  std::vector<ChoiOperator> right_channels;  // C|R_i
  double cmi_bits = 0.0;
  double reconstruction_residual = 0.0;
};

namespace detail {

inline std::string fused_input_base(const SpaceStructure& dual_inputs) {
  std::string base;
  for (const auto& f : dual_inputs.factors()) {
    if (!base.empty()) base += ".";
    base += f.name.substr(0, f.name.size() - 1);
  }
  return base;
}

// Block-diagonal sum_i beta_i (x) gamma_i on (left_outs, right_outs, A*),
// conjugated by q on the A* factor. Output order is (left, right) fused with
// the A* index least significant, matching a permute_to of the original.
inline Matrix reconstruct_condition4(int d_a, const Matrix& q,
                                     const std::vector<std::pair<int, int>>& blocks,
                                     const std::vector<ChoiOperator>& lefts,
                                     const std::vector<ChoiOperator>& rights, int dl_out,
                                     int dr_out) {
  Matrix block_op = Matrix::Zero(dl_out * dr_out * d_a, dl_out * dr_out * d_a);
  int off = 0;
  for (size_t i = 0; i < blocks.size(); ++i) {
    auto [l, r] = blocks[i];
    const Matrix& bm = lefts[i].op.mat;   // on (left_outs, L*)
    const Matrix& cm = rights[i].op.mat;  // on (right_outs, R*)
    for (int b = 0; b < dl_out; ++b)
      for (int b2 = 0; b2 < dl_out; ++b2)
        for (int c = 0; c < dr_out; ++c)
          for (int c2 = 0; c2 < dr_out; ++c2)
            for (int k = 0; k < l; ++k)
              for (int k2 = 0; k2 < l; ++k2)
                for (int j = 0; j < r; ++j)
                  for (int j2 = 0; j2 < r; ++j2) {
                    long row = (long(b) * dr_out + c) * d_a + off + k * r + j;
                    long col = (long(b2) * dr_out + c2) * d_a + off + k2 * r + j2;
                    block_op(row, col) += bm(b * l + k, b2 * l + k2) * cm(c * r + j, c2 * r + j2);
                  }
    off += l * r;
  }
  Matrix big_q = Matrix::Zero(dl_out * dr_out * d_a, dl_out * dr_out * d_a);
  for (int o = 0; o < dl_out * dr_out; ++o) big_q.block(o * d_a, o * d_a, d_a, d_a) = q;
  return big_q * block_op * big_q.adjoint();
}

}  // namespace detail

// Grouped decomposition: outputs split into `left` and the complement, the
// (possibly composite) input treated as one system. The blocks are the
// Wedderburn structure of the unital *-algebra generated by the left
// marginal's output slices; the right marginal lives in its commutant, so
// the condition-4 form follows and is certified by reconstruction.
inline CommonCauseWitness find_decomposition_grouped(const ChoiOperator& ch,
                                                     const std::vector<std::string>& left,
                                                     double tol = kQciDefaultTol,
                                                     uint64_t seed = 0) {
  double cmi = conditional_mutual_information_grouped(ch, left);
  if (cmi > tol) throw NotConditionallyIndependent(cmi);

  std::vector<std::string> right;
  for (const auto& f : ch.outputs.factors())
    if (std::find(left.begin(), left.end(), f.name) == left.end()) right.push_back(f.name);

  const int d_a = ch.dim_in();
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);

  SpaceStructure left_outs = ch.outputs.keep(left);
  SpaceStructure right_outs = ch.outputs.keep(right);
  const int dl_o = left_outs.total_dim(), dr_o = right_outs.total_dim();

  // Output slices of the left marginal, as operators on H_A*.
  ChoiOperator mb = marginal_channel(ch, left);
  ComplexDense mb_ord = permute_to(mb.op, left_outs.concat(ch.inputs));
  std::vector<Matrix> slices;
  for (int b = 0; b < dl_o; ++b)
    for (int b2 = 0; b2 < dl_o; ++b2) {
      Matrix s(d_a, d_a);
      for (int a = 0; a < d_a; ++a)
        for (int a2 = 0; a2 < d_a; ++a2) s(a, a2) = mb_ord.mat(b * d_a + a, b2 * d_a + a2);
      slices.push_back(std::move(s));
    }

  auto basis = algebra::generated_algebra(slices, d_a);
  auto center = algebra::center_of(basis, d_a);
  if (center.empty()) throw DecompositionFailed("algebra center came out empty");

  // Split along the spectral clusters of a random Hermitian central element;
  // each cluster carries one simple block.
  std::vector<Matrix> block_isometries;
  if (center.size() == 1) {
    block_isometries.push_back(Matrix::Identity(d_a, d_a));
  } else {
    Matrix z = algebra::random_hermitian_element(center, rng);
    Eigen::SelfAdjointEigenSolver<Matrix> es(z);
    auto clusters = algebra::cluster_eigenvalues(es.eigenvalues());
    if (clusters.size() != center.size())
      throw DecompositionFailed("central element produced " + std::to_string(clusters.size()) +
                                " clusters for a center of dimension " +
                                std::to_string(center.size()));
    for (auto [s, c] : clusters) block_isometries.push_back(es.eigenvectors().middleCols(s, c));
  }

  // Factor each simple block and assemble the global basis change.
  std::vector<std::pair<int, int>> blocks;
  Matrix q(d_a, d_a);
  int off = 0;
  for (const auto& iso : block_isometries) {
    const int n = static_cast<int>(iso.cols());
    std::vector<Matrix> restricted;
    for (const auto& e : basis) restricted.push_back(iso.adjoint() * e * iso);
    restricted = algebra::orthonormal_span(restricted, n);
    auto fac = algebra::factor_simple_block(restricted, n, rng);
    blocks.push_back({fac.l, fac.r});
    q.middleCols(off, n) = iso * fac.g;
    off += n;
  }

  // Rotate the full operator into the adapted basis, (left, right, A*) order.
  ComplexDense full = permute_to(ch.op, left_outs.concat(right_outs).concat(ch.inputs));
  const int dout = dl_o * dr_o;
  Matrix big_q = Matrix::Zero(dout * d_a, dout * d_a);
  for (int o = 0; o < dout; ++o) big_q.block(o * d_a, o * d_a, d_a, d_a) = q;
  Matrix rot = big_q.adjoint() * full.mat * big_q;

  // Components per block, extracted by partial trace over the partner part.
  std::string in_base = detail::fused_input_base(ch.inputs);
  std::vector<ChoiOperator> lefts, rights;
  off = 0;
  for (auto [l, r] : blocks) {
    Matrix beta = Matrix::Zero(dl_o * l, dl_o * l);
    Matrix gamma = Matrix::Zero(dr_o * r, dr_o * r);
    for (int b = 0; b < dl_o; ++b)
      for (int b2 = 0; b2 < dl_o; ++b2)
        for (int k = 0; k < l; ++k)
          for (int k2 = 0; k2 < l; ++k2) {
            Complex acc = 0.0;
            for (int c = 0; c < dr_o; ++c)
              for (int j = 0; j < r; ++j)
                acc += rot((long(b) * dr_o + c) * d_a + off + k * r + j,
                           (long(b2) * dr_o + c) * d_a + off + k2 * r + j);
            beta(b * l + k, b2 * l + k2) = acc / double(r);
          }
    for (int c = 0; c < dr_o; ++c)
      for (int c2 = 0; c2 < dr_o; ++c2)
        for (int j = 0; j < r; ++j)
          for (int j2 = 0; j2 < r; ++j2) {
            Complex acc = 0.0;
            for (int b = 0; b < dl_o; ++b)
              for (int k = 0; k < l; ++k)
                acc += rot((long(b) * dr_o + c) * d_a + off + k * r + j,
                           (long(b) * dr_o + c2) * d_a + off + k * r + j2);
            gamma(c * r + j, c2 * r + j2) = acc / double(l);
          }
    SpaceStructure lin({{dual_name(in_base), l}});
    SpaceStructure rin({{dual_name(in_base), r}});
    lefts.push_back({ComplexDense{left_outs.concat(lin), std::move(beta)}, left_outs, lin});
    rights.push_back({ComplexDense{right_outs.concat(rin), std::move(gamma)}, right_outs, rin});
    off += l * r;
  }

  // Canonical block order: by (d_L, d_R), then by the left component's
  // spectral fingerprint. Only the multiset is contractual.
  std::vector<int> order(blocks.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<double>> prints(blocks.size());
  for (size_t i = 0; i < blocks.size(); ++i) {
    auto e = hermitian_eig(lefts[i].op);
    for (int k = 0; k < e.eigenvalues.size(); ++k)
      prints[i].push_back(std::round(e.eigenvalues(k) * 1e6) / 1e6);
  }
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    if (blocks[i] != blocks[j]) return blocks[i] < blocks[j];
    return prints[i] < prints[j];
  });
  {
    std::vector<int> offs(blocks.size());
    int acc = 0;
    for (size_t i = 0; i < blocks.size(); ++i) {
      offs[i] = acc;
      acc += blocks[i].first * blocks[i].second;
    }
    std::vector<std::pair<int, int>> b2;
    std::vector<ChoiOperator> l2, r2;
    Matrix q2(d_a, d_a);
    int pos = 0;
    for (int idx : order) {
      int n = blocks[idx].first * blocks[idx].second;
      q2.middleCols(pos, n) = q.middleCols(offs[idx], n);
      pos += n;
      b2.push_back(blocks[idx]);
      l2.push_back(std::move(lefts[idx]));
      r2.push_back(std::move(rights[idx]));
    }
    q = std::move(q2);
    blocks = std::move(b2);
    lefts = std::move(l2);
    rights = std::move(r2);
  }

  // Reconstruction residual against the original operator.
  Matrix rec = detail::reconstruct_condition4(d_a, q, blocks, lefts, rights, dl_o, dr_o);
  double residual = frobenius_norm(Matrix(rec - full.mat));
  if (residual > tol * std::max(1.0, frobenius_norm(full.mat)))
    throw DecompositionFailed("decomposition does not reconstruct the channel", residual);

  for (const auto& comp : lefts)
    if (!check_channel(comp).pass(1e-7, 1e-7))
      throw DecompositionFailed("left component violates the channel invariants", residual);
  for (const auto& comp : rights)
    if (!check_channel(comp).pass(1e-7, 1e-7))
      throw DecompositionFailed("right component violates the channel invariants", residual);

  CommonCauseWitness w;
  w.cmi_bits = cmi;
  SystemLabel a_plain{in_base, d_a};
  w.decomposition.basis_change =
      UnitaryGate{q, SpaceStructure({a_plain}), SpaceStructure({a_plain})};
  w.decomposition.blocks = blocks;
  w.left_channels = std::move(lefts);
  w.right_channels = std::move(rights);
  w.reconstruction_residual = residual;
  return w;
}

inline CommonCauseWitness find_decomposition(const ChoiOperator& ch, double tol = kQciDefaultTol,
                                             uint64_t seed = 0) {
  if (ch.outputs.size() != 2)
    throw StructureError("find_decomposition expects exactly two outputs");
  return find_decomposition_grouped(ch, {ch.outputs.factors()[0].name}, tol, seed);
}

// ---------------------------------------------------------------------------
// Common-cause dilation: U = (I_{lambda_B} (x) W)(V (x) I_{lambda_C})
// ---------------------------------------------------------------------------

struct DilationWitness {
  UnitaryGate u;  // lambda_B (x) A (x) lambda_C -> B (x) D (x) C
  SystemLabel lambda_b, lambda_c, d_label;
  ComplexDense ancilla_b, ancilla_c;  // pure |0><0| states
  Matrix v, w;                        // block-diagonal halves, adapted basis
  double vw_commutator = 0.0;
  double influence_b_to_c = 0.0;  // residual for lambda_B -> C
  double influence_c_to_b = 0.0;  // residual for lambda_C -> B
  double reproduction_residual = 0.0;
  double unitarity_residual = 0.0;
  CommonCauseWitness decomposition;
};

// Assemble the dilation from the condition-4 decomposition: per block,
// V_i dilates beta_i on lambda_B (x) L_i and acts as V_i (x) I_{R_i}; W_i
// dilates gamma_i on R_i (x) lambda_C and acts as I_{L_i} (x) W_i. The two
// halves commute, and the composite re-read as B (x) D (x) C reproduces the
// channel on the |0> ancillas.
inline DilationWitness common_cause_dilation(const ChoiOperator& ch, double tol = kQciDefaultTol,
                                             uint64_t seed = 0) {
  if (ch.outputs.size() != 2)
    throw StructureError("common_cause_dilation expects exactly two outputs");
  DilationWitness out;
  out.decomposition = find_decomposition(ch, tol, seed);
  const auto& w = out.decomposition;
  const auto& blocks = w.decomposition.blocks;
  const int nblocks = static_cast<int>(blocks.size());
  const int d_a = ch.dim_in();
  const int d_b = ch.outputs.factors()[0].dim;
  const int d_c = ch.outputs.factors()[1].dim;

  // Kraus sets per block and the padded ancilla dimensions.
  std::vector<KrausSet> kb(nblocks), kc(nblocks);
  int m_b = 1, m_c = 1;
  for (int i = 0; i < nblocks; ++i) {
    kb[i] = kraus_from_choi(w.left_channels[i]);
    kc[i] = kraus_from_choi(w.right_channels[i]);
    auto [l, r] = blocks[i];
    m_b = std::max(m_b, static_cast<int>((kb[i].operators.size() + l - 1) / l));
    m_c = std::max(m_c, static_cast<int>((kc[i].operators.size() + r - 1) / r));
  }
  const int d_lb = d_b * m_b;  // rest_i = m_b * l_i >= kraus count
  const int d_lc = d_c * m_c;

  // Global V on lambda_B (x) A (adapted basis) and W on A (x) lambda_C.
  const int nb = d_lb * d_a, nc = d_a * d_lc;
  Matrix v = Matrix::Zero(nb, nb), wm = Matrix::Zero(nc, nc);
  int off = 0;
  for (int i = 0; i < nblocks; ++i) {
    auto [l, r] = blocks[i];
    const int rest_b = m_b * l, rest_c = r * m_c;

    // V_i on (lambda_B, L_i): columns at (mu=0, k) send |k> to
    // sum_s (K_s|k>)_B (x) |s>, output read as (b, s) with b major.
    std::vector<std::pair<int, Vector>> cols_b;
    for (int k = 0; k < l; ++k) {
      Vector col = Vector::Zero(d_lb * l);
      for (size_t s = 0; s < kb[i].operators.size(); ++s)
        for (int b = 0; b < d_b; ++b) col(b * rest_b + static_cast<int>(s)) = kb[i].operators[s](b, k);
      cols_b.emplace_back(k, std::move(col));  // input index mu * l + k with mu = 0
    }
    Matrix vi = complete_to_unitary(d_lb * l, cols_b);

    std::vector<std::pair<int, Vector>> cols_c;
    for (int j = 0; j < r; ++j) {
      Vector col = Vector::Zero(r * d_lc);
      for (size_t s = 0; s < kc[i].operators.size(); ++s)
        for (int c = 0; c < d_c; ++c) col(c * rest_c + static_cast<int>(s)) = kc[i].operators[s](c, j);
      cols_c.emplace_back(j * d_lc, std::move(col));  // input index j * d_lc + nu with nu = 0
    }
    Matrix wi = complete_to_unitary(r * d_lc, cols_c);

    // Embed V_i (x) I_{R_i} and I_{L_i} (x) W_i into the global matrices.
    for (int mu = 0; mu < d_lb; ++mu)
      for (int k = 0; k < l; ++k)
        for (int mu2 = 0; mu2 < d_lb; ++mu2)
          for (int k2 = 0; k2 < l; ++k2)
            for (int t = 0; t < r; ++t)
              v(mu * d_a + off + k * r + t, mu2 * d_a + off + k2 * r + t) =
                  vi(mu * l + k, mu2 * l + k2);
    for (int k = 0; k < l; ++k)
      for (int j = 0; j < r; ++j)
        for (int nu = 0; nu < d_lc; ++nu)
          for (int j2 = 0; j2 < r; ++j2)
            for (int nu2 = 0; nu2 < d_lc; ++nu2)
              wm((off + k * r + j) * d_lc + nu, (off + k * r + j2) * d_lc + nu2) =
                  wi(j * d_lc + nu, j2 * d_lc + nu2);
    off += l * r;
  }

  const int n = d_lb * d_a * d_lc;
  Matrix vfull = Matrix::Zero(n, n), wfull = Matrix::Zero(n, n);
  for (int x = 0; x < nb; ++x)
    for (int y = 0; y < nb; ++y)
      if (v(x, y) != Complex(0.0))
        for (int nu = 0; nu < d_lc; ++nu) vfull(x * d_lc + nu, y * d_lc + nu) = v(x, y);
  for (int x = 0; x < nc; ++x)
    for (int y = 0; y < nc; ++y)
      if (wm(x, y) != Complex(0.0))
        for (int mu = 0; mu < d_lb; ++mu) wfull(mu * nc + x, mu * nc + y) = wm(x, y);
  out.vw_commutator = frobenius_norm(Matrix(vfull * wfull - wfull * vfull));
  Matrix u_core = wfull * vfull;

  // Input adjustment: the decomposition conjugates the stored dual factor by
  // q, which corresponds to pre-rotating channel inputs by q^T.
  const Matrix& q = w.decomposition.basis_change.matrix;
  Matrix rin = q.transpose();
  Matrix u1 = Matrix::Zero(n, n);
  // u1 = u_core * (I_lb (x) rin (x) I_lc)
  for (int mu = 0; mu < d_lb; ++mu)
    for (int a = 0; a < d_a; ++a)
      for (int a2 = 0; a2 < d_a; ++a2)
        if (rin(a, a2) != Complex(0.0))
          for (int nu = 0; nu < d_lc; ++nu)
            u1.col((mu * d_a + a2) * d_lc + nu) +=
                rin(a, a2) * u_core.col((mu * d_a + a) * d_lc + nu);

  // Output re-reading: within block i the (lambda_B, L_i) pair splits as
  // (B, rest_i) and the (R_i, lambda_C) pair as (C, rest'_i); the block
  // index and both rests pack into D.
  int d_d = 0;
  std::vector<int> d_off(nblocks);
  for (int i = 0; i < nblocks; ++i) {
    d_off[i] = d_d;
    auto [l, r] = blocks[i];
    d_d += (m_b * l) * (r * m_c);
  }
  Matrix rout = Matrix::Zero(n, n);
  off = 0;
  for (int i = 0; i < nblocks; ++i) {
    auto [l, r] = blocks[i];
    const int rest_b = m_b * l, rest_c = r * m_c;
    for (int mu = 0; mu < d_lb; ++mu)
      for (int k = 0; k < l; ++k)
        for (int j = 0; j < r; ++j)
          for (int nu = 0; nu < d_lc; ++nu) {
            int t = mu * l + k;
            int b = t / rest_b, s = t % rest_b;
            int p = j * d_lc + nu;
            int c = p / rest_c, tt = p % rest_c;
            int dd = d_off[i] + s * rest_c + tt;
            long in_idx = (long(mu) * d_a + off + k * r + j) * d_lc + nu;
            long out_idx = (long(b) * d_d + dd) * d_c + c;
            rout(out_idx, in_idx) = 1.0;
          }
    off += l * r;
  }
  Matrix u_final = rout * u1;

  SystemLabel lb{"lambdaB", d_lb}, lc{"lambdaC", d_lc}, dl{"D", d_d};
  SystemLabel a_in = w.decomposition.basis_change.in_structure.factors()[0];
  SystemLabel b_out = ch.outputs.factors()[0], c_out = ch.outputs.factors()[1];
  out.u = UnitaryGate{u_final, SpaceStructure({lb, a_in, lc}),
                      SpaceStructure({b_out, dl, c_out})};
  out.lambda_b = lb;
  out.lambda_c = lc;
  out.d_label = dl;
  Matrix anc_b = Matrix::Zero(d_lb, d_lb);
  anc_b(0, 0) = 1.0;
  Matrix anc_c = Matrix::Zero(d_lc, d_lc);
  anc_c(0, 0) = 1.0;
  out.ancilla_b = ComplexDense{SpaceStructure({lb}), std::move(anc_b)};
  out.ancilla_c = ComplexDense{SpaceStructure({lc}), std::move(anc_c)};
  out.v = std::move(v);
  out.w = std::move(wm);

  out.unitarity_residual =
      frobenius_norm(Matrix(u_final.adjoint() * u_final - Matrix::Identity(n, n)));

  // Channel reproduction: feed |0>_lb, |0>_lc, trace D; the induced Choi on
  // (B, C, A*) is assembled column by column.
  {
    Matrix rep = Matrix::Zero(d_b * d_c * d_a, d_b * d_c * d_a);
    std::vector<Vector> cols(d_a);
    for (int a = 0; a < d_a; ++a) cols[a] = u_final.col((0 * d_a + a) * d_lc + 0);
    for (int a = 0; a < d_a; ++a)
      for (int a2 = 0; a2 < d_a; ++a2)
        for (int b = 0; b < d_b; ++b)
          for (int b2 = 0; b2 < d_b; ++b2)
            for (int c = 0; c < d_c; ++c)
              for (int c2 = 0; c2 < d_c; ++c2) {
                Complex acc = 0.0;
                for (int dd = 0; dd < d_d; ++dd)
                  acc += cols[a]((long(b) * d_d + dd) * d_c + c) *
                         std::conj(cols[a2]((long(b2) * d_d + dd) * d_c + c2));
                rep((long(b) * d_c + c) * d_a + a, (long(b2) * d_c + c2) * d_a + a2) += acc;
              }
    ComplexDense orig = permute_to(ch.op, ch.outputs.concat(ch.inputs));
    out.reproduction_residual = frobenius_norm(Matrix(rep - orig.mat));
  }

  out.influence_b_to_c = no_causal_influence(out.u, lb.name, c_out.name, tol).residual;
  out.influence_c_to_b = no_causal_influence(out.u, lc.name, b_out.name, tol).residual;
  return out;
}

// ---------------------------------------------------------------------------
// k-output generalization
// ---------------------------------------------------------------------------

struct MultiQciResult {
  bool independent = false;
  std::vector<double> per_output_cmi;  // I(B_i : rest | A)
  double product_defect = 0.0;
  double max_pairwise_commutator = 0.0;
};

// Every single output must have zero conditional mutual information with the
// rest; when that holds the ordered product of single-output marginals must
// reproduce the operator with pairwise-commuting factors.
inline MultiQciResult multi_qci_check(const ChoiOperator& ch, double tol = kQciDefaultTol) {
  const int k = ch.outputs.size();
  if (k < 2) throw StructureError("multi_qci_check expects at least two outputs");
  MultiQciResult r;
  r.independent = true;
  for (const auto& f : ch.outputs.factors()) {
    double cmi = conditional_mutual_information_grouped(ch, {f.name});
    r.per_output_cmi.push_back(cmi);
    if (cmi > tol) r.independent = false;
  }
  if (r.independent) {
    std::vector<ComplexDense> factors;
    for (const auto& f : ch.outputs.factors())
      factors.push_back(embed(marginal_channel(ch, {f.name}).op, ch.op.structure));
    Matrix prod = factors[0].mat;
    for (int i = 1; i < k; ++i) prod = prod * factors[i].mat;
    r.product_defect = frobenius_norm(Matrix(ch.op.mat - prod));
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j)
        r.max_pairwise_commutator =
            std::max(r.max_pairwise_commutator,
                     frobenius_norm(Matrix(factors[i].mat * factors[j].mat -
                                           factors[j].mat * factors[i].mat)));
    if (r.product_defect > tol || r.max_pairwise_commutator > tol)
      throw Error("CMI tests passed but the product form failed; tolerance breakdown");
  }
  return r;
}

struct MultiBlock {
  std::vector<int> dims;                // one factor per output
  std::vector<ChoiOperator> components; // B_j | A_i^j
};

struct MultiDecomposition {
  UnitaryGate basis_change;
  std::vector<MultiBlock> blocks;
  double reconstruction_residual = 0.0;
};

namespace detail {

struct MultiPart {
  std::vector<MultiBlock> blocks;
  Matrix q;
};

// Peel outputs off one at a time: decompose (first | rest), then recurse on
// each right component; the composed basis change interleaves the inner
// rotations block by block.
inline MultiPart multi_decompose_impl(const ChoiOperator& ch, double tol, uint64_t seed) {
  const int d_in = ch.dim_in();
  if (ch.outputs.size() == 1) {
    MultiPart p;
    p.q = Matrix::Identity(d_in, d_in);
    p.blocks.push_back({{d_in}, {ch}});
    return p;
  }
  CommonCauseWitness w =
      find_decomposition_grouped(ch, {ch.outputs.factors()[0].name}, tol, seed);
  const Matrix& q_outer = w.decomposition.basis_change.matrix;

  MultiPart p;
  p.q = Matrix::Zero(d_in, d_in);
  int off = 0, pos = 0;
  for (size_t i = 0; i < w.decomposition.blocks.size(); ++i) {
    auto [l, r] = w.decomposition.blocks[i];
    MultiPart inner = multi_decompose_impl(w.right_channels[i], tol, seed + i + 1);
    int inner_off = 0;
    for (const auto& ib : inner.blocks) {
      int m = 1;
      for (int d : ib.dims) m *= d;
      // Columns for the flattened (k, inner) indices, k major.
      for (int k = 0; k < l; ++k)
        for (int t = 0; t < m; ++t) {
          Vector col = Vector::Zero(d_in);
          for (int j = 0; j < r; ++j)
            col += inner.q(j, inner_off + t) * q_outer.col(off + k * r + j);
          p.q.col(pos + k * m + t) = col;
        }
      pos += l * m;
      MultiBlock nb;
      nb.dims.push_back(l);
      for (int d : ib.dims) nb.dims.push_back(d);
      nb.components.push_back(w.left_channels[i]);
      for (const auto& c : ib.components) nb.components.push_back(c);
      p.blocks.push_back(std::move(nb));
      inner_off += m;
    }
    off += l * r;
  }
  return p;
}

}  // namespace detail

inline MultiDecomposition multi_find_decomposition(const ChoiOperator& ch,
                                                   double tol = kQciDefaultTol,
                                                   uint64_t seed = 0) {
  auto mq = multi_qci_check(ch, tol);
  if (!mq.independent) {
    double worst = *std::max_element(mq.per_output_cmi.begin(), mq.per_output_cmi.end());
    throw NotConditionallyIndependent(worst);
  }
  auto part = detail::multi_decompose_impl(ch, tol, seed);

  MultiDecomposition out;
  SystemLabel a_plain{detail::fused_input_base(ch.inputs), ch.dim_in()};
  out.basis_change = UnitaryGate{part.q, SpaceStructure({a_plain}), SpaceStructure({a_plain})};
  out.blocks = std::move(part.blocks);

  // Reconstruction: block-diagonal sum of tensor products of the components,
  // conjugated back on the dual input factor.
  const int d_a = ch.dim_in();
  const int dout = ch.dim_out();
  Matrix block_op = Matrix::Zero(dout * d_a, dout * d_a);
  ComplexDense orig = permute_to(ch.op, ch.outputs.concat(ch.inputs));
  int off = 0;
  for (const auto& blk : out.blocks) {
    int m = 1;
    for (int d : blk.dims) m *= d;
    ComplexDense tensor = blk.components[0].op;
    for (size_t j = 1; j < blk.components.size(); ++j) {
      // Relabel to keep factor names unique in the running product.
      ComplexDense next = blk.components[j].op;
      std::vector<SystemLabel> fs;
      for (const auto& f : next.structure.factors())
        fs.push_back({f.name + "#" + std::to_string(j), f.dim});
      next.structure = SpaceStructure(fs);
      tensor = kron(tensor, next);
    }
    // tensor factor order: (B_1, L*), (B_2, R*#1), ... permute so outputs
    // come first in channel output order, then the input factors in order.
    std::vector<std::string> target;
    {
      std::vector<std::string> outs, ins;
      int j = 0;
      for (const auto& comp : blk.components) {
        std::string suffix = (j == 0) ? "" : "#" + std::to_string(j);
        for (const auto& f : comp.outputs.factors()) outs.push_back(f.name + suffix);
        for (const auto& f : comp.inputs.factors()) ins.push_back(f.name + suffix);
        ++j;
      }
      target = outs;
      for (const auto& s : ins) target.push_back(s);
    }
    ComplexDense ordered = permute_systems(tensor, target);
    // Insert into block_op at the A*-offset.
    for (int o = 0; o < dout; ++o)
      for (int o2 = 0; o2 < dout; ++o2)
        for (int t = 0; t < m; ++t)
          for (int t2 = 0; t2 < m; ++t2)
            block_op(long(o) * d_a + off + t, long(o2) * d_a + off + t2) +=
                ordered.mat(long(o) * m + t, long(o2) * m + t2);
    off += m;
  }
  Matrix big_q = Matrix::Zero(dout * d_a, dout * d_a);
  for (int o = 0; o < dout; ++o) big_q.block(o * d_a, o * d_a, d_a, d_a) = part.q;
  out.reconstruction_residual =
      frobenius_norm(Matrix(big_q * block_op * big_q.adjoint() - orig.mat));
  if (out.reconstruction_residual > tol * std::max(1.0, frobenius_norm(orig.mat)))
    throw DecompositionFailed("nested decomposition does not reconstruct the channel",
                              out.reconstruction_residual);
  return out;
}

// ---------------------------------------------------------------------------
// Classical reduction
// ---------------------------------------------------------------------------

struct ClassicalReduction {
  bool agree = false;
  bool quantum_independent = false;
  bool classical_independent = false;
};

// For a dephasing-invariant channel, the quantum test must agree with the
// classical conditional-independence test on the diagonal table.
inline ClassicalReduction classical_reduction_check(const ChoiOperator& ch,
                                                    double tol = kQciDefaultTol) {
  if (ch.outputs.size() != 2)
    throw StructureError("classical_reduction_check expects exactly two outputs");
  auto deph = dephase(ch, tol);
  if (!deph.was_invariant)
    throw NotDiagonal("channel operator is not diagonal in the computational basis");

  ComplexDense ord = permute_to(ch.op, ch.outputs.concat(ch.inputs));
  const int db = ch.outputs.factors()[0].dim;
  const int dc = ch.outputs.factors()[1].dim;
  const int da = ch.dim_in();
  std::vector<double> table(db * dc * da);
  for (int b = 0; b < db; ++b)
    for (int c = 0; c < dc; ++c)
      for (int a = 0; a < da; ++a)
        table[(b * dc + c) * da + a] = ord.mat((long(b) * dc + c) * da + a,
                                               (long(b) * dc + c) * da + a)
                                           .real();
  Cpd p({{"Y", db}, {"Z", dc}}, {{"X", da}}, std::move(table));
  p.require_normalized(1e-8);

  ClassicalReduction r;
  r.classical_independent = ci_check(p, tol);
  r.quantum_independent = qci_factorization_check(ch, tol).independent;
  r.agree = r.classical_independent == r.quantum_independent;
  return r;
}

}  // namespace qcm

#endif  // QCM_QCI_HPP
