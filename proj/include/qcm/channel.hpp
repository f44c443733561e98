#ifndef QCM_CHANNEL_HPP
#define QCM_CHANNEL_HPP

// Choi-operator representation of quantum channels.
//
// A channel from A to B is stored as the positive operator
//   rho_{B|A} = sum_ij E(|i><j|) (x) |i><j|_{A*}
// on H_B (x) H_A*, normalized so that Tr_B rho_{B|A} = I_{A*}. The input
// factor carries the dual label (trailing star); all operators live in the
// fixed computational product basis.

#include "qcm/core.hpp"

namespace qcm {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct ChoiOperator {
  ComplexDense op;          // structure = outputs ++ dual(inputs)
  SpaceStructure outputs;   // plain labels (B, C, ...)
  SpaceStructure inputs;    // dual labels (A*, ...)

  int dim_out() const { return outputs.total_dim(); }
  int dim_in() const { return inputs.total_dim(); }
};

struct KrausSet {
  std::vector<Matrix> operators;  // each dim_out x dim_in
  SpaceStructure out_structure;   // plain labels
  SpaceStructure in_structure;    // plain labels
};

struct UnitaryGate {
  Matrix matrix;  // rows indexed by out_structure, columns by in_structure
  SpaceStructure in_structure;
  SpaceStructure out_structure;
};

inline SpaceStructure dual_structure(const SpaceStructure& s) {
  std::vector<SystemLabel> fs;
  for (const auto& f : s.factors()) fs.push_back(dual(f));
  return SpaceStructure(fs);
}

inline SpaceStructure undual_structure(const SpaceStructure& s) {
  std::vector<SystemLabel> fs;
  for (const auto& f : s.factors()) {
    if (f.name.empty() || f.name.back() != '*')
      throw StructureError("factor '" + f.name + "' is not a dual label");
    fs.push_back({f.name.substr(0, f.name.size() - 1), f.dim});
  }
  return SpaceStructure(fs);
}

// Residuals of the three channel invariants. All should be ~0 for a valid
// CPTP channel in this representation.
struct ChannelCheck {
  double hermiticity = 0.0;        // ||op - op^dag||_max
  double min_eigenvalue = 0.0;     // most negative eigenvalue (0 if none)
  double trace_preservation = 0.0; // ||Tr_out op - I_in||_F

  bool pass(double psd_tol = 1e-10, double tp_tol = 1e-9) const {
    return hermiticity <= psd_tol && min_eigenvalue >= -psd_tol &&
           trace_preservation <= tp_tol;
  }
};

inline ChannelCheck check_channel(const ChoiOperator& ch) {
  ChannelCheck r;
  double scale = std::max(1.0, max_abs(ch.op.mat));
  r.hermiticity = max_abs(Matrix(ch.op.mat - ch.op.mat.adjoint())) / scale;
  r.min_eigenvalue = std::min(0.0, min_eigenvalue({ch.op.structure, 0.5 * (ch.op.mat + ch.op.mat.adjoint())}));
  ComplexDense marg = partial_trace(ch.op, ch.outputs.names());
  ComplexDense marg_aligned = ch.inputs.empty() ? marg : permute_to(marg, ch.inputs);
  r.trace_preservation =
      frobenius_norm(Matrix(marg_aligned.mat - Matrix::Identity(ch.dim_in(), ch.dim_in())));
  return r;
}

inline void require_valid_channel(const ChoiOperator& ch, double tol = 1e-8) {
  auto c = check_channel(ch);
  if (!c.pass(tol, tol))
    throw ValidationError("operator violates the channel invariants (hermiticity " +
                          std::to_string(c.hermiticity) + ", min eigenvalue " +
                          std::to_string(c.min_eigenvalue) + ", trace defect " +
                          std::to_string(c.trace_preservation) + ")");
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

inline double kraus_completeness_defect(const KrausSet& k) {
  const int din = k.in_structure.total_dim();
  Matrix acc = Matrix::Zero(din, din);
  for (const auto& m : k.operators) acc += m.adjoint() * m;
  return frobenius_norm(Matrix(acc - Matrix::Identity(din, din)));
}

inline ChoiOperator choi_from_kraus(const KrausSet& k) {
  const int din = k.in_structure.total_dim();
  const int dout = k.out_structure.total_dim();
  if (kraus_completeness_defect(k) > 1e-10)
    throw ValidationError("Kraus set is not trace preserving");
  for (const auto& m : k.operators)
    if (m.rows() != dout || m.cols() != din)
      throw StructureError("Kraus operator shape does not match the declared systems");

  // rho = sum_s |w_s><w_s| with |w_s> = sum_i (K_s|i>) (x) |i>_{A*}.
  Matrix rho = Matrix::Zero(dout * din, dout * din);
  for (const auto& m : k.operators) {
    Vector w(dout * din);
    for (int b = 0; b < dout; ++b)
      for (int i = 0; i < din; ++i) w(b * din + i) = m(b, i);
    rho += w * w.adjoint();
  }
  SpaceStructure in_dual = dual_structure(k.in_structure);
  SpaceStructure full = k.out_structure.concat(in_dual);
  return {ComplexDense{full, std::move(rho)}, k.out_structure, in_dual};
}

inline ChoiOperator choi_from_unitary(const UnitaryGate& u) {
  const int d = u.in_structure.total_dim();
  if (u.out_structure.total_dim() != d || u.matrix.rows() != d || u.matrix.cols() != d)
    throw StructureError("unitary gate dimensions do not match its structures");
  if (frobenius_norm(Matrix(u.matrix.adjoint() * u.matrix - Matrix::Identity(d, d))) > 1e-9)
    throw ValidationError("gate is not unitary");
  KrausSet k{{u.matrix}, u.out_structure, u.in_structure};
  return choi_from_kraus(k);
}

// Linking operator tau^id on H_A* (x) H_A: the rank-one operator
// sum_lm |l><m|_{A*} (x) |l><m|_A, of trace d_A.
inline ComplexDense linking_operator(const SystemLabel& label) {
  const int d = label.dim;
  SpaceStructure s({dual(label), label});
  Vector omega = Vector::Zero(d * d);
  for (int l = 0; l < d; ++l) omega(l * d + l) = 1.0;
  return {std::move(s), Matrix(omega * omega.adjoint())};
}

// ---------------------------------------------------------------------------
// Kraus decomposition (from the Choi eigendecomposition)
// ---------------------------------------------------------------------------

inline KrausSet kraus_from_choi(const ChoiOperator& ch, double rank_cutoff = 1e-10) {
  const int dout = ch.dim_out(), din = ch.dim_in();
  // Work in (outputs, inputs) order.
  ComplexDense op = permute_to(ch.op, ch.outputs.concat(ch.inputs));
  auto eig = hermitian_eig(op);
  double scale = std::max(1.0, eig.eigenvalues(0));
  KrausSet k;
  k.out_structure = ch.outputs;
  k.in_structure = undual_structure(ch.inputs);
  for (int s = 0; s < eig.eigenvalues.size(); ++s) {
    double lam = eig.eigenvalues(s);
    if (lam <= rank_cutoff * scale) continue;
    Matrix m(dout, din);
    for (int b = 0; b < dout; ++b)
      for (int i = 0; i < din; ++i) m(b, i) = std::sqrt(lam) * eig.eigenvectors.mat(b * din + i, s);
    k.operators.push_back(std::move(m));
  }
  if (k.operators.empty()) k.operators.push_back(Matrix::Zero(dout, din));
  return k;
}

inline Matrix apply_kraus(const KrausSet& k, const Matrix& rho) {
  Matrix out = Matrix::Zero(k.out_structure.total_dim(), k.out_structure.total_dim());
  for (const auto& m : k.operators) out += m * rho * m.adjoint();
  return out;
}

// ---------------------------------------------------------------------------
// Application / composition / marginals
// ---------------------------------------------------------------------------

// rho_B = Tr_A (rho_{B|A} tau^id_A rho_A): embed each factor with identities,
// multiply in the written order, trace over A* and A.
inline ComplexDense apply_channel(const ChoiOperator& ch, const ComplexDense& state) {
  if (!state.structure.same_factors(undual_structure(ch.inputs)))
    throw StructureError("state labels do not match the channel input");
  std::vector<ComplexDense> factors;
  factors.push_back(ch.op);
  std::vector<std::string> traced;
  for (const auto& f : ch.inputs.factors()) {
    SystemLabel plain{f.name.substr(0, f.name.size() - 1), f.dim};
    factors.push_back(linking_operator(plain));
    traced.push_back(f.name);
    traced.push_back(plain.name);
  }
  factors.push_back(state);
  ComplexDense prod = aligned_product(factors);
  ComplexDense out = partial_trace(prod, traced);
  return permute_to(out, ch.outputs);
}

// Sequential composition over the linked systems: every output of `first`
// that reappears (dualized) among the inputs of `second` is contracted via
// tau^id; other inputs of `second` pass through.
inline ChoiOperator compose(const ChoiOperator& second, const ChoiOperator& first) {
  std::vector<std::string> linked;
  for (const auto& f : first.outputs.factors()) {
    if (second.inputs.contains(dual_name(f.name))) {
      if (second.inputs.at(dual_name(f.name)).dim != f.dim)
        throw StructureError("dimension mismatch composing on '" + f.name + "'");
      linked.push_back(f.name);
    }
  }
  if (linked.empty()) throw StructureError("compose: no linked systems");

  std::vector<ComplexDense> factors;
  factors.push_back(second.op);
  std::vector<std::string> traced;
  for (const auto& name : linked) {
    factors.push_back(linking_operator(first.outputs.at(name)));
    traced.push_back(name);
    traced.push_back(dual_name(name));
  }
  factors.push_back(first.op);
  ComplexDense prod = aligned_product(factors);
  ComplexDense op = partial_trace(prod, traced);

  SpaceStructure outputs = second.outputs;
  std::vector<SystemLabel> ins;
  for (const auto& f : second.inputs.factors())
    if (std::find(linked.begin(), linked.end(), f.name.substr(0, f.name.size() - 1)) ==
        linked.end())
      ins.push_back(f);
  for (const auto& f : first.inputs.factors()) ins.push_back(f);
  SpaceStructure inputs(ins);
  op = permute_to(op, outputs.concat(inputs));
  return {std::move(op), std::move(outputs), std::move(inputs)};
}

inline ChoiOperator marginal_channel(const ChoiOperator& ch,
                                     const std::vector<std::string>& keep) {
  std::vector<std::string> drop;
  for (const auto& f : ch.outputs.factors())
    if (std::find(keep.begin(), keep.end(), f.name) == keep.end()) drop.push_back(f.name);
  for (const auto& n : keep) (void)ch.outputs.at(n);
  ComplexDense op = partial_trace(ch.op, drop);
  SpaceStructure outputs = ch.outputs.keep(keep);
  op = permute_to(op, outputs.concat(ch.inputs));
  return {std::move(op), std::move(outputs), ch.inputs};
}

// ---------------------------------------------------------------------------
// Dephasing
// ---------------------------------------------------------------------------

struct DephaseResult {
  ChoiOperator channel;
  bool was_invariant = false;
  double offdiag_mass = 0.0;  // Frobenius mass removed
};

// Zero the off-diagonal entries in the computational product basis.
inline DephaseResult dephase(const ChoiOperator& ch, double tol = 1e-10) {
  Matrix d = Matrix(ch.op.mat.diagonal().asDiagonal());
  double off = frobenius_norm(Matrix(ch.op.mat - d));
  return {ChoiOperator{ComplexDense{ch.op.structure, std::move(d)}, ch.outputs, ch.inputs},
          off <= tol, off};
}

// ---------------------------------------------------------------------------
// Stinespring dilation
// ---------------------------------------------------------------------------

// Extend prescribed orthonormal columns to a full unitary by Gram-Schmidt
// against the standard basis. `cols[i]` may be empty (to be filled).
inline Matrix complete_to_unitary(int n, const std::vector<std::pair<int, Vector>>& fixed) {
  Matrix u = Matrix::Zero(n, n);
  std::vector<bool> used(n, false);
  std::vector<Vector> have;
  for (const auto& [pos, v] : fixed) {
    u.col(pos) = v;
    used[pos] = true;
    have.push_back(v);
  }
  int e = 0;
  for (int c = 0; c < n; ++c) {
    if (used[c]) continue;
    Vector v;
    for (; e <= n; ++e) {
      if (e == n) throw Error("unitary completion failed");
      v = Vector::Zero(n);
      v(e) = 1.0;
      for (const auto& h : have) v -= h * (h.adjoint() * v)(0);
      // second orthogonalization pass for numerical safety
      for (const auto& h : have) v -= h * (h.adjoint() * v)(0);
      if (v.norm() > 1e-6) break;
    }
    v.normalize();
    u.col(c) = v;
    have.push_back(v);
    used[c] = true;
    ++e;
  }
  return u;
}

struct StinespringResult {
  UnitaryGate u;              // from A (x) lambda to B (x) Bbar
  ComplexDense ancilla_state; // pure state |0><0| on lambda
  SystemLabel ancilla_label;
  SystemLabel env_label;      // the traced-out output Bbar
};

// Canonical dilation from the Choi eigendecomposition: Kraus vectors become
// the columns of an isometry, the ancilla dimension is the Kraus count padded
// so that d_A d_lambda = d_B d_Bbar has an integer solution, and the isometry
// is completed to a unitary on the orthogonal complement.
inline StinespringResult stinespring_dilation(const ChoiOperator& ch,
                                              const std::string& ancilla_name = "lambda",
                                              const std::string& env_name = "Bbar") {
  KrausSet k = kraus_from_choi(ch);
  const int din = ch.dim_in(), dout = ch.dim_out();
  const int rank = static_cast<int>(k.operators.size());

  int d_lambda = 1;
  while (din * d_lambda < dout * rank || (din * d_lambda) % dout != 0) ++d_lambda;
  const int d_env = din * d_lambda / dout;
  const int n = din * d_lambda;

  // Isometry on the |0>_lambda slice: (|a> (x) |0>) -> sum_s (K_s|a>) (x) |s>.
  std::vector<std::pair<int, Vector>> cols;
  for (int a = 0; a < din; ++a) {
    Vector v = Vector::Zero(n);
    for (int s = 0; s < rank; ++s)
      for (int b = 0; b < dout; ++b) v(b * d_env + s) += k.operators[s](b, a);
    cols.emplace_back(a * d_lambda + 0, std::move(v));
  }
  Matrix u = complete_to_unitary(n, cols);

  SystemLabel lam{ancilla_name, d_lambda};
  SystemLabel env{env_name, d_env};
  SpaceStructure in_s = undual_structure(ch.inputs).concat(SpaceStructure({lam}));
  SpaceStructure out_s = ch.outputs.concat(SpaceStructure({env}));

  Matrix anc = Matrix::Zero(d_lambda, d_lambda);
  anc(0, 0) = 1.0;
  return {UnitaryGate{std::move(u), std::move(in_s), std::move(out_s)},
          ComplexDense{SpaceStructure({lam}), std::move(anc)}, lam, env};
}

// Action of a dilation on an input state: Tr_env (U (rho (x) |0><0|) U^dag),
// reading the output in the gate's out_structure.
inline ComplexDense apply_dilation(const StinespringResult& d, const ComplexDense& rho) {
  ComplexDense joint = kron(rho, d.ancilla_state);
  // Align to the gate's input order.
  joint = permute_to(joint, d.u.in_structure);
  Matrix evolved = d.u.matrix * joint.mat * d.u.matrix.adjoint();
  ComplexDense out{d.u.out_structure, std::move(evolved)};
  return partial_trace(out, {d.env_label.name});
}

}  // namespace qcm

#endif  // QCM_CHANNEL_HPP
