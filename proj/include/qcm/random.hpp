#ifndef QCM_RANDOM_HPP
#define QCM_RANDOM_HPP

// Seeded random generators for states, unitaries and channels. Every sampler
// takes an explicit engine so runs are reproducible from a recorded seed.

#include "qcm/channel.hpp"

namespace qcm {

inline Matrix ginibre(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = Complex(g(rng), g(rng));
  return m;
}

// Haar-distributed unitary: QR of a Ginibre matrix with the phase convention
// fixed by the diagonal of R.
inline Matrix haar_unitary(int n, Rng& rng) {
  Matrix g = ginibre(n, n, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < n; ++i) {
    Complex d = r(i, i);
    q.col(i) *= (std::abs(d) > 0 ? d / std::abs(d) : Complex(1.0));
  }
  return q;
}

// Random isometry C^din -> C^dout: the first din columns of a Haar unitary.
inline Matrix haar_isometry(int dout, int din, Rng& rng) {
  if (din > dout) throw StructureError("isometry needs dout >= din");
  return haar_unitary(dout, rng).leftCols(din);
}

inline Matrix random_density_matrix(int d, Rng& rng) {
  Matrix g = ginibre(d, d, rng);
  Matrix rho = g * g.adjoint();
  return rho / rho.trace().real();
}

// Random CPTP channel with the given Kraus rank, via a Haar isometry
// V: C^din -> C^dout (x) C^rank and K_s = (I (x) <s|) V.
inline KrausSet random_kraus_channel(const SpaceStructure& out_s, const SpaceStructure& in_s,
                                     int rank, Rng& rng) {
  const int din = in_s.total_dim(), dout = out_s.total_dim();
  rank = std::min(rank, dout * din);
  Matrix v = haar_isometry(dout * rank, din, rng);
  KrausSet k{{}, out_s, in_s};
  for (int s = 0; s < rank; ++s) {
    Matrix m(dout, din);
    for (int b = 0; b < dout; ++b) m.row(b) = v.row(b * rank + s);
    k.operators.push_back(std::move(m));
  }
  return k;
}

inline ChoiOperator random_channel(const SpaceStructure& out_s, const SpaceStructure& in_s,
                                   int rank, Rng& rng) {
  return choi_from_kraus(random_kraus_channel(out_s, in_s, rank, rng));
}

// ---------------------------------------------------------------------------
// Channels with a known direct-sum-of-tensor-products structure
// ---------------------------------------------------------------------------

// A channel built as sum_i rho_{B|L_i} (x) rho_{C|R_i} on H_A = (+)_i L_i (x) R_i,
// then conjugated on the input by a Haar unitary. Used as a generator oracle:
// the blocks and components are known by construction.
struct Condition4Sample {
  ChoiOperator channel;                       // rho_{BC|A}
  std::vector<std::pair<int, int>> blocks;    // (d_L, d_R) per block
  Matrix input_rotation;                      // applied to the A* factor
  std::vector<ChoiOperator> left_components;  // B|L_i
  std::vector<ChoiOperator> right_components; // C|R_i
};

inline Condition4Sample make_condition4_channel(const std::vector<std::pair<int, int>>& blocks,
                                                int d_b, int d_c, int kraus_rank, Rng& rng,
                                                bool rotate_input = true) {
  int d_a = 0;
  for (auto [l, r] : blocks) d_a += l * r;
  SystemLabel la{"A", d_a}, lb{"B", d_b}, lc{"C", d_c};

  Condition4Sample s;
  s.blocks = blocks;
  Matrix big = Matrix::Zero(d_b * d_c * d_a, d_b * d_c * d_a);
  SpaceStructure full({lb, lc, dual(la)});
  const auto st = full.strides();

  int off = 0;
  for (auto [l, r] : blocks) {
    ChoiOperator beta = random_channel(SpaceStructure({lb}), SpaceStructure({{"A", l}}),
                                       std::min(kraus_rank, d_b * l), rng);
    ChoiOperator gamma = random_channel(SpaceStructure({lc}), SpaceStructure({{"A", r}}),
                                        std::min(kraus_rank, d_c * r), rng);
    // beta on (B, L*), gamma on (C, R*); block occupies A*-indices
    // [off, off + l*r) with the L index major.
    for (int b = 0; b < d_b; ++b)
      for (int b2 = 0; b2 < d_b; ++b2)
        for (int c = 0; c < d_c; ++c)
          for (int c2 = 0; c2 < d_c; ++c2)
            for (int k = 0; k < l; ++k)
              for (int k2 = 0; k2 < l; ++k2)
                for (int j = 0; j < r; ++j)
                  for (int j2 = 0; j2 < r; ++j2) {
                    long row = b * st[0] + c * st[1] + (off + k * r + j);
                    long col = b2 * st[0] + c2 * st[1] + (off + k2 * r + j2);
                    big(row, col) += beta.op.mat(b * l + k, b2 * l + k2) *
                                     gamma.op.mat(c * r + j, c2 * r + j2);
                  }
    s.left_components.push_back(std::move(beta));
    s.right_components.push_back(std::move(gamma));
    off += l * r;
  }

  s.input_rotation = rotate_input ? haar_unitary(d_a, rng) : Matrix(Matrix::Identity(d_a, d_a));
  ComplexDense q{SpaceStructure({dual(la)}), s.input_rotation};
  ComplexDense blockop{full, std::move(big)};
  ComplexDense rotated = aligned_product({embed(q, full), blockop, dagger(embed(q, full))});
  s.channel = {permute_to(rotated, full), SpaceStructure({lb, lc}), SpaceStructure({dual(la)})};
  return s;
}

// Random block patterns (d_L, d_R) with sum d_L * d_R = d_a.
inline std::vector<std::pair<int, int>> random_block_pattern(int d_a, Rng& rng) {
  std::vector<std::pair<int, int>> blocks;
  int rest = d_a;
  std::uniform_int_distribution<int> coin(0, 1);
  while (rest > 0) {
    std::vector<std::pair<int, int>> options;
    for (int l = 1; l <= rest; ++l)
      for (int r = 1; l * r <= rest; ++r) options.push_back({l, r});
    std::uniform_int_distribution<size_t> pick(0, options.size() - 1);
    auto b = options[pick(rng)];
    // bias away from trivial all-(1,1) patterns
    if (b.first * b.second == 1 && rest > 1 && coin(rng)) continue;
    blocks.push_back(b);
    rest -= b.first * b.second;
  }
  return blocks;
}

}  // namespace qcm

#endif  // QCM_RANDOM_HPP
