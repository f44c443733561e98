#ifndef QCM_CLASSICAL_HPP
#define QCM_CLASSICAL_HPP

// Classical causal models: conditional probability tables, the Markov
// condition, deterministic dilations, common-cause compatibility, and
// split-node interventional models.

#include "qcm/core.hpp"

#include <functional>
#include <map>

namespace qcm {

struct Var {
  std::string name;
  int card = 2;

  friend bool operator==(const Var& a, const Var& b) {
    return a.name == b.name && a.card == b.card;
  }
};

inline int card_product(const std::vector<Var>& vs) {
  int c = 1;
  for (const auto& v : vs) c *= v.card;
  return c;
}

inline int ravel(const std::vector<Var>& vs, const std::vector<int>& digits) {
  int idx = 0;
  for (size_t i = 0; i < vs.size(); ++i) idx = idx * vs[i].card + digits[i];
  return idx;
}

inline std::vector<int> unravel(const std::vector<Var>& vs, int idx) {
  std::vector<int> d(vs.size());
  for (int i = static_cast<int>(vs.size()) - 1; i >= 0; --i) {
    d[i] = idx % vs[i].card;
    idx /= vs[i].card;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Conditional probability tables
// ---------------------------------------------------------------------------

// P(targets | givens), stored row-major lexicographically: index
// target_index * given_count + given_index.
class Cpd {
 public:
  Cpd() = default;
  Cpd(std::vector<Var> targets, std::vector<Var> givens, std::vector<double> table)
      : targets_(std::move(targets)), givens_(std::move(givens)), table_(std::move(table)) {
    if (static_cast<int>(table_.size()) != target_count() * given_count())
      throw StructureError("cpd table size does not match variable cardinalities");
  }

  const std::vector<Var>& targets() const { return targets_; }
  const std::vector<Var>& givens() const { return givens_; }
  int target_count() const { return card_product(targets_); }
  int given_count() const { return card_product(givens_); }

  double at(int t, int g) const { return table_[t * given_count() + g]; }
  double& at(int t, int g) { return table_[t * given_count() + g]; }
  const std::vector<double>& table() const { return table_; }

  // Entries nonnegative, each conditioning column sums to 1.
  double normalization_defect() const {
    double worst = 0.0;
    for (int g = 0; g < given_count(); ++g) {
      double sum = 0.0;
      for (int t = 0; t < target_count(); ++t) {
        if (at(t, g) < -1e-15) worst = std::max(worst, -at(t, g));
        sum += at(t, g);
      }
      worst = std::max(worst, std::abs(sum - 1.0));
    }
    return worst;
  }

  void require_normalized(double tol = 1e-12) const {
    if (normalization_defect() > tol)
      throw ValidationError("cpd is not normalized (defect " +
                            std::to_string(normalization_defect()) + ")");
  }

  // Marginal over a subset of target variables (by name), keeping givens.
  Cpd marginal(const std::vector<std::string>& keep) const {
    std::vector<Var> kept;
    std::vector<int> kept_pos;
    for (const auto& n : keep) {
      bool found = false;
      for (size_t i = 0; i < targets_.size(); ++i)
        if (targets_[i].name == n) {
          kept.push_back(targets_[i]);
          kept_pos.push_back(static_cast<int>(i));
          found = true;
        }
      if (!found) throw StructureError("unknown target variable '" + n + "'");
    }
    std::vector<double> out(card_product(kept) * given_count(), 0.0);
    for (int t = 0; t < target_count(); ++t) {
      auto digits = unravel(targets_, t);
      std::vector<int> kd;
      for (int p : kept_pos) kd.push_back(digits[p]);
      int kt = ravel(kept, kd);
      for (int g = 0; g < given_count(); ++g) out[kt * given_count() + g] += at(t, g);
    }
    return Cpd(kept, givens_, std::move(out));
  }

 private:
  std::vector<Var> targets_, givens_;
  std::vector<double> table_;
};

// P(YZ|X) = P(Y|X) P(Z|X) up to tol, for a two-target table.
inline bool ci_check(const Cpd& p, double tol, double* max_dev = nullptr) {
  if (p.targets().size() != 2) throw StructureError("ci_check expects exactly two targets");
  Cpd py = p.marginal({p.targets()[0].name});
  Cpd pz = p.marginal({p.targets()[1].name});
  const int cy = p.targets()[0].card, cz = p.targets()[1].card;
  double worst = 0.0;
  for (int y = 0; y < cy; ++y)
    for (int z = 0; z < cz; ++z)
      for (int g = 0; g < p.given_count(); ++g)
        worst = std::max(worst, std::abs(p.at(y * cz + z, g) - py.at(y, g) * pz.at(z, g)));
  if (max_dev) *max_dev = worst;
  return worst <= tol;
}

// ---------------------------------------------------------------------------
// DAGs
// ---------------------------------------------------------------------------

struct Dag {
  std::vector<std::string> nodes;
  std::vector<std::pair<int, int>> edges;  // (parent, child)

  int find(const std::string& name) const {
    for (size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<int> parents(int i) const {
    std::vector<int> ps;
    for (auto [a, b] : edges)
      if (b == i) ps.push_back(a);
    std::sort(ps.begin(), ps.end());
    return ps;
  }

  // Topological order; throws if the graph has a cycle.
  std::vector<int> topological_order() const {
    const int n = static_cast<int>(nodes.size());
    std::vector<int> indeg(n, 0);
    for (auto [a, b] : edges) {
      if (a < 0 || b < 0 || a >= n || b >= n || a == b)
        throw StructureError("malformed edge in DAG");
      ++indeg[b];
    }
    std::vector<int> order, ready;
    for (int i = 0; i < n; ++i)
      if (indeg[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
      int v = ready.back();
      ready.pop_back();
      order.push_back(v);
      for (auto [a, b] : edges)
        if (a == v && --indeg[b] == 0) ready.push_back(b);
    }
    if (static_cast<int>(order.size()) != n) throw ValidationError("graph has a cycle");
    return order;
  }
};

// ---------------------------------------------------------------------------
// Markov condition
// ---------------------------------------------------------------------------

// Check P(X_1..X_n) = prod_i P(X_i | Parents(i)) with conditionals computed
// from the joint. Zero-probability conditioning fibers get a uniform
// conditional and their configurations are excluded from the comparison
// (the joint must vanish there anyway).
inline bool markov_check(const Cpd& joint, const Dag& dag, double tol, double* max_dev = nullptr) {
  if (!joint.givens().empty()) throw StructureError("markov_check expects a joint distribution");
  const auto& vars = joint.targets();
  if (vars.size() != dag.nodes.size()) throw StructureError("variable/node count mismatch");
  std::vector<int> var_of_node(vars.size());
  for (size_t i = 0; i < dag.nodes.size(); ++i) {
    int v = -1;
    for (size_t j = 0; j < vars.size(); ++j)
      if (vars[j].name == dag.nodes[i]) v = static_cast<int>(j);
    if (v < 0) throw StructureError("joint lacks variable '" + dag.nodes[i] + "'");
    var_of_node[i] = v;
  }
  dag.topological_order();  // acyclicity

  const int total = joint.target_count();
  const int n = static_cast<int>(vars.size());

  // cond[i]: P(x_i | pa assignment); zero_fiber[i]: mass-zero pa assignments.
  std::vector<std::map<std::vector<int>, std::vector<double>>> cond(n);
  std::vector<std::map<std::vector<int>, bool>> zero_fiber(n);
  for (int i = 0; i < n; ++i) {
    int vi = var_of_node[i];
    auto ps = dag.parents(i);
    std::map<std::vector<int>, std::vector<double>> num;
    for (int t = 0; t < total; ++t) {
      auto digits = unravel(vars, t);
      std::vector<int> key;
      for (int p : ps) key.push_back(digits[var_of_node[p]]);
      auto& vec = num[key];
      if (vec.empty()) vec.assign(vars[vi].card, 0.0);
      vec[digits[vi]] += joint.table()[t];
    }
    for (auto& [key, vec] : num) {
      double mass = std::accumulate(vec.begin(), vec.end(), 0.0);
      if (mass <= 1e-14) {
        zero_fiber[i][key] = true;
        std::fill(vec.begin(), vec.end(), 1.0 / vars[vi].card);
      } else {
        for (auto& x : vec) x /= mass;
      }
      cond[i][key] = vec;
    }
  }

  double worst = 0.0;
  for (int t = 0; t < total; ++t) {
    auto digits = unravel(vars, t);
    bool excluded = false;
    double prod = 1.0;
    for (int i = 0; i < n; ++i) {
      auto ps = dag.parents(i);
      std::vector<int> key;
      for (int p : ps) key.push_back(digits[var_of_node[p]]);
      if (zero_fiber[i].count(key)) excluded = true;
      prod *= cond[i][key][digits[var_of_node[i]]];
    }
    if (excluded) {
      worst = std::max(worst, std::abs(joint.table()[t]));  // joint must vanish
    } else {
      worst = std::max(worst, std::abs(joint.table()[t] - prod));
    }
  }
  if (max_dev) *max_dev = worst;
  return worst <= tol;
}

// ---------------------------------------------------------------------------
// Deterministic dilations
// ---------------------------------------------------------------------------

// lambda with P(lambda) and Y = f(X, lambda) reproducing P(Y|X).
struct ClassicalDilation {
  int lambda_card = 1;
  std::vector<double> lambda_dist;
  std::vector<int> function;  // f[lambda * |X| + x] in Y
  int x_card = 1;
  int y_card = 1;

  double prob(int y, int x) const {
    double s = 0.0;
    for (int l = 0; l < lambda_card; ++l)
      if (function[l * x_card + x] == y) s += lambda_dist[l];
    return s;
  }
};

// Canonical random-function construction: lambda ranges over functions
// X -> Y with weight prod_x P(f(x)|x); zero-weight functions are pruned.
inline ClassicalDilation classical_dilation(const Cpd& p) {
  p.require_normalized(1e-9);
  const int xc = p.given_count(), yc = p.target_count();
  ClassicalDilation d;
  d.x_card = xc;
  d.y_card = yc;
  long count = 1;
  for (int i = 0; i < xc; ++i) {
    count *= yc;
    if (count > (1 << 20)) throw Error("classical_dilation: function space too large");
  }
  for (long g = 0; g < count; ++g) {
    long rest = g;
    std::vector<int> f(xc);
    double w = 1.0;
    for (int x = 0; x < xc; ++x) {
      f[x] = rest % yc;
      rest /= yc;
      w *= p.at(f[x], x);
    }
    if (w <= 1e-15) continue;
    d.lambda_dist.push_back(w);
    for (int x = 0; x < xc; ++x) d.function.push_back(f[x]);
  }
  if (d.lambda_dist.empty()) throw ValidationError("cpd has no support");
  d.lambda_card = static_cast<int>(d.lambda_dist.size());
  return d;
}

// Complete-common-cause form for a conditionally independent P(YZ|X):
// independent latents and per-output functions, built by dilating each
// marginal channel separately.
struct ClassicalCommonCause {
  ClassicalDilation y_part, z_part;

  double prob(int y, int z, int x) const { return y_part.prob(y, x) * z_part.prob(z, x); }
};

inline ClassicalCommonCause common_cause_dilation_classical(const Cpd& p, double tol = 1e-12) {
  double dev = 0.0;
  if (!ci_check(p, tol, &dev)) throw NotConditionallyIndependent(dev);
  Cpd py = p.marginal({p.targets()[0].name});
  Cpd pz = p.marginal({p.targets()[1].name});
  return {classical_dilation(py), classical_dilation(pz)};
}

// ---------------------------------------------------------------------------
// Functional causal models
// ---------------------------------------------------------------------------

struct NodeMechanism {
  int lambda_card = 1;
  std::vector<double> lambda_dist;  // P(lambda_i)
  // f[lambda * |parents| + parent_index] -> value; parent assignments are
  // indexed lexicographically in the DAG's sorted parent order.
  std::vector<int> function;
};

struct FunctionalModel {
  Dag dag;
  std::vector<int> cards;  // per node
  std::vector<NodeMechanism> mechanisms;
};

inline Cpd functional_model_to_joint(const FunctionalModel& m) {
  const int n = static_cast<int>(m.dag.nodes.size());
  auto order = m.dag.topological_order();
  std::vector<Var> vars;
  for (int i = 0; i < n; ++i) vars.push_back({m.dag.nodes[i], m.cards[i]});
  std::vector<double> joint(card_product(vars), 0.0);

  long lam_total = 1;
  for (const auto& mech : m.mechanisms) lam_total *= mech.lambda_card;
  for (long lam = 0; lam < lam_total; ++lam) {
    long rest = lam;
    std::vector<int> lv(n);
    double w = 1.0;
    for (int i = 0; i < n; ++i) {
      lv[i] = rest % m.mechanisms[i].lambda_card;
      rest /= m.mechanisms[i].lambda_card;
      w *= m.mechanisms[i].lambda_dist[lv[i]];
    }
    if (w == 0.0) continue;
    std::vector<int> value(n, -1);
    for (int i : order) {
      auto ps = m.dag.parents(i);
      int pidx = 0;
      for (int p : ps) pidx = pidx * m.cards[p] + value[p];
      int pcount = 1;
      for (int p : ps) pcount *= m.cards[p];
      value[i] = m.mechanisms[i].function[lv[i] * pcount + pidx];
    }
    joint[ravel(vars, value)] += w;
  }
  return Cpd(vars, {}, std::move(joint));
}

// ---------------------------------------------------------------------------
// Classical interventional models
// ---------------------------------------------------------------------------

// Split every node X_i into (X_i^I, X_i^O) and return the conditional
// P(X^I_1 .. X^I_n | X^O_1 .. X^O_n) = prod_i P(X^I_i | Parents^O(i)).
inline Cpd split_node_interventional(const Dag& dag, const std::vector<Cpd>& cpds) {
  const int n = static_cast<int>(dag.nodes.size());
  if (static_cast<int>(cpds.size()) != n) throw StructureError("one cpd per node required");
  std::vector<Var> ivars, ovars;
  for (int i = 0; i < n; ++i) {
    if (cpds[i].targets().size() != 1 || cpds[i].targets()[0].name != dag.nodes[i])
      throw StructureError("cpd " + std::to_string(i) + " does not target its node");
    auto ps = dag.parents(i);
    if (static_cast<int>(cpds[i].givens().size()) != static_cast<int>(ps.size()))
      throw StructureError("cpd " + std::to_string(i) + " conditioning mismatch");
    ivars.push_back({dag.nodes[i] + "^I", cpds[i].targets()[0].card});
    ovars.push_back({dag.nodes[i] + "^O", cpds[i].targets()[0].card});
  }
  std::vector<double> table(card_product(ivars) * card_product(ovars));
  for (int t = 0; t < card_product(ivars); ++t) {
    auto td = unravel(ivars, t);
    for (int g = 0; g < card_product(ovars); ++g) {
      auto gd = unravel(ovars, g);
      double prod = 1.0;
      for (int i = 0; i < n; ++i) {
        auto ps = dag.parents(i);
        std::vector<int> key;
        key.reserve(ps.size());
        for (int p : ps) key.push_back(gd[p]);
        prod *= cpds[i].at(td[i], ravel(cpds[i].givens(), key));
      }
      table[t * card_product(ovars) + g] = prod;
    }
  }
  return Cpd(ivars, ovars, std::move(table));
}

// Interventions P(k_i, X^O_i | X^I_i), one per node, as two-target cpds.
struct RecordDistribution {
  std::vector<Var> records;
  std::vector<double> probs;  // lexicographic over records

  double at(const std::vector<int>& ks) const { return probs[ravel(records, ks)]; }
};

inline Cpd passive_observation(const std::string& node, int card) {
  std::vector<double> t(card * card * card, 0.0);
  std::vector<Var> targets{{"k_" + node, card}, {node + "^O", card}};
  for (int xi = 0; xi < card; ++xi) t[(xi * card + xi) * card + xi] = 1.0;
  return Cpd(targets, {{node + "^I", card}}, std::move(t));
}

inline Cpd do_intervention(const std::string& node, int card, int value) {
  std::vector<double> t(card * card * card, 0.0);
  std::vector<Var> targets{{"k_" + node, card}, {node + "^O", card}};
  for (int xi = 0; xi < card; ++xi) t[(value * card + value) * card + xi] = 1.0;
  return Cpd(targets, {{node + "^I", card}}, std::move(t));
}

inline Cpd no_observation(const std::string& node, int card) {
  std::vector<double> t(card * card, 0.0);
  std::vector<Var> targets{{"k_" + node, 1}, {node + "^O", card}};
  for (int xi = 0; xi < card; ++xi) t[xi * card + xi] = 1.0;
  return Cpd(targets, {{node + "^I", card}}, std::move(t));
}

inline RecordDistribution classical_record_distribution(const Cpd& split,
                                                        const std::vector<Cpd>& interventions) {
  const int n = static_cast<int>(split.targets().size());
  if (static_cast<int>(interventions.size()) != n)
    throw StructureError("one intervention per node required");
  std::vector<Var> records;
  for (int i = 0; i < n; ++i) {
    interventions[i].require_normalized(1e-9);
    records.push_back(interventions[i].targets()[0]);
    if (interventions[i].targets()[1].card != split.targets()[i].card)
      throw StructureError("intervention output cardinality mismatch at node " +
                           std::to_string(i));
  }

  RecordDistribution out;
  out.records = records;
  out.probs.assign(card_product(records), 0.0);
  const int icount = split.target_count(), ocount = split.given_count();
  for (int xi = 0; xi < icount; ++xi) {
    auto xid = unravel(split.targets(), xi);
    for (int xo = 0; xo < ocount; ++xo) {
      auto xod = unravel(split.givens(), xo);
      double base = split.at(xi, xo);
      if (base == 0.0) continue;
      // Distribute over record values; interventions factorize per node.
      std::vector<std::vector<double>> node_probs(n);
      for (int i = 0; i < n; ++i) {
        const auto& iv = interventions[i];
        int kcard = iv.targets()[0].card;
        int ocard = iv.targets()[1].card;
        node_probs[i].resize(kcard);
        for (int k = 0; k < kcard; ++k) node_probs[i][k] = iv.at(k * ocard + xod[i], xid[i]);
      }
      for (int r = 0; r < card_product(records); ++r) {
        auto rd = unravel(records, r);
        double w = base;
        for (int i = 0; i < n; ++i) w *= node_probs[i][rd[i]];
        out.probs[r] += w;
      }
    }
  }
  double sum = std::accumulate(out.probs.begin(), out.probs.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("record distribution does not normalize (sum " + std::to_string(sum) +
                          ")");
  return out;
}

}  // namespace qcm

#endif  // QCM_CLASSICAL_HPP
