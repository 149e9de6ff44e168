#include "otpf/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "otpf/distance.hpp"
#include "otpf/errors.hpp"

namespace otpf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_marginals(const VectorXd& p0, const VectorXd& p1,
                     Eigen::Index rows, Eigen::Index cols) {
  if (p1.size() != rows || p0.size() != cols)
    throw config_error("marginal lengths do not match the kernel shape");
  if ((p0.array() < 0.0).any() || (p1.array() < 0.0).any())
    throw config_error("marginals must be nonnegative");
  const double s0 = p0.sum();
  const double s1 = p1.sum();
  if (!(s0 > 0.0) || !(s1 > 0.0))
    throw config_error("marginals must carry positive total mass");
  if (std::abs(s0 - s1) > 1e-9 * std::max(1.0, std::max(s0, s1)))
    throw config_error("marginals must carry equal total mass");
}

// Sinkhorn over log-kernel entries. Zero-mass rows and columns are stripped
// up front and restored afterwards, so the potentials stay positive. The
// kernel is preconditioned by subtracting row and then column maxima in the
// log domain, which rescales it diagonally and leaves the minimizing plan
// unchanged while keeping the scaling iterates near one; potentials that
// still grow past 1e100 are absorbed into the kernel.
TransportPlan sinkhorn_core(const MatrixXd& log_kernel, const VectorXd& p0,
                            const VectorXd& p1, const SinkhornOptions& options) {
  check_marginals(p0, p1, log_kernel.rows(), log_kernel.cols());
  if (log_kernel.array().isNaN().any())
    throw config_error("kernel contains NaN entries");

  std::vector<Eigen::Index> live_rows, live_cols;
  for (Eigen::Index j = 0; j < p1.size(); ++j)
    if (p1[j] > 0.0) live_rows.push_back(j);
  for (Eigen::Index i = 0; i < p0.size(); ++i)
    if (p0[i] > 0.0) live_cols.push_back(i);
  const Eigen::Index lr = static_cast<Eigen::Index>(live_rows.size());
  const Eigen::Index lc = static_cast<Eigen::Index>(live_cols.size());

  Eigen::ArrayXXd lk(lr, lc);
  VectorXd rp1(lr), rp0(lc);
  for (Eigen::Index a = 0; a < lr; ++a) {
    rp1[a] = p1[live_rows[a]];
    for (Eigen::Index b = 0; b < lc; ++b)
      lk(a, b) = log_kernel(live_rows[a], live_cols[b]);
  }
  for (Eigen::Index b = 0; b < lc; ++b) rp0[b] = p0[live_cols[b]];

  const auto infeasible = [](const char* what) {
    throw numerical_error(std::string("transport infeasible: ") + what);
  };

  // Preconditioning; a row or column of zeros has no way to place its mass.
  VectorXd row_shift(lr), col_shift(lc);
  for (Eigen::Index a = 0; a < lr; ++a) {
    row_shift[a] = lk.row(a).maxCoeff();
    if (row_shift[a] == -kInf) infeasible("kernel row is identically zero");
    lk.row(a) -= row_shift[a];
  }
  for (Eigen::Index b = 0; b < lc; ++b) {
    col_shift[b] = lk.col(b).maxCoeff();
    if (col_shift[b] == -kInf) infeasible("kernel column is identically zero");
    lk.col(b) -= col_shift[b];
  }

  MatrixXd kern = lk.exp().matrix();
  VectorXd u = VectorXd::Ones(lr);
  VectorXd v = VectorXd::Ones(lc);
  VectorXd kv = kern * v;

  int iters = 0;
  bool converged = false;
  while (iters < options.max_iter) {
    ++iters;
    for (Eigen::Index a = 0; a < lr; ++a)
      if (!(kv[a] > 0.0)) infeasible("a source row reaches no demanded column");
    u = rp1.cwiseQuotient(kv);

    VectorXd ktu = kern.transpose() * u;
    const double col_err =
        (v.cwiseProduct(ktu) - rp0).lpNorm<Eigen::Infinity>();
    if (col_err < options.tol) {
      converged = true;  // rows are exact right after the u update
      break;
    }
    for (Eigen::Index b = 0; b < lc; ++b)
      if (!(ktu[b] > 0.0)) infeasible("a target column reaches no supplied row");
    v = rp0.cwiseQuotient(ktu);

    if (u.maxCoeff() > 1e100 || v.maxCoeff() > 1e100) {
      // Absorb the potentials into the kernel to keep the scalings finite.
      lk.colwise() += u.array().log();
      lk.rowwise() += v.array().log().transpose();
      kern = lk.exp().matrix();
      u.setOnes();
      v.setOnes();
    }
    kv = kern * v;
  }

  TransportPlan plan;
  plan.entries = MatrixXd::Zero(p1.size(), p0.size());
  for (Eigen::Index a = 0; a < lr; ++a)
    for (Eigen::Index b = 0; b < lc; ++b)
      plan.entries(live_rows[a], live_cols[b]) = u[a] * kern(a, b) * v[b];
  plan.row_marginal = p1;
  plan.col_marginal = p0;
  plan.iterations = iters;
  plan.converged = converged;
  return plan;
}

}  // namespace

GibbsKernel gibbs_kernel(const MatrixXd& fine, const MatrixXd& coarse,
                         double g, double dt) {
  if (!(g > 0.0)) throw config_error("gibbs kernel needs a positive g");
  if (!(dt > 0.0)) throw config_error("gibbs kernel needs a positive dt");
  if (fine.cols() != coarse.cols())
    throw config_error("fine and coarse ensembles disagree on dimension");
  GibbsKernel out;
  out.log_entries = -pairwise_sqdist(fine, coarse) / (2.0 * g * g * dt);
  out.entries = out.log_entries.array().exp();
  return out;
}

GibbsKernel gibbs_kernel_scaled(const MatrixXd& fine, const MatrixXd& coarse,
                                const VectorXd& scale, double dt) {
  if (!(dt > 0.0)) throw config_error("gibbs kernel needs a positive dt");
  if (fine.cols() != coarse.cols())
    throw config_error("fine and coarse ensembles disagree on dimension");
  if (scale.size() != fine.cols())
    throw config_error("one scale per state dimension required");
  if (!(scale.array() > 0.0).all())
    throw config_error("gibbs kernel scales must be positive");
  const Eigen::ArrayXd inv = scale.array().inverse();
  const MatrixXd fw = fine.array().rowwise() * inv.transpose();
  const MatrixXd cw = coarse.array().rowwise() * inv.transpose();
  GibbsKernel out;
  out.log_entries = -pairwise_sqdist(fw, cw) / (2.0 * dt);
  out.entries = out.log_entries.array().exp();
  return out;
}

TransportPlan sinkhorn(const MatrixXd& kernel, const VectorXd& p0,
                       const VectorXd& p1, const SinkhornOptions& options) {
  if ((kernel.array() < 0.0).any())
    throw config_error("kernel entries must be nonnegative");
  return sinkhorn_core(kernel.array().log().matrix(), p0, p1, options);
}

TransportPlan sinkhorn_log(const MatrixXd& log_kernel, const VectorXd& p0,
                           const VectorXd& p1, const SinkhornOptions& options) {
  return sinkhorn_core(log_kernel, p0, p1, options);
}

double transport_objective(const TransportPlan& plan, const MatrixXd& cost) {
  if (cost.rows() != plan.rows() || cost.cols() != plan.cols())
    throw config_error("cost matrix does not match the plan shape");
  return (plan.entries.array() * cost.array()).sum();
}

namespace {

// Transportation simplex over strictly positive supplies and demands.
// Nodes 0..m-1 are sources, m..m+n-1 targets; the basis is a spanning tree
// of m+n-1 arcs. Entering arcs are picked by the most negative reduced cost
// (Dantzig), falling back to Bland's rule after a run of degenerate pivots.
class TransportSimplex {
public:
  TransportSimplex(const MatrixXd& cost, VectorXd supply, VectorXd demand)
      : cost_(cost),
        m_(static_cast<int>(supply.size())),
        n_(static_cast<int>(demand.size())),
        adj_(m_ + n_),
        dual_(m_ + n_),
        seen_(m_ + n_),
        parent_arc_(m_ + n_) {
    northwest_corner(std::move(supply), std::move(demand));
  }

  MatrixXd solve() {
    const double enter_tol = 1e-12 * (1.0 + cost_.cwiseAbs().maxCoeff());
    const long max_pivots = 20000L + 500L * (m_ + n_) * (m_ + n_);
    bool bland = false;
    int degenerate_run = 0;
    for (long pivot = 0; pivot < max_pivots; ++pivot) {
      compute_duals();
      int ei, ej;
      if (!find_entering(enter_tol, bland, ei, ej)) {
        MatrixXd plan = MatrixXd::Zero(m_, n_);
        for (const Arc& arc : basis_) {
          if (arc.flow < -1e-9)
            throw numerical_error("transportation simplex produced a negative flow");
          plan(arc.row, arc.col) = std::max(arc.flow, 0.0);
        }
        return plan;
      }
      const double theta = pivot_on(ei, ej);
      if (theta > 0.0) {
        degenerate_run = 0;
        bland = false;
      } else if (++degenerate_run > 64) {
        bland = true;  // anti-cycling
      }
    }
    throw numerical_error("transportation simplex did not terminate");
  }

private:
  struct Arc {
    int row, col;
    double flow;
  };

  void add_arc(int i, int j, double flow) {
    adj_[i].push_back(static_cast<int>(basis_.size()));
    adj_[m_ + j].push_back(static_cast<int>(basis_.size()));
    basis_.push_back({i, j, flow});
  }

  void northwest_corner(VectorXd a, VectorXd b) {
    int i = 0, j = 0;
    while (true) {
      const double flow = std::min(a[i], b[j]);
      add_arc(i, j, flow);
      a[i] -= flow;
      b[j] -= flow;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (i < m_ - 1 && (a[i] <= 0.0 || j == n_ - 1))
        ++i;
      else
        ++j;
    }
  }

  void compute_duals() {
    std::fill(seen_.begin(), seen_.end(), false);
    dual_[0] = 0.0;
    seen_[0] = true;
    stack_.assign(1, 0);
    while (!stack_.empty()) {
      const int node = stack_.back();
      stack_.pop_back();
      for (const int k : adj_[node]) {
        const Arc& arc = basis_[k];
        const int other = (node < m_) ? m_ + arc.col : arc.row;
        if (seen_[other]) continue;
        dual_[other] = cost_(arc.row, arc.col) - dual_[node];
        seen_[other] = true;
        stack_.push_back(other);
      }
    }
  }

  bool find_entering(double tol, bool bland, int& ei, int& ej) const {
    double best = -tol;
    ei = -1;
    ej = -1;
    for (int i = 0; i < m_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const double rc = cost_(i, j) - dual_[i] - dual_[m_ + j];
        if (rc < -tol) {
          if (bland) {
            ei = i;
            ej = j;
            return true;
          }
          if (rc < best) {
            best = rc;
            ei = i;
            ej = j;
          }
        }
      }
    }
    return ei >= 0;
  }

  // Path from node `from` to node `to` through the basis tree.
  std::vector<int> tree_path(int from, int to) {
    std::fill(seen_.begin(), seen_.end(), false);
    std::fill(parent_arc_.begin(), parent_arc_.end(), -1);
    seen_[from] = true;
    stack_.assign(1, from);
    while (!stack_.empty()) {
      const int node = stack_.back();
      stack_.pop_back();
      if (node == to) break;
      for (const int k : adj_[node]) {
        const Arc& arc = basis_[k];
        const int other = (node < m_) ? m_ + arc.col : arc.row;
        if (seen_[other]) continue;
        seen_[other] = true;
        parent_arc_[other] = k;
        stack_.push_back(other);
      }
    }
    std::vector<int> path;  // arc indices from `to` back to `from`
    int node = to;
    while (node != from) {
      const int k = parent_arc_[node];
      if (k < 0) throw numerical_error("transportation simplex basis lost connectivity");
      path.push_back(k);
      node = (node < m_) ? m_ + basis_[k].col : basis_[k].row;
    }
    return path;
  }

  double pivot_on(int ei, int ej) {
    // Walking from row node ei to column node m+ej, path arcs alternate
    // -theta, +theta, ... so both cycle neighbors of the entering arc shrink.
    std::vector<int> path = tree_path(ei, m_ + ej);
    std::reverse(path.begin(), path.end());
    double theta = kInf;
    int leaving = -1;
    for (std::size_t s = 0; s < path.size(); s += 2) {
      const Arc& arc = basis_[path[s]];
      if (arc.flow < theta || (arc.flow == theta && path[s] < leaving)) {
        theta = arc.flow;
        leaving = path[s];
      }
    }
    if (leaving < 0) throw numerical_error("transportation simplex pivot failed");

    int sign = -1;
    for (const int k : path) {
      basis_[k].flow += sign * theta;
      sign = -sign;
    }

    // Replace the leaving arc with the entering one.
    Arc& slot = basis_[leaving];
    detach(slot.row, leaving);
    detach(m_ + slot.col, leaving);
    slot = {ei, ej, theta};
    adj_[ei].push_back(leaving);
    adj_[m_ + ej].push_back(leaving);
    return theta;
  }

  void detach(int node, int arc_index) {
    auto& list = adj_[node];
    list.erase(std::find(list.begin(), list.end(), arc_index));
  }

  const MatrixXd& cost_;
  int m_, n_;
  std::vector<Arc> basis_;
  std::vector<std::vector<int>> adj_;
  std::vector<double> dual_;
  std::vector<char> seen_;
  std::vector<int> parent_arc_;
  std::vector<int> stack_;
};

}  // namespace

TransportPlan exact_transport(const MatrixXd& cost, const VectorXd& source,
                              const VectorXd& target) {
  check_marginals(target, source, cost.rows(), cost.cols());
  if (!cost.allFinite()) throw config_error("cost matrix must be finite");

  std::vector<Eigen::Index> live_rows, live_cols;
  for (Eigen::Index i = 0; i < source.size(); ++i)
    if (source[i] > 0.0) live_rows.push_back(i);
  for (Eigen::Index j = 0; j < target.size(); ++j)
    if (target[j] > 0.0) live_cols.push_back(j);

  const Eigen::Index lr = static_cast<Eigen::Index>(live_rows.size());
  const Eigen::Index lc = static_cast<Eigen::Index>(live_cols.size());
  MatrixXd rcost(lr, lc);
  VectorXd rsup(lr), rdem(lc);
  for (Eigen::Index a = 0; a < lr; ++a) {
    rsup[a] = source[live_rows[a]];
    for (Eigen::Index b = 0; b < lc; ++b)
      rcost(a, b) = cost(live_rows[a], live_cols[b]);
  }
  for (Eigen::Index b = 0; b < lc; ++b) rdem[b] = target[live_cols[b]];

  TransportSimplex simplex(rcost, rsup, rdem);
  const MatrixXd reduced = simplex.solve();

  TransportPlan plan;
  plan.entries = MatrixXd::Zero(source.size(), target.size());
  for (Eigen::Index a = 0; a < lr; ++a)
    for (Eigen::Index b = 0; b < lc; ++b)
      plan.entries(live_rows[a], live_cols[b]) = reduced(a, b);
  plan.row_marginal = source;
  plan.col_marginal = target;
  plan.converged = true;
  return plan;
}

MatrixXd transform_particles(const TransportPlan& plan, const MatrixXd& states) {
  if (states.rows() != plan.rows())
    throw config_error("states do not match the plan's source side");
  const VectorXd colsum = plan.entries.colwise().sum();
  for (Eigen::Index i = 0; i < colsum.size(); ++i)
    if (!(colsum[i] > 1e-300))
      throw numerical_error("transport plan column " + std::to_string(i) +
                            " carries no mass");
  return (plan.entries * colsum.cwiseInverse().asDiagonal()).transpose() * states;
}

MatrixXd plan_resample(const TransportPlan& plan, const MatrixXd& states,
                       RngStream& rng) {
  if (states.rows() != plan.rows())
    throw config_error("states do not match the plan's source side");
  const Eigen::Index l = plan.rows();
  const Eigen::Index m = plan.cols();

  // Stratified picks. Column i inverts its own conditional at a uniform
  // placed in a randomly assigned stratum of [0, 1), so every pick keeps the
  // column's prescribed law while the shared grid keeps the realized
  // offspring counts close to the plan's row masses. Independent draws per
  // column would instead thin the ancestry by pure sampling noise, which a
  // filter that resamples every step cannot afford.
  std::vector<Eigen::Index> stratum(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) stratum[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = m - 1; i > 0; --i) {
    const Eigen::Index j =
        static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(i + 1));
    std::swap(stratum[static_cast<std::size_t>(i)],
              stratum[static_cast<std::size_t>(j)]);
  }
  const double shift = rng.uniform();

  MatrixXd out(m, states.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const double total = plan.entries.col(i).sum();
    if (!(total > 1e-300))
      throw numerical_error("transport plan column " + std::to_string(i) +
                            " carries no mass");
    const double u =
        (static_cast<double>(stratum[static_cast<std::size_t>(i)]) + shift) /
        static_cast<double>(m);
    const double target = u * total;
    double acc = 0.0;
    Eigen::Index pick = l - 1;
    for (Eigen::Index j = 0; j < l; ++j) {
      acc += plan.entries(j, i);
      if (acc >= target && plan.entries(j, i) > 0.0) {
        pick = j;
        break;
      }
    }
    out.row(i) = states.row(pick);
  }
  return out;
}

}  // namespace otpf
