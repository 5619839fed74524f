#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <deque>
#include <limits>

#include "config.hpp"
#include "csv.hpp"
#include "error.hpp"
#include "nlp.hpp"

namespace gwpoct {

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::numeric_failure: return "numeric_failure";
  }
  return "unknown";
}

void SolveReport::save(const std::string& path) const {
  KeyValues kv;
  kv.set("status", to_string(status));
  kv.set_int("iterations", iterations);
  kv.set_int("inner_iterations", inner_iterations);
  kv.set_double("final_objective", final_objective);
  kv.set_double("max_constraint_violation", max_constraint_violation);
  kv.set_double("kkt_residual", kkt_residual);
  kv.set_double("wall_time_sec", wall_time_sec);
  if (!message.empty()) kv.set("message", message);
  kv.save(path);
}

namespace {

int first_nonfinite(const std::vector<double>& v) {
  for (size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) return static_cast<int>(i);
  return -1;
}

void project(std::vector<double>& x, const std::vector<double>& lo, const std::vector<double>& hi) {
  for (size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
}

double projected_gradient_norm(const std::vector<double>& x, const std::vector<double>& g,
                               const std::vector<double>& lo, const std::vector<double>& hi) {
  double norm = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double step = std::clamp(x[i] - g[i], lo[i], hi[i]) - x[i];
    norm = std::max(norm, std::fabs(step));
  }
  return norm;
}

/// Derivative-mode adapter. Analytic mode forwards to the NLP; the
/// sparse-finite-difference mode replaces the Jacobian with a colored forward
/// difference over the declared sparsity and the objective gradient with a
/// dense central difference (intended for cross-checks on small problems).
class Evaluator {
 public:
  Evaluator(const Nlp& nlp, DerivativeMode mode) : nlp_(nlp), mode_(mode) {
    if (mode_ == DerivativeMode::sparse_finite_difference) build_coloring();
  }

  const Nlp& nlp() const { return nlp_; }

  void objective_gradient(const std::vector<double>& x, std::vector<double>& grad) const {
    if (mode_ == DerivativeMode::analytic) {
      nlp_.objective_gradient(x, grad);
      return;
    }
    const int n = nlp_.num_variables();
    grad.assign(n, 0.0);
    std::vector<double> xp = x;
    for (int j = 0; j < n; ++j) {
      const double h = 1e-7 * (1.0 + std::fabs(x[j]));
      xp[j] = x[j] + h;
      const double fp = nlp_.objective(xp);
      xp[j] = x[j] - h;
      const double fm = nlp_.objective(xp);
      xp[j] = x[j];
      grad[j] = (fp - fm) / (2.0 * h);
    }
  }

  void jacobian_values(const std::vector<double>& x, std::vector<double>& vals) const {
    if (mode_ == DerivativeMode::analytic) {
      nlp_.jacobian_values(x, vals);
      return;
    }
    const SparsityPattern& sp = nlp_.jacobian_sparsity();
    vals.assign(sp.nnz(), 0.0);
    std::vector<double> c0(nlp_.num_constraints()), cp(nlp_.num_constraints());
    nlp_.constraints(x, c0);
    std::vector<double> xp = x;
    std::vector<double> steps(nlp_.num_variables(), 0.0);
    for (int color = 0; color < n_colors_; ++color) {
      for (int j = 0; j < nlp_.num_variables(); ++j) {
        if (col_color_[j] != color) continue;
        steps[j] = 1e-7 * (1.0 + std::fabs(x[j]));
        xp[j] = x[j] + steps[j];
      }
      nlp_.constraints(xp, cp);
      for (size_t k = 0; k < sp.nnz(); ++k) {
        const int j = sp.cols[k];
        if (col_color_[j] != color) continue;
        vals[k] = (cp[sp.rows[k]] - c0[sp.rows[k]]) / steps[j];
      }
      for (int j = 0; j < nlp_.num_variables(); ++j) {
        if (col_color_[j] != color) continue;
        xp[j] = x[j];
        steps[j] = 0.0;
      }
    }
  }

 private:
  // Greedy distance-2 coloring: columns sharing a constraint row get distinct
  // colors, so one perturbed evaluation recovers a whole color group.
  void build_coloring() {
    const SparsityPattern& sp = nlp_.jacobian_sparsity();
    const int n = nlp_.num_variables();
    std::vector<std::vector<int>> row_cols(nlp_.num_constraints());
    std::vector<std::vector<int>> col_rows(n);
    for (size_t k = 0; k < sp.nnz(); ++k) {
      row_cols[sp.rows[k]].push_back(sp.cols[k]);
      col_rows[sp.cols[k]].push_back(sp.rows[k]);
    }
    col_color_.assign(n, -1);
    std::vector<char> used;
    for (int j = 0; j < n; ++j) {
      used.assign(n_colors_ + 1, 0);
      for (int r : col_rows[j])
        for (int other : row_cols[r])
          if (col_color_[other] >= 0 && col_color_[other] < static_cast<int>(used.size()))
            used[col_color_[other]] = 1;
      int color = 0;
      while (color < static_cast<int>(used.size()) && used[color]) ++color;
      col_color_[j] = color;
      n_colors_ = std::max(n_colors_, color + 1);
    }
  }

  const Nlp& nlp_;
  DerivativeMode mode_;
  std::vector<int> col_color_;
  int n_colors_ = 0;
};

/// Augmented Lagrangian value/gradient with equality target r (c(x) = r).
struct AlState {
  std::vector<double> c;       // raw constraint values
  std::vector<double> resid;   // c - target
  double objective = 0.0;
  double value = 0.0;  // L_A
};

class AlFunction {
 public:
  AlFunction(const Evaluator& eval, const std::vector<double>& target) : eval_(eval), target_(target) {}

  std::vector<double> lambda;
  double rho = 1.0;

  bool value(const std::vector<double>& x, AlState& s) const {
    const Nlp& nlp = eval_.nlp();
    s.objective = nlp.objective(x);
    s.c.resize(nlp.num_constraints());
    nlp.constraints(x, s.c);
    if (!std::isfinite(s.objective) || first_nonfinite(s.c) >= 0) return false;
    s.resid.resize(s.c.size());
    double quad = 0.0, lin = 0.0;
    for (size_t i = 0; i < s.c.size(); ++i) {
      s.resid[i] = s.c[i] - target_[i];
      lin += lambda[i] * s.resid[i];
      quad += s.resid[i] * s.resid[i];
    }
    s.value = s.objective + lin + 0.5 * rho * quad;
    return std::isfinite(s.value);
  }

  // grad L_A = grad f + J^T (lambda + rho * resid); requires a prior value() call.
  void gradient(const std::vector<double>& x, const AlState& s, std::vector<double>& grad,
                std::vector<double>& jac_scratch) const {
    const Nlp& nlp = eval_.nlp();
    eval_.objective_gradient(x, grad);
    const SparsityPattern& sp = nlp.jacobian_sparsity();
    eval_.jacobian_values(x, jac_scratch);
    for (size_t k = 0; k < sp.nnz(); ++k) {
      const double w = lambda[sp.rows[k]] + rho * s.resid[sp.rows[k]];
      grad[sp.cols[k]] += jac_scratch[k] * w;
    }
  }

  const Evaluator& evaluator() const { return eval_; }

 private:
  const Evaluator& eval_;
  const std::vector<double>& target_;
};

/// Gauss-Newton model of the augmented-Lagrangian Hessian,
///   H0 = diag(objective curvature) + rho J^T J + delta I,
/// factorized exactly. Constraint rows with few entries form a banded matrix
/// under a bandwidth-reducing (reverse Cuthill-McKee) permutation; wide rows
/// (the zero-net-force quadrature) are carried as Sherman-Morrison rank-one
/// corrections. Serves as the initial inverse Hessian of the inner L-BFGS,
/// which is what makes collocation problems tractable: the penalty term's
/// difference-chain structure has an O(N^2) eigenvalue spread no small
/// quasi-Newton memory can represent on its own.
class GaussNewtonH0 {
 public:
  bool build(const Nlp& nlp, const Evaluator& eval, const std::vector<double>& x, double rho,
             const std::vector<double>& lo, const std::vector<double>& hi) {
    const int n = nlp.num_variables();
    n_ = n;
    const SparsityPattern& sp = nlp.jacobian_sparsity();
    std::vector<double> vals;
    eval.jacobian_values(x, vals);
    if (first_nonfinite(vals) >= 0) return false;

    // Row classification by entry count: narrow rows go into the band.
    const int m = nlp.num_constraints();
    std::vector<int> row_count(m, 0);
    for (size_t k = 0; k < sp.nnz(); ++k) ++row_count[sp.rows[k]];
    constexpr int kDenseRowThreshold = 24;
    std::vector<char> dense_row(m, 0);
    for (int r = 0; r < m; ++r) dense_row[r] = row_count[r] > kDenseRowThreshold;

    // Group triplets per row for assembly.
    std::vector<std::vector<std::pair<int, double>>> row_entries(m);
    for (int r = 0; r < m; ++r) row_entries[r].reserve(row_count[r]);
    for (size_t k = 0; k < sp.nnz(); ++k) row_entries[sp.rows[k]].push_back({sp.cols[k], vals[k]});

    build_rcm_permutation(row_entries, dense_row, n);

    // Semibandwidth in permuted indexing.
    bw_ = 0;
    for (int r = 0; r < m; ++r) {
      if (dense_row[r]) continue;
      for (const auto& [c1, v1] : row_entries[r])
        for (const auto& [c2, v2] : row_entries[r])
          bw_ = std::max(bw_, std::abs(perm_[c1] - perm_[c2]));
    }

    // Assemble the lower band of H0 in permuted coordinates.
    std::vector<double> diag_f;
    nlp.objective_hessian_diag(x, diag_f);
    band_.assign(static_cast<size_t>(bw_ + 1) * n, 0.0);
    double peak = 0.0;
    for (int i = 0; i < n; ++i) {
      const double df = std::max(diag_f[i], 0.0);
      band_[static_cast<size_t>(0) * n + perm_[i]] += df;
      peak = std::max(peak, df);
    }
    for (int r = 0; r < m; ++r) {
      if (dense_row[r]) continue;
      for (const auto& [c1, v1] : row_entries[r])
        for (const auto& [c2, v2] : row_entries[r]) {
          const int p1 = perm_[c1], p2 = perm_[c2];
          if (p1 < p2) continue;  // lower triangle only
          band_[static_cast<size_t>(p1 - p2) * n + p2] += rho * v1 * v2;
        }
    }
    for (int i = 0; i < n; ++i) peak = std::max(peak, band_[static_cast<size_t>(0) * n + i]);
    if (!(peak > 0.0)) peak = 1.0;

    // Fixed variables become identity rows so they never move the solve.
    fixed_.assign(n, 0);
    for (int i = 0; i < n; ++i) fixed_[i] = hi[i] <= lo[i];
    for (int i = 0; i < n; ++i) {
      if (!fixed_[i]) continue;
      const int p = perm_[i];
      for (int b = 0; b <= bw_; ++b) {
        band_[static_cast<size_t>(b) * n + p] = 0.0;  // row p, col p-b... cleared below too
        if (p - b >= 0) band_[static_cast<size_t>(b) * n + (p - b)] = 0.0;
      }
      band_[static_cast<size_t>(0) * n + p] = peak;
    }

    // Cholesky with escalating diagonal shifts on failure.
    double delta = 1e-12 * peak;
    for (int attempt = 0; attempt < 8; ++attempt) {
      factor_ = band_;
      for (int i = 0; i < n; ++i) factor_[static_cast<size_t>(0) * n + i] += delta;
      if (band_cholesky()) break;
      delta = delta == 0.0 ? 1e-10 * peak : delta * 100.0;
      if (attempt == 7) return false;
    }

    // Sherman-Morrison data for the dense rows: H = B + sum rho w w^T.
    dense_w_.clear();
    binv_w_.clear();
    for (int r = 0; r < m; ++r) {
      if (!dense_row[r]) continue;
      std::vector<double> w(n, 0.0);
      for (const auto& [c, v] : row_entries[r]) w[c] = fixed_[c] ? 0.0 : v;
      std::vector<double> bw(n);
      solve_band(w, bw);
      dense_w_.push_back(std::move(w));
      binv_w_.push_back(std::move(bw));
    }
    const int k = static_cast<int>(dense_w_.size());
    smw_.assign(static_cast<size_t>(k) * k, 0.0);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += dense_w_[a][i] * binv_w_[b][i];
        smw_[static_cast<size_t>(a) * k + b] = dot;
      }
      smw_[static_cast<size_t>(a) * k + a] += 1.0 / rho;
    }
    if (k > 0 && !factor_small(smw_, k)) return false;
    return true;
  }

  /// out = H0^{-1} g (Sherman-Morrison over the banded backbone).
  void apply_inverse(const std::vector<double>& g, std::vector<double>& out) const {
    solve_band(g, out);
    const int k = static_cast<int>(dense_w_.size());
    if (k == 0) return;
    std::vector<double> rhs(k);
    for (int a = 0; a < k; ++a) {
      double dot = 0.0;
      for (int i = 0; i < n_; ++i) dot += dense_w_[a][i] * out[i];
      rhs[a] = dot;
    }
    solve_small(rhs);
    for (int a = 0; a < k; ++a)
      for (int i = 0; i < n_; ++i) out[i] -= binv_w_[a][i] * rhs[a];
  }

 private:
  // Reverse Cuthill-McKee over the variable adjacency induced by narrow rows.
  void build_rcm_permutation(const std::vector<std::vector<std::pair<int, double>>>& rows,
                             const std::vector<char>& dense_row, int n) {
    std::vector<std::vector<int>> adj(n);
    for (size_t r = 0; r < rows.size(); ++r) {
      if (dense_row[r]) continue;
      for (const auto& [c1, v1] : rows[r])
        for (const auto& [c2, v2] : rows[r])
          if (c1 != c2) adj[c1].push_back(c2);
    }
    for (auto& a : adj) {
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    std::vector<int> order;
    order.reserve(n);
    std::vector<char> seen(n, 0);
    std::vector<int> queue;
    for (int start = 0; start < n; ++start) {
      if (seen[start]) continue;
      // Prefer a minimum-degree root in each component.
      int root = start;
      queue.clear();
      queue.push_back(root);
      seen[root] = 1;
      for (size_t qi = 0; qi < queue.size(); ++qi) {
        const int u = queue[qi];
        order.push_back(u);
        std::vector<int> nb;
        for (int v : adj[u])
          if (!seen[v]) {
            nb.push_back(v);
            seen[v] = 1;
          }
        std::sort(nb.begin(), nb.end(), [&](int a, int b) {
          return adj[a].size() < adj[b].size() || (adj[a].size() == adj[b].size() && a < b);
        });
        for (int v : nb) queue.push_back(v);
      }
    }
    std::reverse(order.begin(), order.end());
    perm_.assign(n, 0);
    iperm_.assign(n, 0);
    for (int i = 0; i < n; ++i) {
      perm_[order[i]] = i;
      iperm_[i] = order[i];
    }
  }

  // In-place banded Cholesky of factor_ (lower storage: factor_[b*n + j] is
  // entry (j+b, j)). Returns false on a non-positive pivot.
  bool band_cholesky() {
    const int n = n_;
    for (int j = 0; j < n; ++j) {
      double diag = factor_[static_cast<size_t>(0) * n + j];
      if (!(diag > 0.0) || !std::isfinite(diag)) return false;
      const double ljj = std::sqrt(diag);
      factor_[static_cast<size_t>(0) * n + j] = ljj;
      const int reach = std::min(bw_, n - 1 - j);
      for (int b = 1; b <= reach; ++b) factor_[static_cast<size_t>(b) * n + j] /= ljj;
      for (int c = j + 1; c <= j + reach; ++c) {
        const double l = factor_[static_cast<size_t>(c - j) * n + j];
        if (l == 0.0) continue;
        for (int rr = c; rr <= j + reach; ++rr)
          factor_[static_cast<size_t>(rr - c) * n + c] -=
              l * factor_[static_cast<size_t>(rr - j) * n + j];
      }
    }
    return true;
  }

  // Solve L L^T out = g with the permutation applied on the way in and out.
  void solve_band(const std::vector<double>& g, std::vector<double>& out) const {
    const int n = n_;
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) y[perm_[i]] = g[i];
    for (int j = 0; j < n; ++j) {
      y[j] /= factor_[static_cast<size_t>(0) * n + j];
      const int reach = std::min(bw_, n - 1 - j);
      for (int b = 1; b <= reach; ++b) y[j + b] -= factor_[static_cast<size_t>(b) * n + j] * y[j];
    }
    for (int j = n - 1; j >= 0; --j) {
      const int reach = std::min(bw_, n - 1 - j);
      for (int b = 1; b <= reach; ++b) y[j] -= factor_[static_cast<size_t>(b) * n + j] * y[j + b];
      y[j] /= factor_[static_cast<size_t>(0) * n + j];
    }
    out.resize(n);
    for (int i = 0; i < n; ++i) out[i] = y[perm_[i]];
  }

  bool factor_small(std::vector<double>& a, int k) {
    lu_ = a;
    piv_.resize(k);
    for (int col = 0; col < k; ++col) {
      int p = col;
      for (int r = col + 1; r < k; ++r)
        if (std::fabs(lu_[static_cast<size_t>(r) * k + col]) >
            std::fabs(lu_[static_cast<size_t>(p) * k + col]))
          p = r;
      piv_[col] = p;
      if (p != col)
        for (int cc = 0; cc < k; ++cc)
          std::swap(lu_[static_cast<size_t>(col) * k + cc], lu_[static_cast<size_t>(p) * k + cc]);
      const double pivot = lu_[static_cast<size_t>(col) * k + col];
      if (std::fabs(pivot) < 1e-300) return false;
      for (int r = col + 1; r < k; ++r) {
        const double f = lu_[static_cast<size_t>(r) * k + col] / pivot;
        lu_[static_cast<size_t>(r) * k + col] = f;
        for (int cc = col + 1; cc < k; ++cc)
          lu_[static_cast<size_t>(r) * k + cc] -= f * lu_[static_cast<size_t>(col) * k + cc];
      }
    }
    return true;
  }

  void solve_small(std::vector<double>& rhs) const {
    const int k = static_cast<int>(rhs.size());
    for (int col = 0; col < k; ++col) {
      if (piv_[col] != col) std::swap(rhs[col], rhs[piv_[col]]);
      for (int r = col + 1; r < k; ++r) rhs[r] -= lu_[static_cast<size_t>(r) * k + col] * rhs[col];
    }
    for (int r = k - 1; r >= 0; --r) {
      for (int cc = r + 1; cc < k; ++cc) rhs[r] -= lu_[static_cast<size_t>(r) * k + cc] * rhs[cc];
      rhs[r] /= lu_[static_cast<size_t>(r) * k + r];
    }
  }

  int n_ = 0, bw_ = 0;
  std::vector<int> perm_, iperm_;
  std::vector<char> fixed_;
  std::vector<double> band_, factor_;
  std::vector<std::vector<double>> dense_w_, binv_w_;
  std::vector<double> smw_, lu_;
  std::vector<int> piv_;
};

struct LbfgsMemory {
  std::deque<std::vector<double>> s, y;
  std::deque<double> rho_sy;
  int capacity = 12;

  void clear() {
    s.clear();
    y.clear();
    rho_sy.clear();
  }

  void push(std::vector<double> si, std::vector<double> yi) {
    double sy = 0.0, yy = 0.0, ss = 0.0;
    for (size_t i = 0; i < si.size(); ++i) {
      sy += si[i] * yi[i];
      yy += yi[i] * yi[i];
      ss += si[i] * si[i];
    }
    if (!(sy > 1e-12 * std::sqrt(ss * yy)) || !std::isfinite(sy)) return;
    s.push_back(std::move(si));
    y.push_back(std::move(yi));
    rho_sy.push_back(1.0 / sy);
    if (static_cast<int>(s.size()) > capacity) {
      s.pop_front();
      y.pop_front();
      rho_sy.pop_front();
    }
  }

  // Two-loop recursion seeded with the Gauss-Newton factorization: d = -H g.
  // Falls back to the Barzilai-Borwein scalar when no factorization exists.
  void direction(const std::vector<double>& g, const GaussNewtonH0* h0,
                 std::vector<double>& d) const {
    std::vector<double> q(g.begin(), g.end());
    const int m = static_cast<int>(s.size());
    std::vector<double> a(m);
    for (int i = m - 1; i >= 0; --i) {
      double si_q = 0.0;
      for (size_t j = 0; j < q.size(); ++j) si_q += s[i][j] * q[j];
      a[i] = rho_sy[i] * si_q;
      for (size_t j = 0; j < q.size(); ++j) q[j] -= a[i] * y[i][j];
    }
    if (h0) {
      h0->apply_inverse(q, d);
    } else {
      double gamma = 1.0;
      if (m > 0) {
        double sy = 0.0, yy = 0.0;
        for (size_t j = 0; j < q.size(); ++j) {
          sy += s[m - 1][j] * y[m - 1][j];
          yy += y[m - 1][j] * y[m - 1][j];
        }
        if (yy > 0.0) gamma = sy / yy;
      }
      d.resize(q.size());
      for (size_t j = 0; j < q.size(); ++j) d[j] = gamma * q[j];
    }
    for (int i = 0; i < m; ++i) {
      double yi_d = 0.0;
      for (size_t j = 0; j < d.size(); ++j) yi_d += y[i][j] * d[j];
      const double b = rho_sy[i] * yi_d;
      for (size_t j = 0; j < d.size(); ++j) d[j] += s[i][j] * (a[i] - b);
    }
    for (double& v : d) v = -v;
  }
};

struct InnerResult {
  int iterations = 0;
  double projected_gradient = 0.0;
  bool numeric_failure = false;
};

/// Inner-solver state that survives across outer iterations while the
/// subproblem (lambda, rho) is unchanged, so a budget-capped inner solve
/// resumes instead of restarting cold.
struct InnerContext {
  LbfgsMemory mem;
  GaussNewtonH0 h0;
  bool have_h0 = false;
  bool reset = true;
};

/// Bound-constrained minimization of the augmented Lagrangian: L-BFGS
/// directions with a strong-Wolfe line search. The search segment is capped at
/// the first bound breakpoint along the direction, and non-finite trial values
/// shrink the bracket instead of aborting.
InnerResult minimize_inner(const AlFunction& fn, InnerContext& ctx, std::vector<double>& x,
                           const std::vector<double>& lo, const std::vector<double>& hi,
                           double tol, int max_iter, int memory) {
  InnerResult res;
  const size_t n = x.size();
  constexpr double kC1 = 1e-4, kC2 = 0.9;
  constexpr int kH0RefreshStride = 50;
  static const bool debug = std::getenv("GWPOCT_SOLVER_TRACE") != nullptr;

  AlState st, st_probe;
  if (!fn.value(x, st)) {
    res.numeric_failure = true;
    return res;
  }
  std::vector<double> g(n), jac_scratch, d(n), x_probe(n), g_probe(n);
  fn.gradient(x, st, g, jac_scratch);
  if (first_nonfinite(g) >= 0) {
    res.numeric_failure = true;
    return res;
  }
  GaussNewtonH0& h0 = ctx.h0;
  LbfgsMemory& mem = ctx.mem;
  if (ctx.reset) {
    ctx.have_h0 = fn.evaluator().nlp().num_constraints() > 0 &&
                  h0.build(fn.evaluator().nlp(), fn.evaluator(), x, fn.rho, lo, hi);
    mem.clear();
    mem.capacity = memory;
    ctx.reset = false;
  }
  bool numeric_fail = false;

  // phi(t) along the current direction; the gradient is evaluated lazily.
  struct Probe {
    double t = 0.0, value = 0.0, slope = 0.0;
    bool finite = false, has_slope = false;
  };
  double loaded_slope_t = std::numeric_limits<double>::quiet_NaN();
  auto eval_probe = [&](double t, bool with_slope, Probe& p) {
    p.t = t;
    for (size_t i = 0; i < n; ++i) x_probe[i] = std::clamp(x[i] + t * d[i], lo[i], hi[i]);
    p.finite = fn.value(x_probe, st_probe);
    p.value = p.finite ? st_probe.value : std::numeric_limits<double>::infinity();
    p.has_slope = false;
    loaded_slope_t = std::numeric_limits<double>::quiet_NaN();
    if (p.finite && with_slope) {
      fn.gradient(x_probe, st_probe, g_probe, jac_scratch);
      if (first_nonfinite(g_probe) >= 0) {
        numeric_fail = true;
        return;
      }
      p.slope = 0.0;
      for (size_t i = 0; i < n; ++i) p.slope += g_probe[i] * d[i];
      p.has_slope = true;
      loaded_slope_t = t;  // probe buffers hold this point with its gradient
    }
  };

  for (int it = 0; it < max_iter; ++it) {
    res.projected_gradient = projected_gradient_norm(x, g, lo, hi);
    if (debug && it % 20 == 0)
      std::fprintf(stderr, "[inner] it=%d pg=%.3e L=%.6e rho=%.1e\n", it,
                   res.projected_gradient, st.value, fn.rho);
    if (res.projected_gradient <= tol) break;

    // Gradient restricted to the free subspace: components pressing against an
    // active bound are dropped before forming the quasi-Newton direction.
    std::vector<double> g_free = g;
    for (size_t i = 0; i < n; ++i) {
      const double act = 1e-10 * (1.0 + std::fabs(x[i]));
      if (hi[i] - lo[i] <= 0.0 || (x[i] - lo[i] <= act && g[i] > 0.0) ||
          (hi[i] - x[i] <= act && g[i] < 0.0))
        g_free[i] = 0.0;
    }
    mem.direction(g_free, ctx.have_h0 ? &h0 : nullptr, d);
    // The quasi-Newton direction may point out of the box at active bounds
    // even where the gradient points inward; such components would pin the
    // breakpoint step at zero, so they are dropped from the direction.
    for (size_t i = 0; i < n; ++i) {
      const double act = 1e-10 * (1.0 + std::fabs(x[i]));
      if (g_free[i] == 0.0 || (x[i] - lo[i] <= act && d[i] < 0.0) ||
          (hi[i] - x[i] <= act && d[i] > 0.0))
        d[i] = 0.0;
    }

    double gd = 0.0, gnorm = 0.0;
    for (size_t i = 0; i < n; ++i) {
      gd += g[i] * d[i];
      gnorm = std::max(gnorm, std::fabs(g_free[i]));
    }
    if (!(gd < 0.0) || first_nonfinite(d) >= 0) {
      mem.clear();
      for (size_t i = 0; i < n; ++i) d[i] = -g_free[i];
      gd = 0.0;
      for (size_t i = 0; i < n; ++i) gd += g[i] * d[i];
      if (!(gd < 0.0)) {
        if (debug) std::fprintf(stderr, "[inner] it=%d stationary free subspace gd=%.3e\n", it, gd);
        break;  // stationary on the free subspace
      }
    }

    // Distance to the first bound breakpoint along d.
    double t_max = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
      if (d[i] > 0.0)
        t_max = std::min(t_max, (hi[i] - x[i]) / d[i]);
      else if (d[i] < 0.0)
        t_max = std::min(t_max, (lo[i] - x[i]) / d[i]);
    }
    if (!(t_max > 0.0)) t_max = 0.0;

    const double phi0 = st.value;
    Probe best;
    best.finite = false;

    // Strong-Wolfe bracketing (Nocedal-Wright), capped at the breakpoint. The
    // Gauss-Newton seed already carries the right scale, so the unit step is
    // the correct first trial; only the bare steepest-descent start needs the
    // 1/|g| safeguard. A step cap in the scaled variables keeps the iteration
    // local: the quadratic model is worthless across basin boundaries, and
    // collocation landscapes are full of them.
    double d_norm = 0.0;
    for (size_t i = 0; i < n; ++i) d_norm = std::max(d_norm, std::fabs(d[i]));
    constexpr double kStepCap = 1.0;
    if (d_norm > 0.0) t_max = std::min(t_max, 4.0 * kStepCap / d_norm);
    double t_init =
        (ctx.have_h0 || !mem.s.empty()) ? 1.0 : std::min(1.0, 1.0 / std::max(gnorm, 1e-12));
    if (d_norm > 0.0) t_init = std::min(t_init, kStepCap / d_norm);
    t_init = std::min(t_init, t_max);
    Probe prev;
    prev.t = 0.0;
    prev.value = phi0;
    prev.slope = gd;
    prev.finite = true;
    prev.has_slope = true;

    Probe cur;
    double t = t_init;
    bool bracketed = false;
    Probe zlo = prev, zhi = prev;
    for (int expand = 0; expand < 20 && !numeric_fail; ++expand) {
      eval_probe(t, false, cur);
      if (!cur.finite || cur.value > phi0 + kC1 * t * gd || (expand > 0 && cur.value >= prev.value)) {
        zlo = prev;
        zhi = cur;
        bracketed = true;
        break;
      }
      eval_probe(t, true, cur);
      if (numeric_fail) break;
      if (std::fabs(cur.slope) <= -kC2 * gd) {
        best = cur;
        break;
      }
      if (cur.slope >= 0.0) {
        zlo = cur;
        zhi = prev;
        bracketed = true;
        break;
      }
      if (t >= t_max * (1.0 - 1e-12)) {
        best = cur;  // stopped by a bound; accept the capped step
        break;
      }
      prev = cur;
      t = std::min(2.0 * t, t_max);
    }
    if (numeric_fail) {
      res.numeric_failure = true;
      return res;
    }
    // Expansion budget exhausted while still descending: take the last probe
    // that satisfied the Armijo condition rather than reporting failure.
    if (!best.finite && !bracketed && prev.t > 0.0 && prev.finite) best = prev;

    if (!best.finite && bracketed) {
      for (int zoom = 0; zoom < 30; ++zoom) {
        const double span = zhi.t - zlo.t;
        if (std::fabs(span) < 1e-16 * std::max(1.0, std::fabs(zlo.t))) break;
        double tm = zlo.t + 0.5 * span;  // bisection with a quadratic nudge
        if (zlo.has_slope && zhi.finite) {
          const double denom = 2.0 * (zhi.value - zlo.value - zlo.slope * span);
          if (std::fabs(denom) > 1e-300) {
            const double tq = zlo.t - zlo.slope * span * span / denom;
            if (std::isfinite(tq) && tq > std::min(zlo.t, zhi.t) + 0.1 * std::fabs(span) &&
                tq < std::max(zlo.t, zhi.t) - 0.1 * std::fabs(span))
              tm = tq;
          }
        }
        eval_probe(tm, false, cur);
        if (!cur.finite || cur.value > phi0 + kC1 * tm * gd || cur.value >= zlo.value) {
          zhi = cur;
          continue;
        }
        eval_probe(tm, true, cur);
        if (numeric_fail) {
          res.numeric_failure = true;
          return res;
        }
        if (std::fabs(cur.slope) <= -kC2 * gd) {
          best = cur;
          break;
        }
        if (cur.slope * (zhi.t - zlo.t) >= 0.0) zhi = zlo;
        zlo = cur;
      }
      // Fall back to the best Armijo point seen inside the bracket.
      if (!best.finite && zlo.t > 0.0 && zlo.finite && zlo.value <= phi0 + kC1 * zlo.t * gd)
        best = zlo;
    }

    // Last resort: plain backtracking. Along a descent direction some small
    // step must decrease a finite function; walls in the interior (alpha <= 0
    // midpoints) just force a shorter one.
    if (!best.finite || best.t <= 0.0) {
      double t_bt = std::min(t_init, t_max);
      for (int bt = 0; bt < 60 && t_bt > 0.0; ++bt) {
        eval_probe(t_bt, false, cur);
        if (debug && bt < 6)
          std::fprintf(stderr, "[bt] t=%.3e phi=%.16e phi0=%.16e gd=%.3e finite=%d\n", t_bt,
                       cur.value, phi0, gd, int(cur.finite));
        if (cur.finite && cur.value < phi0) {
          best = cur;
          break;
        }
        t_bt *= 0.25;
      }
    }

    if (!best.finite || best.t <= 0.0) {
      if (debug)
        std::fprintf(stderr, "[inner] it=%d line search failed (bracketed=%d gd=%.3e t_max=%.3e)\n",
                     it, int(bracketed), gd, t_max);
      if (mem.s.empty()) break;  // no progress possible along steepest descent
      mem.clear();
      continue;
    }

    // Load the accepted point unless the probe buffers already hold it.
    if (!(loaded_slope_t == best.t)) eval_probe(best.t, true, cur);
    if (numeric_fail || !cur.finite) {
      res.numeric_failure = numeric_fail;
      if (numeric_fail) return res;
      break;
    }
    std::vector<double> svec(n), yvec(n);
    for (size_t i = 0; i < n; ++i) {
      svec[i] = x_probe[i] - x[i];
      yvec[i] = g_probe[i] - g[i];
    }
    mem.push(std::move(svec), std::move(yvec));
    x = x_probe;
    st = st_probe;
    g = g_probe;
    ++res.iterations;
    if (ctx.have_h0 && res.iterations % kH0RefreshStride == 0)
      ctx.have_h0 = h0.build(fn.evaluator().nlp(), fn.evaluator(), x, fn.rho, lo, hi);
  }
  res.projected_gradient = projected_gradient_norm(x, g, lo, hi);
  return res;
}

}  // namespace

double kkt_residual(const Nlp& nlp, const std::vector<double>& x,
                    const std::vector<double>& multipliers) {
  require(static_cast<int>(x.size()) == nlp.num_variables(), Errc::invalid_argument,
          "kkt_residual: x has wrong length");
  require(static_cast<int>(multipliers.size()) == nlp.num_constraints(), Errc::invalid_argument,
          "kkt_residual: multiplier vector has wrong length");
  std::vector<double> g(x.size());
  nlp.objective_gradient(x, g);
  const SparsityPattern& sp = nlp.jacobian_sparsity();
  std::vector<double> vals(sp.nnz());
  nlp.jacobian_values(x, vals);
  for (size_t k = 0; k < sp.nnz(); ++k) g[sp.cols[k]] += vals[k] * multipliers[sp.rows[k]];
  std::vector<double> lo, hi;
  nlp.variable_bounds(lo, hi);
  return projected_gradient_norm(x, g, lo, hi);
}

SolveReport solve(const Nlp& nlp, std::vector<double>& x, const SolverOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  SolveReport report;
  const int n = nlp.num_variables();
  const int m = nlp.num_constraints();
  require(static_cast<int>(x.size()) == n, Errc::invalid_argument,
          "solve: x0 has length " + std::to_string(x.size()) + ", expected " + std::to_string(n));

  std::vector<double> lo, hi, clo, chi;
  nlp.variable_bounds(lo, hi);
  nlp.constraint_bounds(clo, chi);
  for (int i = 0; i < n; ++i)
    require(lo[i] <= hi[i], Errc::invalid_argument,
            "solve: variable bound lower > upper at index " + std::to_string(i));
  for (int i = 0; i < m; ++i) {
    require(clo[i] <= chi[i], Errc::invalid_argument,
            "solve: constraint bound lower > upper at index " + std::to_string(i));
    require(clo[i] == chi[i], Errc::invalid_argument,
            "solve: inequality constraints are not supported (index " + std::to_string(i) + ")");
  }

  project(x, lo, hi);
  Evaluator eval(nlp, options.derivative_mode);
  AlFunction fn(eval, clo);
  fn.lambda.assign(m, 0.0);
  fn.rho = options.penalty_init;

  csv::Writer trace({"iter", "objective", "violation", "kkt"});

  auto finish = [&](SolveStatus status, const std::string& msg) {
    report.status = status;
    report.message = msg;
    report.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (!options.trace_path.empty()) trace.save(options.trace_path);
    return report;
  };

  {  // reject a non-finite start explicitly, with the offending index
    const int bad_x = first_nonfinite(x);
    if (bad_x >= 0)
      return finish(SolveStatus::numeric_failure,
                    "non-finite start value at variable " + std::to_string(bad_x));
    AlState st;
    fn.rho = 0.0;
    std::vector<double> dummy(m, 0.0);
    if (!fn.value(x, st)) {
      const int bad_c = first_nonfinite(st.c);
      return finish(SolveStatus::numeric_failure,
                    bad_c >= 0 ? "non-finite constraint " + std::to_string(bad_c) + " at start"
                               : "non-finite objective at start");
    }
    fn.rho = options.penalty_init;
  }

  InnerContext inner_ctx;
  double inner_tol = 1e-2;  // inner projected-gradient tolerance, tightens toward opt_tol
  double viol = std::numeric_limits<double>::infinity();
  double prev_viol = viol;
  int stall_count = 0;

  std::vector<double> c(m), resid(m);
  for (int outer = 1; outer <= options.max_outer_iterations; ++outer) {
    report.iterations = outer;
    const InnerResult inner = minimize_inner(fn, inner_ctx, x, lo, hi, inner_tol,
                                             options.max_inner_iterations, options.lbfgs_memory);
    report.inner_iterations += inner.iterations;
    if (inner.numeric_failure)
      return finish(SolveStatus::numeric_failure, "non-finite values during inner iteration");

    nlp.constraints(x, c);
    viol = 0.0;
    for (int i = 0; i < m; ++i) {
      resid[i] = c[i] - clo[i];
      viol = std::max(viol, std::fabs(resid[i]));
    }
    report.final_objective = nlp.objective(x);
    report.max_constraint_violation = viol;

    // First-order multiplier estimate. The gradient of f + lam_next . c at x
    // equals the augmented-Lagrangian gradient, so the KKT residual with
    // lam_next is exactly the inner solve's exit criterion.
    std::vector<double> lam_next(fn.lambda);
    for (int i = 0; i < m; ++i) lam_next[i] += fn.rho * resid[i];
    report.kkt_residual = kkt_residual(nlp, x, lam_next);
    trace.add_row({static_cast<double>(outer), report.final_objective, viol, report.kkt_residual});

    if (viol <= options.feasibility_tol && report.kkt_residual <= options.optimality_tol)
      return finish(SolveStatus::converged, "");

    // An inner solve that merely ran out of budget continues with the same
    // lambda and rho next round; multipliers move only on converged
    // subproblems. A dead inner (no step possible) gets a penalty bump to
    // reshape the landscape but must not pollute the multipliers.
    if (inner.iterations == 0 && inner.projected_gradient > inner_tol) {
      if (fn.rho < options.penalty_max) {
        fn.rho = std::min(fn.rho * options.penalty_growth, options.penalty_max);
      } else if (++stall_count >= 5) {
        return finish(SolveStatus::infeasible, "inner iteration pinned; penalty at maximum");
      }
      inner_ctx.reset = true;
      continue;
    }
    if (inner.projected_gradient > inner_tol) continue;

    fn.lambda = lam_next;
    for (double& l : fn.lambda) l = std::clamp(l, -1e8, 1e8);
    inner_tol = std::max(inner_tol * 0.3, 0.9 * options.optimality_tol);
    inner_ctx.reset = true;

    // Insufficient feasibility progress drives the penalty up; sufficient
    // progress lets the multiplier iteration do the work.
    if (viol > options.feasibility_tol && viol > 0.5 * prev_viol) {
      if (fn.rho >= options.penalty_max) {
        if (viol > 0.9 * prev_viol) {
          if (++stall_count >= 5)
            return finish(SolveStatus::infeasible,
                          "constraint violation stalled at maximum penalty");
        } else {
          stall_count = 0;
        }
      } else {
        fn.rho = std::min(fn.rho * options.penalty_growth, options.penalty_max);
        inner_ctx.reset = true;
      }
    } else {
      stall_count = 0;
    }
    prev_viol = viol;
  }
  return finish(SolveStatus::max_iter, "outer iteration budget exhausted");
}

}  // namespace gwpoct
