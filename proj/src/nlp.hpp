#pragma once

#include <string>
#include <vector>

namespace gwpoct {

/// Constraint-Jacobian nonzero pattern (triplet layout, fixed across evaluations).
struct SparsityPattern {
  std::vector<int> rows;
  std::vector<int> cols;
  size_t nnz() const { return rows.size(); }
};

/// Sparse, bounded, equality-constrained nonlinear program. Equalities are
/// encoded as equal lower/upper constraint bounds; the solver rejects anything
/// else (general inequalities are out of scope).
class Nlp {
 public:
  virtual ~Nlp() = default;

  virtual int num_variables() const = 0;
  virtual int num_constraints() const = 0;
  virtual void variable_bounds(std::vector<double>& lower, std::vector<double>& upper) const = 0;
  virtual void constraint_bounds(std::vector<double>& lower, std::vector<double>& upper) const = 0;

  virtual double objective(const std::vector<double>& x) const = 0;
  virtual void objective_gradient(const std::vector<double>& x, std::vector<double>& grad) const = 0;
  virtual void constraints(const std::vector<double>& x, std::vector<double>& c) const = 0;

  virtual const SparsityPattern& jacobian_sparsity() const = 0;
  /// Values aligned with jacobian_sparsity() triplets.
  virtual void jacobian_values(const std::vector<double>& x, std::vector<double>& vals) const = 0;

  /// Diagonal of the objective Hessian (or any positive estimate of it), used
  /// only to precondition the solver's inner iteration. The default, zero, is
  /// always safe.
  virtual void objective_hessian_diag(const std::vector<double>& x,
                                      std::vector<double>& diag) const {
    (void)x;
    diag.assign(num_variables(), 0.0);
  }
};

enum class DerivativeMode { analytic, sparse_finite_difference };

struct SolverOptions {
  int max_outer_iterations = 500;
  int max_inner_iterations = 200;
  double feasibility_tol = 1e-6;
  double optimality_tol = 1e-5;
  double penalty_init = 100.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e8;
  int lbfgs_memory = 12;
  DerivativeMode derivative_mode = DerivativeMode::analytic;
  std::string trace_path;  // optional per-outer-iteration CSV (iter, objective, violation, kkt)
};

enum class SolveStatus { converged, max_iter, infeasible, numeric_failure };

struct SolveReport {
  SolveStatus status = SolveStatus::max_iter;
  int iterations = 0;        // outer iterations
  int inner_iterations = 0;  // cumulative quasi-Newton steps
  double final_objective = 0.0;
  double max_constraint_violation = 0.0;
  double kkt_residual = 0.0;
  double wall_time_sec = 0.0;
  std::string message;

  /// Serialize as a key-value log file.
  void save(const std::string& path) const;
};

const char* to_string(SolveStatus status);

/// Augmented-Lagrangian solve with projected L-BFGS inner iterations.
/// Deterministic for fixed (nlp, x0, options). On status == converged the
/// first-order KKT conditions hold within the requested tolerances.
SolveReport solve(const Nlp& nlp, std::vector<double>& x, const SolverOptions& options);

/// Infinity norm of the projected gradient of the Lagrangian f + lambda . c at x.
/// Components at active bounds contribute only when pointing into the feasible box.
double kkt_residual(const Nlp& nlp, const std::vector<double>& x,
                    const std::vector<double>& multipliers);

}  // namespace gwpoct
