#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "model.hpp"
#include "nlp.hpp"

namespace gwpoct {

enum class CollocationScheme { trapezoidal, hermite_simpson };

const char* to_string(CollocationScheme scheme);
CollocationScheme scheme_from_string(const std::string& name);

/// Uniform collocation mesh on [t0, tf].
struct Mesh {
  int n_nodes = 2000;
  double t0 = 0.0;
  double tf = 20000.0;
  CollocationScheme scheme = CollocationScheme::hermite_simpson;

  double spacing() const { return (tf - t0) / (n_nodes - 1); }
  double node_time(int k) const { return t0 + spacing() * k; }
  std::vector<double> node_times() const;
  void validate() const;
};

/// Full statement of the optimization: model, boundary states, horizon,
/// penalties, and box bounds. All quantities in atomic units.
struct ControlProblem {
  Model model;
  GaussianState initial_state;
  GaussianState target_state;
  double t0 = 0.0;
  double tf = 20000.0;
  double kappa = 0.3;      // field fluence penalty
  double epsilon = 0.005;  // shape-function floor
  double eta = 0.0;        // kinetic-energy reward; 0 disables the term
  double field_min = -0.05;
  double field_max = 0.05;
  std::array<double, 4> state_lower{1e-3, -1e3, -8.0, -1e3};
  std::array<double, 4> state_upper{1e3, 1e3, 8.0, 1e3};
  // Variable scaling handed to the solver; mandatory for conditioning.
  std::array<double, 4> state_scales{10.0, 10.0, 2.0, 50.0};
  double field_scale = 0.05;

  /// Shape function s(t) = sin^2(pi (t-t0)/(tf-t0)) + epsilon.
  double shape_function(double t) const;
  void validate() const;

  /// Boundary states and default boxes for a quartic model: local harmonic
  /// ground-state widths at the two minima, x0 box (-4 x_B, 4 x_B).
  static ControlProblem paper_default(const Model& model, double tf);
};

/// Running cost kappa E^2 / s(t) - eta p0^2 / (2m).
double running_cost(double field, double p0, double t, const ControlProblem& prob);

/// Terminal cost -|<psi_f | psi_target>|^2.
double terminal_cost(const GaussianState& s_final, const ControlProblem& prob);

/// Flattened node states and controls in physical units: node-major blocks
/// (alpha_k, beta_k, x0_k, p0_k, E_k), followed by the Hermite-Simpson
/// midpoint controls when that scheme is active.
struct DecisionVector {
  CollocationScheme scheme = CollocationScheme::trapezoidal;
  int n_nodes = 0;
  std::vector<double> values;

  static int size_for(int n_nodes, CollocationScheme scheme) {
    return 5 * n_nodes + (scheme == CollocationScheme::hermite_simpson ? n_nodes - 1 : 0);
  }
  static DecisionVector zeros(int n_nodes, CollocationScheme scheme);

  double state_component(int k, int j) const { return values[5 * k + j]; }
  double& state_component(int k, int j) { return values[5 * k + j]; }
  GaussianState state(int k) const;
  void set_state(int k, const GaussianState& s);
  double field(int k) const { return values[5 * k + 4]; }
  double& field(int k) { return values[5 * k + 4]; }
  double mid_field(int k) const { return values[5 * n_nodes + k]; }
  double& mid_field(int k) { return values[5 * n_nodes + k]; }
};

/// Defect residual of the trapezoidal rule over one interval.
std::array<double, 4> trapezoidal_defect(const GaussianState& s_k, const GaussianState& s_k1,
                                         double field_k, double field_k1, double h,
                                         const Model& model);

/// Compressed Hermite-Simpson defect: the midpoint state is eliminated through
/// the Hermite interpolant, the midpoint control stays a decision variable.
std::array<double, 4> hermite_simpson_defect(const GaussianState& s_k, const GaussianState& s_k1,
                                             double field_k, double field_mid, double field_k1,
                                             double h, const Model& model);

/// State interpolant midpoint used by the compressed Hermite-Simpson rule.
GaussianState hermite_simpson_midpoint(const GaussianState& s_k, const GaussianState& s_k1,
                                       double field_k, double field_k1, double h,
                                       const Model& model);

/// The discretized problem: scaled decision variables, defect + initial-pin +
/// zero-net-force equality constraints, analytic gradients and a banded
/// Jacobian sparsity pattern.
class CollocationNlp : public Nlp {
 public:
  CollocationNlp(ControlProblem prob, Mesh mesh);

  int num_variables() const override;
  int num_constraints() const override;
  void variable_bounds(std::vector<double>& lower, std::vector<double>& upper) const override;
  void constraint_bounds(std::vector<double>& lower, std::vector<double>& upper) const override;
  double objective(const std::vector<double>& x) const override;
  void objective_gradient(const std::vector<double>& x, std::vector<double>& grad) const override;
  void constraints(const std::vector<double>& x, std::vector<double>& c) const override;
  const SparsityPattern& jacobian_sparsity() const override;
  void jacobian_values(const std::vector<double>& x, std::vector<double>& vals) const override;
  void objective_hessian_diag(const std::vector<double>& x,
                              std::vector<double>& diag) const override;

  const ControlProblem& problem() const { return prob_; }
  const Mesh& mesh() const { return mesh_; }

  std::vector<double> to_scaled(const DecisionVector& dv) const;
  DecisionVector to_physical(const std::vector<double>& x) const;

 private:
  struct NodeEval;
  void evaluate_nodes(const std::vector<double>& x, bool with_jacobian,
                      std::vector<NodeEval>& nodes, std::vector<NodeEval>& mids) const;

  ControlProblem prob_;
  Mesh mesh_;
  SparsityPattern sparsity_;
};

/// Transcribe the control problem on the mesh. Throws on inconsistent bounds.
std::unique_ptr<CollocationNlp> build_nlp(const ControlProblem& prob, const Mesh& mesh);

/// Betts-style maximum relative local error: each interval is re-integrated
/// from its start state with a fine fixed-step RK4 using the solution's
/// interpolated control; the end-state mismatch is scaled per component by
/// (1 + max |component| over the trajectory) and maximized over the mesh.
double epsilon_disc(const DecisionVector& solution, const ControlProblem& prob, const Mesh& mesh);

/// Deterministic seeded guess: states interpolate linearly between the
/// boundary states with uniform noise of `state_noise` times the component
/// scale; controls are zero-mean uniform noise filling `field_noise` of the
/// field box. Everything is clipped to the declared bounds.
DecisionVector initial_guess(const ControlProblem& prob, const Mesh& mesh, std::uint64_t seed,
                             double state_noise = 0.2, double field_noise = 1.0);

/// Control signal stored in a solution (nodes plus Hermite-Simpson midpoints).
FieldSignal field_from_solution(const DecisionVector& dv, const Mesh& mesh,
                                FieldInterpolation interpolation = FieldInterpolation::linear);

/// Node-major solution CSV: node_type,t,alpha,beta,x0,p0,E. Midpoint rows carry
/// the Hermite-interpolated state.
void write_solution_csv(const DecisionVector& dv, const ControlProblem& prob, const Mesh& mesh,
                        const std::string& path);

struct LoadedSolution {
  DecisionVector decision;
  int n_nodes = 0;
  double t0 = 0.0;
  double tf = 0.0;
  CollocationScheme scheme = CollocationScheme::trapezoidal;
};

LoadedSolution load_solution_csv(const std::string& path);

}  // namespace gwpoct
