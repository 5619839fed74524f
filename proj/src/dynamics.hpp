#pragma once

#include <array>
#include <string>
#include <vector>

#include "model.hpp"

namespace gwpoct {

enum class FieldInterpolation { linear, cubic };

/// Time-dependent control field sampled at strictly increasing node times.
/// Evaluation outside [front, back] throws; extrapolation would silently invent
/// control authority that was never optimized.
class FieldSignal {
 public:
  FieldSignal() = default;
  FieldSignal(std::vector<double> node_times, std::vector<double> node_values,
              FieldInterpolation interpolation = FieldInterpolation::linear);

  static FieldSignal constant(double value, double t_begin, double t_end);

  double operator()(double t) const;
  double t_begin() const { return times_.front(); }
  double t_end() const { return times_.back(); }
  size_t size() const { return times_.size(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }
  FieldInterpolation interpolation() const { return interp_; }

  /// Integral over the full support with composite trapezoid on the nodes.
  double integral() const;

 private:
  std::vector<double> times_;
  std::vector<double> values_;
  FieldInterpolation interp_ = FieldInterpolation::linear;
};

/// Time derivative of the four Gaussian parameters.
struct GaussianDeriv {
  double alpha = 0.0, beta = 0.0, x0 = 0.0, p0 = 0.0;
  std::array<double, 4> to_array() const { return {alpha, beta, x0, p0}; }
};

/// Jacobian of the equations of motion: d f / d state (row-major 4x4) and d f / d field.
struct EomJacobian {
  std::array<double, 16> d_state{};
  std::array<double, 4> d_field{};
};

/// Right-hand side of the Gaussian parameter equations of motion:
///   alpha_dot = 4 alpha beta / m
///   beta_dot  = -2 (alpha^2 - beta^2)/m - 4 alpha^2 dU/d alpha
///   x0_dot    = p0 / m
///   p0_dot    = -dU/d x0
GaussianDeriv eom_rhs(const GaussianState& s, double field, const Model& model);

/// RHS together with its analytic Jacobian (used by collocation and its tests).
GaussianDeriv eom_rhs_jac(const GaussianState& s, double field, const Model& model,
                          EomJacobian& jac);

struct GaussianTrajectory {
  std::vector<double> times;
  std::vector<GaussianState> states;
};

/// Fixed-step RK4 integration of the equations of motion under the given field.
/// The last step is shortened so t_end is hit exactly. Throws Errc::domain with
/// a time stamp if alpha drops to zero or below (ansatz breakdown).
GaussianTrajectory propagate_gaussian(const GaussianState& s0, const FieldSignal& field,
                                      const Model& model, double t0, double tf, double dt);

/// Default integrator step for a horizon: (tf - t0) / 20000.
inline double default_gaussian_dt(double t0, double tf) { return (tf - t0) / 20000.0; }

struct EnergyBreakdown {
  double kinetic = 0.0;
  double potential = 0.0;
  double total = 0.0;
};

/// <T> = p0^2/(2m) + (alpha^2 + beta^2)/(2 m alpha), <V> from the closed form.
EnergyBreakdown gaussian_energy(const GaussianState& s, double field, const Model& model);

/// Trajectory export: t, alpha, beta, x0, p0, E, K, V, Etot.
void write_trajectory_csv(const GaussianTrajectory& traj, const FieldSignal& field,
                          const Model& model, const std::string& path);

}  // namespace gwpoct
