#pragma once

#include <complex>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "model.hpp"

namespace gwpoct {

/// Uniform periodic grid for the spectral propagator: x_i = x_min + i dx with
/// dx = (x_max - x_min) / n_points and n_points a power of two.
struct SpatialGrid {
  double x_min = -12.0;
  double x_max = 12.0;
  int n_points = 1024;

  double dx() const { return (x_max - x_min) / n_points; }
  double x(int i) const { return x_min + dx() * i; }
  /// FFT-ordered momenta k_j = 2 pi j / (n dx), j wrapped to (-n/2, n/2].
  std::vector<double> momenta() const;
  void validate() const;

  static SpatialGrid default_for(const QuarticDoubleWell& well);
};

/// Complex amplitudes on the grid, kept unit-normalized (sum |psi|^2 dx = 1).
struct WaveFunction {
  SpatialGrid grid;
  std::vector<std::complex<double>> amplitudes;

  double norm_sq() const;
  void normalize();

  double position_mean() const;
  double position_variance() const;
  double momentum_mean() const;
  double kinetic_energy(double mass) const;
  /// <V(x)> - q E <x> against an arbitrary real-space potential.
  double potential_energy(const Model& model, double field, bool use_fitted_potential) const;

  /// |<this|other>|, assuming matching grids.
  double overlap_abs(const WaveFunction& other) const;

  /// Binary snapshot: magic, n, x_min, x_max header followed by the complex array.
  void save(const std::string& path) const;
  static WaveFunction load(const std::string& path);
};

/// Sample the Gaussian ansatz on the grid and renormalize. Requires the support
/// margin |x0 - edge| >= 5 / sqrt(2 alpha) on both sides; the error names the
/// violated edge.
WaveFunction init_gaussian_on_grid(const GaussianState& s, const SpatialGrid& grid);

struct QuantumObservables {
  double t = 0.0;
  double x_mean = 0.0;
  double x_var = 0.0;
  double p_mean = 0.0;
  double norm = 0.0;
  double kinetic = 0.0;
  double potential = 0.0;
  double total = 0.0;
  double mean_force = 0.0;  // -<dV/dx> + q E, for Ehrenfest cross-checks
};

struct TdseResult {
  std::vector<QuantumObservables> series;
  WaveFunction psi_final;
};

struct TdseOptions {
  double dt = 0.5;
  int observables_stride = 20;       // record every this many steps
  bool use_fitted_potential = false; // ablation switch; default is the exact potential
  double norm_drift_abort = 1e-6;
};

/// Second-order split-operator propagation under V(x) - q x E(t) with the field
/// evaluated at each step midpoint. Unitary up to roundoff; aborts when the
/// norm drifts beyond the configured tolerance (grid or timestep inadequacy).
/// The grid Nyquist momentum must comfortably exceed the momenta the dynamics
/// will reach (factor ~4 on max |<p>| is a safe margin).
TdseResult propagate_tdse(const WaveFunction& psi0, const FieldSignal& field, const Model& model,
                          double t0, double tf, const TdseOptions& options);

struct BoundState {
  double energy = 0.0;
  int parity = 0;  // +1 even, -1 odd, 0 undetermined (asymmetric grid)
};

/// Fourier-grid Hamiltonian eigenstates with energy below `energy_cutoff`,
/// sorted ascending and tagged with parity from the mirror-symmetry sign.
std::vector<BoundState> bound_states(const Model& model, const SpatialGrid& grid,
                                     double energy_cutoff);

/// Default cutoff: the quartic barrier height (sub-barrier states).
std::vector<BoundState> bound_states(const Model& model, const SpatialGrid& grid);

/// Grid wavefunction of the index-th eigenstate (ascending energy order).
WaveFunction bound_state_wavefunction(const Model& model, const SpatialGrid& grid, int index);

/// Err = |x0_target - <psi|x|psi>| / x_B; < 1 means the barrier was crossed.
double err_metric(const WaveFunction& psi_final, double x0_target, double x_b);

/// Moment-matched Gaussian: x0 = <x>, p0 = <p>, alpha = 1/(4 var_x), beta from
/// the symmetrized position-momentum covariance <{dx, dp}>/2 = -beta/(2 alpha).
GaussianState reduce_to_gaussian(const WaveFunction& psi);

/// Observable series CSV: t,x_mean,x_var,p_mean,norm,K,V,E.
void write_observables_csv(const std::vector<QuantumObservables>& series, const std::string& path);

/// Eigenvalue CSV: index,energy,parity.
void write_bound_states_csv(const std::vector<BoundState>& states, const std::string& path);

}  // namespace gwpoct
