#pragma once

#include <array>
#include <string>
#include <vector>

namespace gwpoct {

/// Parameters of the normalized Gaussian wavepacket
///   psi(x) = (2 alpha / pi)^(1/4) exp[-(alpha + i beta)(x - x0)^2 + i p0 (x - x0)].
/// alpha must stay positive for the state to be normalizable.
struct GaussianState {
  double alpha = 1.0;  // width parameter (a0^-2)
  double beta = 0.0;   // position-momentum tilt (a0^-2)
  double x0 = 0.0;     // mean position (a0)
  double p0 = 0.0;     // mean momentum (a.u.)

  std::array<double, 4> to_array() const { return {alpha, beta, x0, p0}; }
  static GaussianState from_array(const std::array<double, 4>& a) {
    return GaussianState{a[0], a[1], a[2], a[3]};
  }
};

/// Bistable quartic potential V(x) = V_B ((x/x_B)^2 - 1)^2 with linear dipole q*x.
/// Minima sit at +-x_B with V = 0; the barrier top is V(0) = V_B.
struct QuarticDoubleWell {
  double barrier_height = 0.01;     // V_B (Eh)
  double minimum_position = 2.0;    // x_B (a0)
  double charge = 1.0;              // q (e)
  double mass = 1836.152673;        // m (a.u.)

  double eval(double x) const {
    const double r = x / minimum_position;
    const double u = r * r - 1.0;
    return barrier_height * u * u;
  }
  double derivative(double x) const {
    const double xb2 = minimum_position * minimum_position;
    return 4.0 * barrier_height * x * (x * x - xb2) / (xb2 * xb2);
  }
  /// V''(+-x_B) = 8 V_B / x_B^2, the curvature used for local harmonic states.
  double curvature_at_minimum() const {
    return 8.0 * barrier_height / (minimum_position * minimum_position);
  }
};

/// One term of the Gaussian-sum representation: amplitude * exp(-exponent (x - center)^2).
struct GaussianTerm {
  double amplitude = 0.0;  // g_p (Eh)
  double exponent = 0.0;   // b_p (a0^-2), >= 0
  double center = 0.0;     // x_p (a0)
};

/// Sum-of-Gaussians global approximation of the potential. Mirror-symmetric term
/// sets represent symmetric potentials exactly under x -> -x.
struct GaussianSumPotential {
  std::vector<GaussianTerm> terms;

  double eval(double x) const;
  /// Largest |fit - reference| over a uniform sample of [lo, hi].
  double max_deviation(const QuarticDoubleWell& reference, double lo, double hi,
                       int samples = 1201) const;
};

/// Harmonic well V(x) = k/2 (x - center)^2. The Gaussian ansatz is exact here,
/// which makes this the cross-validation workhorse between the Gaussian model
/// and the grid propagator.
struct HarmonicWell {
  double force_constant = 0.02;  // k (Eh / a0^2)
  double center = 0.0;           // a0
  double eval(double x) const {
    const double d = x - center;
    return 0.5 * force_constant * d * d;
  }
};

/// Field-free mean potential U0(alpha, x0) = <psi|V|psi> and its derivatives.
/// The dipole contribution -q x0 E is linear and handled by callers.
struct MeanPotentialDerivs {
  double value = 0.0;
  double d_alpha = 0.0;
  double d_x0 = 0.0;
  double d2_alpha2 = 0.0;
  double d2_alpha_x0 = 0.0;
  double d2_x02 = 0.0;
};

enum class PotentialKind { quartic, harmonic };

/// Bundle consumed by the dynamics and transcription layers: the exact real-space
/// potential plus the closed-form Gaussian expectation values.
struct Model {
  PotentialKind kind = PotentialKind::quartic;
  QuarticDoubleWell well;
  GaussianSumPotential fit;   // used when kind == quartic
  HarmonicWell harmonic;      // used when kind == harmonic
  double mass = 1836.152673;  // a.u.
  double charge = 1.0;        // e

  /// Exact potential, used by the quantum propagator and eigensolver.
  double potential(double x) const;
  double potential_derivative(double x) const;
  /// Potential as seen by the Gaussian equations of motion (fit or harmonic).
  double model_potential(double x) const;
  double model_potential_derivative(double x) const;
  /// Closed-form <V> over the Gaussian ansatz with first and second derivatives.
  MeanPotentialDerivs mean_derivs(double alpha, double x0) const;

  static Model quartic_paper(double barrier_height = 0.01, double minimum_position = 2.0,
                             double charge = 1.0, double mass = 1836.152673);
  static Model harmonic_well(double force_constant, double center, double charge, double mass);
};

/// Direct evaluation of the Gaussian-sum potential at x.
double gaussian_sum_eval(const GaussianSumPotential& fit, double x);

/// The published 5-term coefficients, scaled to the given quartic's V_B and x_B.
GaussianSumPotential paper_gaussian_fit(const QuarticDoubleWell& pot);

/// Least-squares refit of the Gaussian sum on [domain_lo, domain_hi] with a
/// mirror-symmetric parameterization. n_terms == 5 on the default domain returns
/// the published coefficients without fitting. Throws Errc::domain when the
/// relative rms residual exceeds `residual_threshold`.
GaussianSumPotential fit_gaussian_sum(const QuarticDoubleWell& pot, double domain_lo,
                                      double domain_hi, int n_terms,
                                      double residual_threshold = 0.05);

/// Default refit window [-3 x_B, 3 x_B].
inline double default_fit_domain(const QuarticDoubleWell& pot) { return 3.0 * pot.minimum_position; }

/// <psi|V|psi> - q x0 E in closed form (requires s.alpha > 0).
double mean_potential(const GaussianSumPotential& fit, const GaussianState& s, double field,
                      double charge);

/// d<V>/d alpha; the dipole term does not depend on alpha.
double mean_potential_d_alpha(const GaussianSumPotential& fit, const GaussianState& s);

/// d<V>/d x0 - q E.
double mean_potential_d_x0(const GaussianSumPotential& fit, const GaussianState& s, double field,
                           double charge);

/// Field-free U0 and all derivatives needed for the EOM Jacobians.
MeanPotentialDerivs mean_potential_derivs(const GaussianSumPotential& fit, double alpha, double x0);

/// Squared overlap |<psi(a)|psi(b)>|^2 in closed form, in [0, 1].
double gaussian_overlap(const GaussianState& a, const GaussianState& b);

/// Overlap squared plus its gradient with respect to a's four parameters.
double gaussian_overlap_grad(const GaussianState& a, const GaussianState& b,
                             std::array<double, 4>& grad_a);

/// Width alpha* making the tilt equation stationary at fixed x0:
/// solves d<V>/d alpha = -1/(2m), i.e. beta_dot = 0 for beta = 0.
double stationary_width(const Model& model, double x0);

/// Serialize/deserialize potential and fit parameters as a key-value file.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace gwpoct
