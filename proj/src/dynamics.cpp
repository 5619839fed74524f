#include "dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "config.hpp"
#include "csv.hpp"
#include "error.hpp"

namespace gwpoct {

FieldSignal::FieldSignal(std::vector<double> node_times, std::vector<double> node_values,
                         FieldInterpolation interpolation)
    : times_(std::move(node_times)), values_(std::move(node_values)), interp_(interpolation) {
  require(times_.size() == values_.size(), Errc::invalid_argument,
          "field signal: times and values differ in length");
  require(times_.size() >= 2, Errc::invalid_argument, "field signal needs at least two nodes");
  for (size_t i = 1; i < times_.size(); ++i)
    require(times_[i] > times_[i - 1], Errc::invalid_argument,
            "field signal: node times must be strictly increasing");
}

FieldSignal FieldSignal::constant(double value, double t_begin, double t_end) {
  return FieldSignal({t_begin, t_end}, {value, value});
}

double FieldSignal::operator()(double t) const {
  const double span = times_.back() - times_.front();
  const double slack = 1e-9 * std::max(1.0, std::fabs(span));
  require(t >= times_.front() - slack && t <= times_.back() + slack, Errc::domain,
          "field evaluated at t=" + format_double(t) + " outside [" +
              format_double(times_.front()) + ", " + format_double(times_.back()) + "]");
  t = std::clamp(t, times_.front(), times_.back());

  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  size_t k = static_cast<size_t>(std::distance(times_.begin(), it));
  k = std::clamp<size_t>(k, 1, times_.size() - 1) - 1;
  const double h = times_[k + 1] - times_[k];
  const double u = (t - times_[k]) / h;

  if (interp_ == FieldInterpolation::linear)
    return values_[k] + u * (values_[k + 1] - values_[k]);

  // Cubic Hermite with centered-difference slopes (one-sided at the ends).
  auto slope = [&](size_t i) {
    if (i == 0) return (values_[1] - values_[0]) / (times_[1] - times_[0]);
    if (i == times_.size() - 1)
      return (values_[i] - values_[i - 1]) / (times_[i] - times_[i - 1]);
    return (values_[i + 1] - values_[i - 1]) / (times_[i + 1] - times_[i - 1]);
  };
  const double m0 = slope(k) * h;
  const double m1 = slope(k + 1) * h;
  const double u2 = u * u, u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * values_[k] + (u3 - 2 * u2 + u) * m0 +
         (-2 * u3 + 3 * u2) * values_[k + 1] + (u3 - u2) * m1;
}

double FieldSignal::integral() const {
  double acc = 0.0;
  for (size_t k = 0; k + 1 < times_.size(); ++k)
    acc += 0.5 * (values_[k] + values_[k + 1]) * (times_[k + 1] - times_[k]);
  return acc;
}

GaussianDeriv eom_rhs(const GaussianState& s, double field, const Model& model) {
  require(s.alpha > 0.0, Errc::domain, "equations of motion require alpha > 0");
  const MeanPotentialDerivs u = model.mean_derivs(s.alpha, s.x0);
  const double m = model.mass;
  GaussianDeriv d;
  d.alpha = 4.0 * s.alpha * s.beta / m;
  d.beta = -2.0 * (s.alpha * s.alpha - s.beta * s.beta) / m - 4.0 * s.alpha * s.alpha * u.d_alpha;
  d.x0 = s.p0 / m;
  d.p0 = -(u.d_x0 - model.charge * field);
  return d;
}

GaussianDeriv eom_rhs_jac(const GaussianState& s, double field, const Model& model,
                          EomJacobian& jac) {
  require(s.alpha > 0.0, Errc::domain, "equations of motion require alpha > 0");
  const MeanPotentialDerivs u = model.mean_derivs(s.alpha, s.x0);
  const double m = model.mass;
  const double a = s.alpha, b = s.beta;

  GaussianDeriv d;
  d.alpha = 4.0 * a * b / m;
  d.beta = -2.0 * (a * a - b * b) / m - 4.0 * a * a * u.d_alpha;
  d.x0 = s.p0 / m;
  d.p0 = -(u.d_x0 - model.charge * field);

  auto& A = jac.d_state;
  A.fill(0.0);
  A[0 * 4 + 0] = 4.0 * b / m;
  A[0 * 4 + 1] = 4.0 * a / m;
  A[1 * 4 + 0] = -4.0 * a / m - 8.0 * a * u.d_alpha - 4.0 * a * a * u.d2_alpha2;
  A[1 * 4 + 1] = 4.0 * b / m;
  A[1 * 4 + 2] = -4.0 * a * a * u.d2_alpha_x0;
  A[2 * 4 + 3] = 1.0 / m;
  A[3 * 4 + 0] = -u.d2_alpha_x0;
  A[3 * 4 + 2] = -u.d2_x02;

  jac.d_field = {0.0, 0.0, 0.0, model.charge};
  return d;
}

namespace {

GaussianState blend(const GaussianState& s, const GaussianDeriv& d, double h, double t_stamp) {
  GaussianState out{s.alpha + h * d.alpha, s.beta + h * d.beta, s.x0 + h * d.x0, s.p0 + h * d.p0};
  require(out.alpha > 0.0, Errc::domain,
          "gaussian propagation: alpha <= 0 at t = " + format_double(t_stamp) +
              " (ansatz breakdown or step too large)");
  return out;
}

}  // namespace

GaussianTrajectory propagate_gaussian(const GaussianState& s0, const FieldSignal& field,
                                      const Model& model, double t0, double tf, double dt) {
  require(dt > 0.0, Errc::invalid_argument, "propagate_gaussian requires dt > 0");
  require(tf > t0, Errc::invalid_argument, "propagate_gaussian requires tf > t0");
  require(s0.alpha > 0.0, Errc::domain, "initial state must have alpha > 0");

  GaussianTrajectory traj;
  const size_t n_steps = static_cast<size_t>(std::ceil((tf - t0) / dt - 1e-12));
  traj.times.reserve(n_steps + 1);
  traj.states.reserve(n_steps + 1);
  traj.times.push_back(t0);
  traj.states.push_back(s0);

  GaussianState s = s0;
  double t = t0;
  const double eps = 1e-12 * (tf - t0);
  while (t < tf - eps) {
    const double h = std::min(dt, tf - t);
    const GaussianDeriv k1 = eom_rhs(s, field(t), model);
    const GaussianDeriv k2 = eom_rhs(blend(s, k1, 0.5 * h, t), field(t + 0.5 * h), model);
    const GaussianDeriv k3 = eom_rhs(blend(s, k2, 0.5 * h, t), field(t + 0.5 * h), model);
    const GaussianDeriv k4 = eom_rhs(blend(s, k3, h, t), field(t + h), model);
    s.alpha += h / 6.0 * (k1.alpha + 2.0 * k2.alpha + 2.0 * k3.alpha + k4.alpha);
    s.beta += h / 6.0 * (k1.beta + 2.0 * k2.beta + 2.0 * k3.beta + k4.beta);
    s.x0 += h / 6.0 * (k1.x0 + 2.0 * k2.x0 + 2.0 * k3.x0 + k4.x0);
    s.p0 += h / 6.0 * (k1.p0 + 2.0 * k2.p0 + 2.0 * k3.p0 + k4.p0);
    t += h;
    require(s.alpha > 0.0, Errc::domain,
            "gaussian propagation: alpha <= 0 at t = " + format_double(t) +
                " (ansatz breakdown or step too large)");
    traj.times.push_back(t);
    traj.states.push_back(s);
  }
  return traj;
}

EnergyBreakdown gaussian_energy(const GaussianState& s, double field, const Model& model) {
  require(s.alpha > 0.0, Errc::domain, "gaussian energy requires alpha > 0");
  EnergyBreakdown e;
  const double m = model.mass;
  e.kinetic = s.p0 * s.p0 / (2.0 * m) + (s.alpha * s.alpha + s.beta * s.beta) / (2.0 * m * s.alpha);
  e.potential = model.mean_derivs(s.alpha, s.x0).value - model.charge * s.x0 * field;
  e.total = e.kinetic + e.potential;
  return e;
}

void write_trajectory_csv(const GaussianTrajectory& traj, const FieldSignal& field,
                          const Model& model, const std::string& path) {
  csv::Writer w({"t", "alpha", "beta", "x0", "p0", "E", "K", "V", "Etot"});
  for (size_t i = 0; i < traj.times.size(); ++i) {
    const double t = traj.times[i];
    const GaussianState& s = traj.states[i];
    const double E = field(t);
    const EnergyBreakdown en = gaussian_energy(s, E, model);
    w.add_row({t, s.alpha, s.beta, s.x0, s.p0, E, en.kinetic, en.potential, en.total});
  }
  w.save(path);
}

}  // namespace gwpoct
