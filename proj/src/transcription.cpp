#include "transcription.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "config.hpp"
#include "csv.hpp"
#include "error.hpp"

namespace gwpoct {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

using Vec4 = std::array<double, 4>;
using Mat4 = std::array<double, 16>;

Mat4 matmul(const Mat4& a, const Mat4& b) {
  Mat4 out{};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      const double aik = a[i * 4 + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < 4; ++j) out[i * 4 + j] += aik * b[k * 4 + j];
    }
  return out;
}

Vec4 matvec(const Mat4& a, const Vec4& v) {
  Vec4 out{};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) out[i] += a[i * 4 + j] * v[j];
  return out;
}

/// Width floor for NLP-internal evaluations. The Hermite interpolant can push
/// midpoint widths through zero while the solver explores; below the floor the
/// mean-potential derivatives are frozen at the floor value (the polynomial
/// parts of the equations of motion keep the true alpha), which removes the
/// hard wall from the merit landscape. Node widths are box-bounded above the
/// floor, so accepted solutions never see the continuation.
constexpr double kAlphaFloor = 1e-4;

/// Non-throwing EOM evaluation with the sub-floor continuation; reports
/// failure only for non-finite inputs or outputs.
bool eval_eom(const Model& model, const Vec4& s, double field, bool with_jacobian, Vec4& f,
              Mat4* A, Vec4* fE) {
  if (!std::isfinite(s[0]) || !std::isfinite(s[1]) || !std::isfinite(s[2]) ||
      !std::isfinite(s[3]) || !std::isfinite(field))
    return false;
  const double a = s[0], b = s[1], x0 = s[2], p0 = s[3];
  const bool clamped = a < kAlphaFloor;
  const double a_eff = clamped ? kAlphaFloor : a;
  const double m = model.mass;

  const MeanPotentialDerivs u = model.mean_derivs(a_eff, x0);
  f[0] = 4.0 * a * b / m;
  f[1] = -2.0 * (a * a - b * b) / m - 4.0 * a * a * u.d_alpha;
  f[2] = p0 / m;
  f[3] = -(u.d_x0 - model.charge * field);
  if (!std::isfinite(f[0]) || !std::isfinite(f[1]) || !std::isfinite(f[2]) || !std::isfinite(f[3]))
    return false;

  if (with_jacobian) {
    const double uaa = clamped ? 0.0 : u.d2_alpha2;
    const double uax_a = clamped ? 0.0 : u.d2_alpha_x0;  // d(U_a)/da freezes below the floor
    A->fill(0.0);
    (*A)[0 * 4 + 0] = 4.0 * b / m;
    (*A)[0 * 4 + 1] = 4.0 * a / m;
    (*A)[1 * 4 + 0] = -4.0 * a / m - 8.0 * a * u.d_alpha - 4.0 * a * a * uaa;
    (*A)[1 * 4 + 1] = 4.0 * b / m;
    (*A)[1 * 4 + 2] = -4.0 * a * a * u.d2_alpha_x0;
    (*A)[2 * 4 + 3] = 1.0 / m;
    (*A)[3 * 4 + 0] = -uax_a;
    (*A)[3 * 4 + 2] = -u.d2_x02;
    (*fE) = {0.0, 0.0, 0.0, model.charge};
  }
  return true;
}

}  // namespace

const char* to_string(CollocationScheme scheme) {
  return scheme == CollocationScheme::trapezoidal ? "trapezoidal" : "hermite-simpson";
}

CollocationScheme scheme_from_string(const std::string& name) {
  if (name == "trapezoidal" || name == "trapezoid") return CollocationScheme::trapezoidal;
  if (name == "hermite-simpson" || name == "hermite_simpson" || name == "hs")
    return CollocationScheme::hermite_simpson;
  fail(Errc::parse, "unknown collocation scheme '" + name + "'");
}

std::vector<double> Mesh::node_times() const {
  std::vector<double> t(n_nodes);
  for (int k = 0; k < n_nodes; ++k) t[k] = node_time(k);
  t.back() = tf;
  return t;
}

void Mesh::validate() const {
  require(n_nodes >= 3, Errc::invalid_argument, "mesh needs at least 3 nodes");
  require(tf > t0, Errc::invalid_argument, "mesh needs tf > t0");
}

double ControlProblem::shape_function(double t) const {
  const double s = std::sin(M_PI * (t - t0) / (tf - t0));
  return s * s + epsilon;
}

void ControlProblem::validate() const {
  require(tf > t0, Errc::invalid_argument, "control problem needs tf > t0");
  require(tf - t0 >= 10.0, Errc::invalid_argument,
          "degenerate horizon: tf - t0 = " + format_double(tf - t0) + " a.u. (< 10 a.u.)");
  require(kappa >= 0.0 && eta >= 0.0, Errc::invalid_argument, "penalties must be >= 0");
  require(epsilon > 0.0, Errc::invalid_argument, "shape-function floor must be > 0");
  require(initial_state.alpha > 0.0 && target_state.alpha > 0.0, Errc::invalid_argument,
          "boundary states must have alpha > 0");
  require(field_min < field_max, Errc::invalid_argument, "field bounds must satisfy min < max");
  for (int j = 0; j < 4; ++j) {
    require(state_lower[j] < state_upper[j], Errc::invalid_argument,
            "state bounds must satisfy lower < upper");
    require(state_scales[j] > 0.0, Errc::invalid_argument, "state scales must be > 0");
  }
  require(field_scale > 0.0, Errc::invalid_argument, "field scale must be > 0");
  require(state_lower[0] > 0.0, Errc::invalid_argument, "alpha lower bound must be > 0");
}

ControlProblem ControlProblem::paper_default(const Model& model, double tf) {
  require(model.kind == PotentialKind::quartic, Errc::invalid_argument,
          "paper_default expects the quartic model");
  ControlProblem prob;
  prob.model = model;
  const double xb = model.well.minimum_position;
  const double alpha = 0.5 * std::sqrt(model.mass * model.well.curvature_at_minimum());
  prob.initial_state = {alpha, 0.0, -xb, 0.0};
  prob.target_state = {alpha, 0.0, +xb, 0.0};
  prob.t0 = 0.0;
  prob.tf = tf;
  prob.state_lower = {1e-3, -1e3, -4.0 * xb, -1e3};
  prob.state_upper = {1e3, 1e3, 4.0 * xb, 1e3};
  prob.state_scales = {10.0, 10.0, xb, 50.0};
  prob.field_scale = std::max(std::fabs(prob.field_min), std::fabs(prob.field_max));
  return prob;
}

double running_cost(double field, double p0, double t, const ControlProblem& prob) {
  return prob.kappa * field * field / prob.shape_function(t) -
         prob.eta * p0 * p0 / (2.0 * prob.model.mass);
}

double terminal_cost(const GaussianState& s_final, const ControlProblem& prob) {
  return -gaussian_overlap(s_final, prob.target_state);
}

DecisionVector DecisionVector::zeros(int n_nodes, CollocationScheme scheme) {
  DecisionVector dv;
  dv.scheme = scheme;
  dv.n_nodes = n_nodes;
  dv.values.assign(size_for(n_nodes, scheme), 0.0);
  return dv;
}

GaussianState DecisionVector::state(int k) const {
  return {values[5 * k], values[5 * k + 1], values[5 * k + 2], values[5 * k + 3]};
}

void DecisionVector::set_state(int k, const GaussianState& s) {
  values[5 * k] = s.alpha;
  values[5 * k + 1] = s.beta;
  values[5 * k + 2] = s.x0;
  values[5 * k + 3] = s.p0;
}

std::array<double, 4> trapezoidal_defect(const GaussianState& s_k, const GaussianState& s_k1,
                                         double field_k, double field_k1, double h,
                                         const Model& model) {
  require(h > 0.0, Errc::invalid_argument, "defect requires h > 0");
  const Vec4 f_k = eom_rhs(s_k, field_k, model).to_array();
  const Vec4 f_k1 = eom_rhs(s_k1, field_k1, model).to_array();
  const Vec4 a = s_k.to_array(), b = s_k1.to_array();
  Vec4 d;
  for (int i = 0; i < 4; ++i) d[i] = b[i] - a[i] - 0.5 * h * (f_k[i] + f_k1[i]);
  return d;
}

GaussianState hermite_simpson_midpoint(const GaussianState& s_k, const GaussianState& s_k1,
                                       double field_k, double field_k1, double h,
                                       const Model& model) {
  const Vec4 f_k = eom_rhs(s_k, field_k, model).to_array();
  const Vec4 f_k1 = eom_rhs(s_k1, field_k1, model).to_array();
  const Vec4 a = s_k.to_array(), b = s_k1.to_array();
  Vec4 m;
  for (int i = 0; i < 4; ++i) m[i] = 0.5 * (a[i] + b[i]) + h / 8.0 * (f_k[i] - f_k1[i]);
  return GaussianState::from_array(m);
}

std::array<double, 4> hermite_simpson_defect(const GaussianState& s_k, const GaussianState& s_k1,
                                             double field_k, double field_mid, double field_k1,
                                             double h, const Model& model) {
  require(h > 0.0, Errc::invalid_argument, "defect requires h > 0");
  const Vec4 f_k = eom_rhs(s_k, field_k, model).to_array();
  const Vec4 f_k1 = eom_rhs(s_k1, field_k1, model).to_array();
  const GaussianState s_mid = hermite_simpson_midpoint(s_k, s_k1, field_k, field_k1, h, model);
  const Vec4 f_m = eom_rhs(s_mid, field_mid, model).to_array();
  const Vec4 a = s_k.to_array(), b = s_k1.to_array();
  Vec4 d;
  for (int i = 0; i < 4; ++i)
    d[i] = b[i] - a[i] - h / 6.0 * (f_k[i] + 4.0 * f_m[i] + f_k1[i]);
  return d;
}

struct CollocationNlp::NodeEval {
  Vec4 s{};
  double field = 0.0;
  Vec4 f{};
  Mat4 A{};
  Vec4 fE{};
  bool valid = true;
};

CollocationNlp::CollocationNlp(ControlProblem prob, Mesh mesh)
    : prob_(std::move(prob)), mesh_(mesh) {
  prob_.validate();
  mesh_.validate();
  require(mesh_.t0 == prob_.t0 && mesh_.tf == prob_.tf, Errc::invalid_argument,
          "mesh horizon must match the control problem");

  const int N = mesh_.n_nodes;
  const bool hs = mesh_.scheme == CollocationScheme::hermite_simpson;
  // Banded triplet pattern: per interval 4 defect rows touching both node
  // blocks and the interval controls, then the 4 initial pins, then the
  // zero-net-force row over every control variable.
  for (int k = 0; k < N - 1; ++k) {
    for (int i = 0; i < 4; ++i) {
      const int row = 4 * k + i;
      for (int j = 0; j < 4; ++j) {
        sparsity_.rows.push_back(row);
        sparsity_.cols.push_back(5 * k + j);
      }
      sparsity_.rows.push_back(row);
      sparsity_.cols.push_back(5 * k + 4);
      for (int j = 0; j < 4; ++j) {
        sparsity_.rows.push_back(row);
        sparsity_.cols.push_back(5 * (k + 1) + j);
      }
      sparsity_.rows.push_back(row);
      sparsity_.cols.push_back(5 * (k + 1) + 4);
      if (hs) {
        sparsity_.rows.push_back(row);
        sparsity_.cols.push_back(5 * N + k);
      }
    }
  }
  for (int i = 0; i < 4; ++i) {
    sparsity_.rows.push_back(4 * (N - 1) + i);
    sparsity_.cols.push_back(i);
  }
  const int znf_row = 4 * (N - 1) + 4;
  for (int k = 0; k < N; ++k) {
    sparsity_.rows.push_back(znf_row);
    sparsity_.cols.push_back(5 * k + 4);
  }
  if (hs)
    for (int k = 0; k < N - 1; ++k) {
      sparsity_.rows.push_back(znf_row);
      sparsity_.cols.push_back(5 * N + k);
    }
}

int CollocationNlp::num_variables() const {
  return DecisionVector::size_for(mesh_.n_nodes, mesh_.scheme);
}

int CollocationNlp::num_constraints() const { return 4 * (mesh_.n_nodes - 1) + 5; }

void CollocationNlp::variable_bounds(std::vector<double>& lower, std::vector<double>& upper) const {
  const int N = mesh_.n_nodes;
  lower.assign(num_variables(), 0.0);
  upper.assign(num_variables(), 0.0);
  for (int k = 0; k < N; ++k) {
    for (int j = 0; j < 4; ++j) {
      lower[5 * k + j] = prob_.state_lower[j] / prob_.state_scales[j];
      upper[5 * k + j] = prob_.state_upper[j] / prob_.state_scales[j];
    }
    lower[5 * k + 4] = prob_.field_min / prob_.field_scale;
    upper[5 * k + 4] = prob_.field_max / prob_.field_scale;
  }
  if (mesh_.scheme == CollocationScheme::hermite_simpson) {
    for (int k = 0; k < N - 1; ++k) {
      lower[5 * N + k] = prob_.field_min / prob_.field_scale;
      upper[5 * N + k] = prob_.field_max / prob_.field_scale;
    }
  }
  // The initial state is an equality event constraint; fixing the first node's
  // variables makes the pins hold to rounding and removes them from the search.
  const Vec4 a0 = prob_.initial_state.to_array();
  for (int j = 0; j < 4; ++j) {
    lower[j] = a0[j] / prob_.state_scales[j];
    upper[j] = lower[j];
  }
}

void CollocationNlp::constraint_bounds(std::vector<double>& lower,
                                       std::vector<double>& upper) const {
  lower.assign(num_constraints(), 0.0);
  upper.assign(num_constraints(), 0.0);
}

void CollocationNlp::evaluate_nodes(const std::vector<double>& x, bool with_jacobian,
                                    std::vector<NodeEval>& nodes,
                                    std::vector<NodeEval>& mids) const {
  const int N = mesh_.n_nodes;
  const bool hs = mesh_.scheme == CollocationScheme::hermite_simpson;
  const double h = mesh_.spacing();
  nodes.resize(N);
  for (int k = 0; k < N; ++k) {
    NodeEval& e = nodes[k];
    for (int j = 0; j < 4; ++j) e.s[j] = x[5 * k + j] * prob_.state_scales[j];
    e.field = x[5 * k + 4] * prob_.field_scale;
    e.valid = eval_eom(prob_.model, e.s, e.field, with_jacobian, e.f,
                       with_jacobian ? &e.A : nullptr, with_jacobian ? &e.fE : nullptr);
  }
  if (!hs) {
    mids.clear();
    return;
  }
  mids.resize(N - 1);
  for (int k = 0; k < N - 1; ++k) {
    NodeEval& m = mids[k];
    m.field = x[5 * N + k] * prob_.field_scale;
    if (!nodes[k].valid || !nodes[k + 1].valid) {
      m.valid = false;
      continue;
    }
    for (int j = 0; j < 4; ++j)
      m.s[j] = 0.5 * (nodes[k].s[j] + nodes[k + 1].s[j]) + h / 8.0 * (nodes[k].f[j] - nodes[k + 1].f[j]);
    m.valid = eval_eom(prob_.model, m.s, m.field, with_jacobian, m.f,
                       with_jacobian ? &m.A : nullptr, with_jacobian ? &m.fE : nullptr);
  }
}

double CollocationNlp::objective(const std::vector<double>& x) const {
  const int N = mesh_.n_nodes;
  const double h = mesh_.spacing();
  const bool hs = mesh_.scheme == CollocationScheme::hermite_simpson;

  GaussianState s_final;
  s_final.alpha = x[5 * (N - 1)] * prob_.state_scales[0];
  s_final.beta = x[5 * (N - 1) + 1] * prob_.state_scales[1];
  s_final.x0 = x[5 * (N - 1) + 2] * prob_.state_scales[2];
  s_final.p0 = x[5 * (N - 1) + 3] * prob_.state_scales[3];
  if (!(s_final.alpha > 0.0)) return kNan;
  double obj = terminal_cost(s_final, prob_);

  auto node_field = [&](int k) { return x[5 * k + 4] * prob_.field_scale; };
  auto node_p0 = [&](int k) { return x[5 * k + 3] * prob_.state_scales[3]; };

  if (!hs) {
    for (int k = 0; k < N; ++k) {
      const double w = (k == 0 || k == N - 1) ? 0.5 * h : h;
      obj += w * running_cost(node_field(k), node_p0(k), mesh_.node_time(k), prob_);
    }
    return obj;
  }

  // Simpson quadrature; the midpoint kinetic term requires the Hermite state
  // interpolant, so the EOM evaluation is only needed when eta != 0.
  std::vector<NodeEval> nodes, mids;
  if (prob_.eta != 0.0) evaluate_nodes(x, false, nodes, mids);
  for (int k = 0; k < N - 1; ++k) {
    const double r_k = running_cost(node_field(k), node_p0(k), mesh_.node_time(k), prob_);
    const double r_k1 = running_cost(node_field(k + 1), node_p0(k + 1), mesh_.node_time(k + 1), prob_);
    const double t_mid = mesh_.node_time(k) + 0.5 * h;
    const double e_mid = x[5 * N + k] * prob_.field_scale;
    double p0_mid = 0.0;
    if (prob_.eta != 0.0) {
      if (!mids[k].valid) return kNan;
      p0_mid = mids[k].s[3];
    }
    const double r_m = running_cost(e_mid, p0_mid, t_mid, prob_);
    obj += h / 6.0 * (r_k + 4.0 * r_m + r_k1);
  }
  return obj;
}

void CollocationNlp::objective_gradient(const std::vector<double>& x,
                                        std::vector<double>& grad) const {
  const int N = mesh_.n_nodes;
  const double h = mesh_.spacing();
  const bool hs = mesh_.scheme == CollocationScheme::hermite_simpson;
  const double m = prob_.model.mass;
  grad.assign(num_variables(), 0.0);

  GaussianState s_final;
  s_final.alpha = x[5 * (N - 1)] * prob_.state_scales[0];
  s_final.beta = x[5 * (N - 1) + 1] * prob_.state_scales[1];
  s_final.x0 = x[5 * (N - 1) + 2] * prob_.state_scales[2];
  s_final.p0 = x[5 * (N - 1) + 3] * prob_.state_scales[3];
  std::array<double, 4> overlap_grad;
  gaussian_overlap_grad(s_final, prob_.target_state, overlap_grad);
  for (int j = 0; j < 4; ++j)
    grad[5 * (N - 1) + j] -= overlap_grad[j] * prob_.state_scales[j];

  auto node_field = [&](int k) { return x[5 * k + 4] * prob_.field_scale; };
  auto node_p0 = [&](int k) { return x[5 * k + 3] * prob_.state_scales[3]; };

  if (!hs) {
    for (int k = 0; k < N; ++k) {
      const double w = (k == 0 || k == N - 1) ? 0.5 * h : h;
      const double st = prob_.shape_function(mesh_.node_time(k));
      grad[5 * k + 4] += w * 2.0 * prob_.kappa * node_field(k) / st * prob_.field_scale;
      grad[5 * k + 3] += w * (-prob_.eta * node_p0(k) / m) * prob_.state_scales[3];
    }
    return;
  }

  std::vector<NodeEval> nodes, mids;
  if (prob_.eta != 0.0) evaluate_nodes(x, true, nodes, mids);
  for (int k = 0; k < N - 1; ++k) {
    for (int side = 0; side < 2; ++side) {
      const int kk = k + side;
      const double st = prob_.shape_function(mesh_.node_time(kk));
      grad[5 * kk + 4] += h / 6.0 * 2.0 * prob_.kappa * node_field(kk) / st * prob_.field_scale;
      grad[5 * kk + 3] += h / 6.0 * (-prob_.eta * node_p0(kk) / m) * prob_.state_scales[3];
    }
    const double t_mid = mesh_.node_time(k) + 0.5 * h;
    const double st_mid = prob_.shape_function(t_mid);
    const double e_mid = x[5 * N + k] * prob_.field_scale;
    grad[5 * N + k] += 4.0 * h / 6.0 * 2.0 * prob_.kappa * e_mid / st_mid * prob_.field_scale;

    if (prob_.eta != 0.0 && mids[k].valid) {
      // Kinetic reward at the midpoint chains through the Hermite interpolant.
      const double dR_dp0m = -prob_.eta * mids[k].s[3] / m;
      const double w_mid = 4.0 * h / 6.0 * dR_dp0m;
      for (int j = 0; j < 4; ++j) {
        const double dsm_dsk = 0.5 * (j == 3 ? 1.0 : 0.0) + h / 8.0 * nodes[k].A[3 * 4 + j];
        const double dsm_dsk1 = 0.5 * (j == 3 ? 1.0 : 0.0) - h / 8.0 * nodes[k + 1].A[3 * 4 + j];
        grad[5 * k + j] += w_mid * dsm_dsk * prob_.state_scales[j];
        grad[5 * (k + 1) + j] += w_mid * dsm_dsk1 * prob_.state_scales[j];
      }
      grad[5 * k + 4] += w_mid * h / 8.0 * nodes[k].fE[3] * prob_.field_scale;
      grad[5 * (k + 1) + 4] += w_mid * (-h / 8.0) * nodes[k + 1].fE[3] * prob_.field_scale;
    }
  }
}

void CollocationNlp::constraints(const std::vector<double>& x, std::vector<double>& c) const {
  const int N = mesh_.n_nodes;
  const double h = mesh_.spacing();
  const bool hs = mesh_.scheme == CollocationScheme::hermite_simpson;
  c.assign(num_constraints(), 0.0);

  std::vector<NodeEval> nodes, mids;
  evaluate_nodes(x, false, nodes, mids);

  for (int k = 0; k < N - 1; ++k) {
    const NodeEval& a = nodes[k];
    const NodeEval& b = nodes[k + 1];
    if (!a.valid || !b.valid || (hs && !mids[k].valid)) {
      for (int i = 0; i < 4; ++i) c[4 * k + i] = kNan;
      continue;
    }
    for (int i = 0; i < 4; ++i) {
      double d;
      if (hs)
        d = b.s[i] - a.s[i] - h / 6.0 * (a.f[i] + 4.0 * mids[k].f[i] + b.f[i]);
      else
        d = b.s[i] - a.s[i] - 0.5 * h * (a.f[i] + b.f[i]);
      c[4 * k + i] = d / prob_.state_scales[i];
    }
  }

  const Vec4 a0 = prob_.initial_state.to_array();
  for (int i = 0; i < 4; ++i)
    c[4 * (N - 1) + i] = (nodes[0].s[i] - a0[i]) / prob_.state_scales[i];

  // Zero net force, same quadrature rule as the objective, in physical units.
  double integral = 0.0;
  if (hs) {
    for (int k = 0; k < N - 1; ++k)
      integral += h / 6.0 * (nodes[k].field + 4.0 * mids[k].field + nodes[k + 1].field);
  } else {
    for (int k = 0; k < N; ++k)
      integral += ((k == 0 || k == N - 1) ? 0.5 * h : h) * nodes[k].field;
  }
  c[4 * (N - 1) + 4] = integral;
}

const SparsityPattern& CollocationNlp::jacobian_sparsity() const { return sparsity_; }

void CollocationNlp::jacobian_values(const std::vector<double>& x, std::vector<double>& vals) const {
  const int N = mesh_.n_nodes;
  const double h = mesh_.spacing();
  const bool hs = mesh_.scheme == CollocationScheme::hermite_simpson;
  vals.assign(sparsity_.nnz(), 0.0);

  std::vector<NodeEval> nodes, mids;
  evaluate_nodes(x, true, nodes, mids);

  size_t idx = 0;
  for (int k = 0; k < N - 1; ++k) {
    const NodeEval& a = nodes[k];
    const NodeEval& b = nodes[k + 1];
    Mat4 D1{}, D2{};
    Vec4 dEk{}, dEk1{}, dEm{};
    const bool ok = a.valid && b.valid && (!hs || mids[k].valid);
    if (ok && hs) {
      const NodeEval& mm = mids[k];
      Mat4 S1{}, S2{};
      for (int i = 0; i < 16; ++i) {
        S1[i] = h / 8.0 * a.A[i];
        S2[i] = -h / 8.0 * b.A[i];
      }
      for (int i = 0; i < 4; ++i) {
        S1[i * 4 + i] += 0.5;
        S2[i * 4 + i] += 0.5;
      }
      const Mat4 AmS1 = matmul(mm.A, S1);
      const Mat4 AmS2 = matmul(mm.A, S2);
      for (int i = 0; i < 16; ++i) {
        D1[i] = -h / 6.0 * (a.A[i] + 4.0 * AmS1[i]);
        D2[i] = -h / 6.0 * (b.A[i] + 4.0 * AmS2[i]);
      }
      for (int i = 0; i < 4; ++i) {
        D1[i * 4 + i] -= 1.0;
        D2[i * 4 + i] += 1.0;
      }
      const Vec4 Am_fEk = matvec(mm.A, a.fE);
      const Vec4 Am_fEk1 = matvec(mm.A, b.fE);
      for (int i = 0; i < 4; ++i) {
        dEk[i] = -h / 6.0 * a.fE[i] - h * h / 12.0 * Am_fEk[i];
        dEk1[i] = -h / 6.0 * b.fE[i] + h * h / 12.0 * Am_fEk1[i];
        dEm[i] = -2.0 * h / 3.0 * mm.fE[i];
      }
    } else if (ok) {
      for (int i = 0; i < 16; ++i) {
        D1[i] = -0.5 * h * a.A[i];
        D2[i] = -0.5 * h * b.A[i];
      }
      for (int i = 0; i < 4; ++i) {
        D1[i * 4 + i] -= 1.0;
        D2[i * 4 + i] += 1.0;
      }
      for (int i = 0; i < 4; ++i) {
        dEk[i] = -0.5 * h * a.fE[i];
        dEk1[i] = -0.5 * h * b.fE[i];
      }
    }
    for (int i = 0; i < 4; ++i) {
      const double rs = prob_.state_scales[i];
      for (int j = 0; j < 4; ++j)
        vals[idx++] = ok ? D1[i * 4 + j] * prob_.state_scales[j] / rs : kNan;
      vals[idx++] = ok ? dEk[i] * prob_.field_scale / rs : kNan;
      for (int j = 0; j < 4; ++j)
        vals[idx++] = ok ? D2[i * 4 + j] * prob_.state_scales[j] / rs : kNan;
      vals[idx++] = ok ? dEk1[i] * prob_.field_scale / rs : kNan;
      if (hs) vals[idx++] = ok ? dEm[i] * prob_.field_scale / rs : kNan;
    }
  }

  for (int i = 0; i < 4; ++i) vals[idx++] = 1.0;  // pins: (x_j * scale - a_j)/scale

  if (hs) {
    for (int k = 0; k < N; ++k) {
      const double w = (k == 0 || k == N - 1) ? h / 6.0 : h / 3.0;
      vals[idx++] = w * prob_.field_scale;
    }
    for (int k = 0; k < N - 1; ++k) vals[idx++] = 2.0 * h / 3.0 * prob_.field_scale;
  } else {
    for (int k = 0; k < N; ++k) {
      const double w = (k == 0 || k == N - 1) ? 0.5 * h : h;
      vals[idx++] = w * prob_.field_scale;
    }
  }
}

void CollocationNlp::objective_hessian_diag(const std::vector<double>& x,
                                            std::vector<double>& diag) const {
  const int N = mesh_.n_nodes;
  const double h = mesh_.spacing();
  const bool hs = mesh_.scheme == CollocationScheme::hermite_simpson;
  const double fs2 = prob_.field_scale * prob_.field_scale;
  diag.assign(num_variables(), 0.0);

  // Running-cost curvature: 2 kappa / s(t) on controls (quadrature-weighted);
  // the eta term is concave and contributes nothing positive.
  for (int k = 0; k < N; ++k) {
    double w;
    if (hs)
      w = (k == 0 || k == N - 1) ? h / 6.0 : h / 3.0;
    else
      w = (k == 0 || k == N - 1) ? 0.5 * h : h;
    diag[5 * k + 4] += w * 2.0 * prob_.kappa / prob_.shape_function(mesh_.node_time(k)) * fs2;
  }
  if (hs)
    for (int k = 0; k < N - 1; ++k)
      diag[5 * N + k] += 2.0 * h / 3.0 * 2.0 * prob_.kappa /
                         prob_.shape_function(mesh_.node_time(k) + 0.5 * h) * fs2;

  // Terminal overlap curvature on the last node, differenced from the
  // analytic gradient (estimate only; feeds the solver's preconditioner).
  GaussianState s_final;
  s_final.alpha = x[5 * (N - 1)] * prob_.state_scales[0];
  s_final.beta = x[5 * (N - 1) + 1] * prob_.state_scales[1];
  s_final.x0 = x[5 * (N - 1) + 2] * prob_.state_scales[2];
  s_final.p0 = x[5 * (N - 1) + 3] * prob_.state_scales[3];
  if (s_final.alpha > 0.0) {
    for (int j = 0; j < 4; ++j) {
      const double step = 1e-5 * std::max(1.0, std::fabs((&s_final.alpha)[j]));
      GaussianState plus = s_final, minus = s_final;
      (&plus.alpha)[j] += step;
      (&minus.alpha)[j] -= step;
      if (!(minus.alpha > 0.0)) continue;
      std::array<double, 4> gp, gm;
      gaussian_overlap_grad(plus, prob_.target_state, gp);
      gaussian_overlap_grad(minus, prob_.target_state, gm);
      const double second = -(gp[j] - gm[j]) / (2.0 * step);
      diag[5 * (N - 1) + j] += second * prob_.state_scales[j] * prob_.state_scales[j];
    }
  }
}

std::vector<double> CollocationNlp::to_scaled(const DecisionVector& dv) const {
  require(dv.n_nodes == mesh_.n_nodes && dv.scheme == mesh_.scheme, Errc::invalid_argument,
          "decision vector does not match the mesh");
  std::vector<double> x(dv.values.size());
  const int N = mesh_.n_nodes;
  for (int k = 0; k < N; ++k) {
    for (int j = 0; j < 4; ++j) x[5 * k + j] = dv.values[5 * k + j] / prob_.state_scales[j];
    x[5 * k + 4] = dv.values[5 * k + 4] / prob_.field_scale;
  }
  for (size_t i = 5 * N; i < dv.values.size(); ++i) x[i] = dv.values[i] / prob_.field_scale;
  return x;
}

DecisionVector CollocationNlp::to_physical(const std::vector<double>& x) const {
  require(static_cast<int>(x.size()) == num_variables(), Errc::invalid_argument,
          "scaled vector has wrong length");
  DecisionVector dv = DecisionVector::zeros(mesh_.n_nodes, mesh_.scheme);
  const int N = mesh_.n_nodes;
  for (int k = 0; k < N; ++k) {
    for (int j = 0; j < 4; ++j) dv.values[5 * k + j] = x[5 * k + j] * prob_.state_scales[j];
    dv.values[5 * k + 4] = x[5 * k + 4] * prob_.field_scale;
  }
  for (size_t i = 5 * N; i < x.size(); ++i) dv.values[i] = x[i] * prob_.field_scale;
  return dv;
}

std::unique_ptr<CollocationNlp> build_nlp(const ControlProblem& prob, const Mesh& mesh) {
  return std::make_unique<CollocationNlp>(prob, mesh);
}

double epsilon_disc(const DecisionVector& solution, const ControlProblem& prob, const Mesh& mesh) {
  require(solution.n_nodes == mesh.n_nodes && solution.scheme == mesh.scheme,
          Errc::invalid_argument, "solution does not match the mesh");
  const int N = mesh.n_nodes;
  const double h = mesh.spacing();
  const bool hs = mesh.scheme == CollocationScheme::hermite_simpson;

  std::array<double, 4> comp_scale{1.0, 1.0, 1.0, 1.0};
  for (int k = 0; k < N; ++k)
    for (int j = 0; j < 4; ++j)
      comp_scale[j] = std::max(comp_scale[j], 1.0 + std::fabs(solution.state_component(k, j)));

  const int n_sub = 40;
  double worst = 0.0;
  for (int k = 0; k < N - 1; ++k) {
    // Control interpolant over the interval: linear for trapezoidal, the
    // quadratic through (E_k, E_mid, E_k1) for Hermite-Simpson.
    const double e0 = solution.field(k), e1 = solution.field(k + 1);
    const double em = hs ? solution.mid_field(k) : 0.0;
    auto control = [&](double u) {
      if (!hs) return e0 + u * (e1 - e0);
      return e0 * (1.0 - u) * (1.0 - 2.0 * u) + em * 4.0 * u * (1.0 - u) + e1 * u * (2.0 * u - 1.0);
    };

    Vec4 y = solution.state(k).to_array();
    bool broke = false;
    const double dt = h / n_sub;
    for (int step = 0; step < n_sub && !broke; ++step) {
      const double u0 = static_cast<double>(step) / n_sub;
      auto rhs = [&](const Vec4& s, double u, Vec4& f) {
        return eval_eom(prob.model, s, control(u), false, f, nullptr, nullptr);
      };
      Vec4 k1, k2, k3, k4, tmp;
      const double du = 1.0 / n_sub;
      if (!rhs(y, u0, k1)) { broke = true; break; }
      for (int j = 0; j < 4; ++j) tmp[j] = y[j] + 0.5 * dt * k1[j];
      if (!rhs(tmp, u0 + 0.5 * du, k2)) { broke = true; break; }
      for (int j = 0; j < 4; ++j) tmp[j] = y[j] + 0.5 * dt * k2[j];
      if (!rhs(tmp, u0 + 0.5 * du, k3)) { broke = true; break; }
      for (int j = 0; j < 4; ++j) tmp[j] = y[j] + dt * k3[j];
      if (!rhs(tmp, u0 + du, k4)) { broke = true; break; }
      for (int j = 0; j < 4; ++j)
        y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
      if (!(y[0] > 0.0)) broke = true;
    }
    if (broke) return std::numeric_limits<double>::infinity();
    for (int j = 0; j < 4; ++j) {
      const double err = std::fabs(y[j] - solution.state_component(k + 1, j)) / comp_scale[j];
      worst = std::max(worst, err);
    }
  }
  return worst;
}

DecisionVector initial_guess(const ControlProblem& prob, const Mesh& mesh, std::uint64_t seed,
                             double state_noise, double field_noise) {
  prob.validate();
  mesh.validate();
  const int N = mesh.n_nodes;
  DecisionVector dv = DecisionVector::zeros(N, mesh.scheme);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const Vec4 a0 = prob.initial_state.to_array();
  const Vec4 a1 = prob.target_state.to_array();
  const double field_mid = 0.5 * (prob.field_min + prob.field_max);
  const double field_half = 0.5 * (prob.field_max - prob.field_min);

  for (int k = 0; k < N; ++k) {
    const double lam = static_cast<double>(k) / (N - 1);
    for (int j = 0; j < 4; ++j) {
      double v = a0[j] + lam * (a1[j] - a0[j]) + state_noise * prob.state_scales[j] * uni(rng);
      v = std::clamp(v, prob.state_lower[j], prob.state_upper[j]);
      dv.values[5 * k + j] = v;
    }
    dv.values[5 * k + 4] =
        std::clamp(field_mid + field_noise * field_half * uni(rng), prob.field_min, prob.field_max);
  }
  for (int j = 0; j < 4; ++j) dv.values[j] = a0[j];
  if (mesh.scheme == CollocationScheme::hermite_simpson) {
    for (int k = 0; k < N - 1; ++k)
      dv.mid_field(k) = std::clamp(field_mid + field_noise * field_half * uni(rng),
                                   prob.field_min, prob.field_max);
  }
  return dv;
}

FieldSignal field_from_solution(const DecisionVector& dv, const Mesh& mesh,
                                FieldInterpolation interpolation) {
  const int N = mesh.n_nodes;
  std::vector<double> times, values;
  if (dv.scheme == CollocationScheme::hermite_simpson) {
    times.reserve(2 * N - 1);
    values.reserve(2 * N - 1);
    for (int k = 0; k < N; ++k) {
      times.push_back(mesh.node_time(k));
      values.push_back(dv.field(k));
      if (k < N - 1) {
        times.push_back(mesh.node_time(k) + 0.5 * mesh.spacing());
        values.push_back(dv.mid_field(k));
      }
    }
  } else {
    times = mesh.node_times();
    values.reserve(N);
    for (int k = 0; k < N; ++k) values.push_back(dv.field(k));
  }
  return FieldSignal(std::move(times), std::move(values), interpolation);
}

void write_solution_csv(const DecisionVector& dv, const ControlProblem& prob, const Mesh& mesh,
                        const std::string& path) {
  csv::Writer w({"node_type", "t", "alpha", "beta", "x0", "p0", "E"});
  const int N = mesh.n_nodes;
  const double h = mesh.spacing();
  for (int k = 0; k < N; ++k) {
    const GaussianState s = dv.state(k);
    w.add_row_text({"node", format_double(mesh.node_time(k)), format_double(s.alpha),
                    format_double(s.beta), format_double(s.x0), format_double(s.p0),
                    format_double(dv.field(k))});
    if (dv.scheme == CollocationScheme::hermite_simpson && k < N - 1) {
      const GaussianState sm = hermite_simpson_midpoint(s, dv.state(k + 1), dv.field(k),
                                                        dv.field(k + 1), h, prob.model);
      w.add_row_text({"mid", format_double(mesh.node_time(k) + 0.5 * h), format_double(sm.alpha),
                      format_double(sm.beta), format_double(sm.x0), format_double(sm.p0),
                      format_double(dv.mid_field(k))});
    }
  }
  w.save(path);
}

LoadedSolution load_solution_csv(const std::string& path) {
  const csv::Table t = csv::Table::load(path);
  std::vector<size_t> node_rows, mid_rows;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const std::string kind = t.cell_text(r, "node_type");
    if (kind == "node")
      node_rows.push_back(r);
    else if (kind == "mid")
      mid_rows.push_back(r);
    else
      fail(Errc::parse, path + ": unknown node_type '" + kind + "'");
  }
  require(node_rows.size() >= 3, Errc::parse, path + ": fewer than 3 solution nodes");
  const bool hs = !mid_rows.empty();
  require(!hs || mid_rows.size() == node_rows.size() - 1, Errc::parse,
          path + ": midpoint row count does not match node count");

  LoadedSolution out;
  out.n_nodes = static_cast<int>(node_rows.size());
  out.scheme = hs ? CollocationScheme::hermite_simpson : CollocationScheme::trapezoidal;
  out.decision = DecisionVector::zeros(out.n_nodes, out.scheme);
  for (size_t i = 0; i < node_rows.size(); ++i) {
    const size_t r = node_rows[i];
    out.decision.set_state(static_cast<int>(i), {t.cell(r, "alpha"), t.cell(r, "beta"),
                                                 t.cell(r, "x0"), t.cell(r, "p0")});
    out.decision.field(static_cast<int>(i)) = t.cell(r, "E");
  }
  for (size_t i = 0; i < mid_rows.size(); ++i)
    out.decision.mid_field(static_cast<int>(i)) = t.cell(mid_rows[i], "E");
  out.t0 = t.cell(node_rows.front(), "t");
  out.tf = t.cell(node_rows.back(), "t");
  return out;
}

}  // namespace gwpoct
