#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "config.hpp"
#include "error.hpp"

namespace gwpoct {

double GaussianSumPotential::eval(double x) const { return gaussian_sum_eval(*this, x); }

double GaussianSumPotential::max_deviation(const QuarticDoubleWell& reference, double lo, double hi,
                                           int samples) const {
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double x = lo + (hi - lo) * i / (samples - 1);
    worst = std::max(worst, std::fabs(eval(x) - reference.eval(x)));
  }
  return worst;
}

double gaussian_sum_eval(const GaussianSumPotential& fit, double x) {
  double v = 0.0;
  for (const GaussianTerm& t : fit.terms) {
    const double d = x - t.center;
    v += t.amplitude * std::exp(-t.exponent * d * d);
  }
  return v;
}

GaussianSumPotential paper_gaussian_fit(const QuarticDoubleWell& pot) {
  // Published 5-term coefficients in units of V_B, x_B^-2 and x_B.
  static constexpr double g[5] = {31.000, -1.529, -1.529, 31.000, 1.348};
  static constexpr double b[5] = {1.397, 1.658, 1.658, 1.397, 0.0};
  static constexpr double c[5] = {-2.981, -1.142, 1.142, 2.981, 0.0};
  const double vb = pot.barrier_height;
  const double xb = pot.minimum_position;
  GaussianSumPotential fit;
  fit.terms.reserve(5);
  for (int p = 0; p < 5; ++p) fit.terms.push_back({g[p] * vb, b[p] / (xb * xb), c[p] * xb});
  return fit;
}

MeanPotentialDerivs mean_potential_derivs(const GaussianSumPotential& fit, double alpha,
                                          double x0) {
  require(alpha > 0.0, Errc::domain, "mean potential requires alpha > 0");
  MeanPotentialDerivs out;
  for (const GaussianTerm& t : fit.terms) {
    const double b = t.exponent;
    const double d = x0 - t.center;
    const double den = 2.0 * alpha + b;
    const double w = 2.0 * alpha / den;        // (2a)/(2a+b)
    const double c = 2.0 * alpha * b / den;    // effective exponent of the convolved Gaussian
    const double B = c * d * d;
    const double S = std::exp(-B) * std::sqrt(w);

    const double cp = 2.0 * b * b / (den * den);    // dc/da
    const double wp = 2.0 * b / (den * den);        // dw/da
    const double cpp = -8.0 * b * b / (den * den * den);
    const double wpp = -8.0 * b / (den * den * den);

    const double Ba = cp * d * d;
    const double Bx = 2.0 * c * d;
    const double la = -Ba + wp / (2.0 * w);  // d ln S / d alpha
    const double Sa = S * la;
    const double Sx = -S * Bx;
    const double Saa = Sa * la + S * (-cpp * d * d + (wpp * w - wp * wp) / (2.0 * w * w));
    const double Sax = Sx * la + S * (-2.0 * cp * d);
    const double Sxx = -Sx * Bx + S * (-2.0 * c);

    out.value += t.amplitude * S;
    out.d_alpha += t.amplitude * Sa;
    out.d_x0 += t.amplitude * Sx;
    out.d2_alpha2 += t.amplitude * Saa;
    out.d2_alpha_x0 += t.amplitude * Sax;
    out.d2_x02 += t.amplitude * Sxx;
  }
  return out;
}

double mean_potential(const GaussianSumPotential& fit, const GaussianState& s, double field,
                      double charge) {
  require(s.alpha > 0.0, Errc::domain, "mean potential requires alpha > 0");
  double u = 0.0;
  for (const GaussianTerm& t : fit.terms) {
    const double d = s.x0 - t.center;
    const double den = 2.0 * s.alpha + t.exponent;
    const double B = 2.0 * s.alpha * t.exponent / den * d * d;
    u += t.amplitude * std::exp(-B) * std::sqrt(2.0 * s.alpha / den);
  }
  return u - charge * s.x0 * field;
}

double mean_potential_d_alpha(const GaussianSumPotential& fit, const GaussianState& s) {
  require(s.alpha > 0.0, Errc::domain, "mean potential requires alpha > 0");
  const double a = s.alpha;
  double ua = 0.0;
  for (const GaussianTerm& t : fit.terms) {
    const double b = t.exponent;
    const double d = s.x0 - t.center;
    const double den = 2.0 * a + b;
    const double B = 2.0 * a * b / den * d * d;
    const double D = t.amplitude * b * std::exp(-B) * std::pow(2.0 * a / den, 1.5);
    ua += D * (1.0 / (4.0 * a * a) - b / (a * den) * d * d);
  }
  return ua;
}

double mean_potential_d_x0(const GaussianSumPotential& fit, const GaussianState& s, double field,
                           double charge) {
  require(s.alpha > 0.0, Errc::domain, "mean potential requires alpha > 0");
  const double a = s.alpha;
  double ux = 0.0;
  for (const GaussianTerm& t : fit.terms) {
    const double b = t.exponent;
    const double d = s.x0 - t.center;
    const double den = 2.0 * a + b;
    const double B = 2.0 * a * b / den * d * d;
    const double D = t.amplitude * b * std::exp(-B) * std::pow(2.0 * a / den, 1.5);
    ux += -2.0 * D * d;
  }
  return ux - charge * field;
}

double Model::potential(double x) const {
  return kind == PotentialKind::quartic ? well.eval(x) : harmonic.eval(x);
}

double Model::potential_derivative(double x) const {
  if (kind == PotentialKind::quartic) return well.derivative(x);
  return harmonic.force_constant * (x - harmonic.center);
}

double Model::model_potential(double x) const {
  return kind == PotentialKind::quartic ? fit.eval(x) : harmonic.eval(x);
}

double Model::model_potential_derivative(double x) const {
  if (kind == PotentialKind::harmonic) return harmonic.force_constant * (x - harmonic.center);
  double d = 0.0;
  for (const GaussianTerm& t : fit.terms) {
    const double dx = x - t.center;
    d += t.amplitude * (-2.0 * t.exponent * dx) * std::exp(-t.exponent * dx * dx);
  }
  return d;
}

MeanPotentialDerivs Model::mean_derivs(double alpha, double x0) const {
  if (kind == PotentialKind::quartic) return mean_potential_derivs(fit, alpha, x0);
  require(alpha > 0.0, Errc::domain, "mean potential requires alpha > 0");
  // <k/2 (x - c)^2> = k/2 ((x0 - c)^2 + 1/(4 alpha)), exact for the Gaussian.
  const double k = harmonic.force_constant;
  const double d = x0 - harmonic.center;
  MeanPotentialDerivs out;
  out.value = 0.5 * k * (d * d + 1.0 / (4.0 * alpha));
  out.d_alpha = -k / (8.0 * alpha * alpha);
  out.d_x0 = k * d;
  out.d2_alpha2 = k / (4.0 * alpha * alpha * alpha);
  out.d2_alpha_x0 = 0.0;
  out.d2_x02 = k;
  return out;
}

Model Model::quartic_paper(double barrier_height, double minimum_position, double charge,
                           double mass) {
  Model m;
  m.kind = PotentialKind::quartic;
  m.well = {barrier_height, minimum_position, charge, mass};
  m.fit = paper_gaussian_fit(m.well);
  m.mass = mass;
  m.charge = charge;
  return m;
}

Model Model::harmonic_well(double force_constant, double center, double charge, double mass) {
  Model m;
  m.kind = PotentialKind::harmonic;
  m.harmonic = {force_constant, center};
  m.mass = mass;
  m.charge = charge;
  return m;
}

double gaussian_overlap(const GaussianState& a, const GaussianState& b) {
  std::array<double, 4> unused;
  return gaussian_overlap_grad(a, b, unused);
}

double gaussian_overlap_grad(const GaussianState& s1, const GaussianState& s2,
                             std::array<double, 4>& grad_a) {
  require(s1.alpha > 0.0 && s2.alpha > 0.0, Errc::domain, "overlap requires alpha > 0");
  const double a1 = s1.alpha, b1 = s1.beta, x1 = s1.x0, p1 = s1.p0;
  const double a2 = s2.alpha, b2 = s2.beta, x2 = s2.x0, p2 = s2.p0;

  // |<1|2>|^2 = 2 sqrt(a1 a2)/sqrt(u^2+v^2) * exp(G) from the Gaussian integral
  // of the ansatz, with u + iv = conj(A1) + A2 and b_r + i b_i the linear term.
  const double u = a1 + a2;
  const double v = b2 - b1;
  const double br = 2.0 * (a1 * x1 + a2 * x2);
  const double bi = -2.0 * b1 * x1 + 2.0 * b2 * x2 + p2 - p1;
  const double den = u * u + v * v;
  const double Q = (br * br - bi * bi) * u + 2.0 * br * bi * v;
  const double G = -2.0 * a1 * x1 * x1 - 2.0 * a2 * x2 * x2 + Q / (2.0 * den);
  const double value = 2.0 * std::sqrt(a1 * a2) / std::sqrt(den) * std::exp(G);

  struct Partial {
    double br, bi, u, v, g_direct, lnp;
  };
  const Partial partials[4] = {
      {2.0 * x1, 0.0, 1.0, 0.0, -2.0 * x1 * x1, 1.0 / (2.0 * a1) - u / den},  // d/d alpha1
      {0.0, -2.0 * x1, 0.0, -1.0, 0.0, v / den},                              // d/d beta1
      {2.0 * a1, -2.0 * b1, 0.0, 0.0, -4.0 * a1 * x1, 0.0},                   // d/d x1
      {0.0, -1.0, 0.0, 0.0, 0.0, 0.0},                                        // d/d p1
  };
  for (int i = 0; i < 4; ++i) {
    const Partial& p = partials[i];
    const double Qp = (2.0 * br * p.br - 2.0 * bi * p.bi) * u + (br * br - bi * bi) * p.u +
                      2.0 * (p.br * bi + br * p.bi) * v + 2.0 * br * bi * p.v;
    const double denp = 2.0 * u * p.u + 2.0 * v * p.v;
    const double Gp = p.g_direct + (Qp * den - Q * denp) / (2.0 * den * den);
    grad_a[i] = value * (p.lnp + Gp);
  }
  return value;
}

double stationary_width(const Model& model, double x0) {
  // beta_dot = -2 alpha^2/m - 4 alpha^2 U_a vanishes when U_a(alpha) = -1/(2m).
  // U_a + 1/(2m) can change sign twice; the physical (stable) width is the
  // largest root, so the bracket is scanned downward from large alpha.
  const double target = -1.0 / (2.0 * model.mass);
  auto g = [&](double alpha) { return model.mean_derivs(alpha, x0).d_alpha - target; };

  const int n_scan = 240;
  double hi = 1e3, lo = 0.0, ghi = g(hi), glo = 0.0;
  bool bracketed = false;
  for (int i = 1; i <= n_scan; ++i) {
    const double a = std::pow(10.0, 3.0 - 6.0 * i / n_scan);  // 1e3 down to 1e-3
    const double ga = g(a);
    if (ga * ghi <= 0.0) {
      lo = a;
      glo = ga;
      bracketed = true;
      break;
    }
    hi = a;
    ghi = ga;
  }
  require(bracketed, Errc::domain, "stationary width: no sign change on [1e-3, 1e3]");

  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if (gm == 0.0) return mid;
    if (glo * gm <= 0.0) {
      hi = mid;
      ghi = gm;
    } else {
      lo = mid;
      glo = gm;
    }
  }
  return 0.5 * (lo + hi);
}

namespace {

// Solve the small symmetric positive (semi)definite system M x = r in place.
bool solve_spd(std::vector<double>& M, std::vector<double>& r, int n) {
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int i = k + 1; i < n; ++i)
      if (std::fabs(M[i * n + k]) > std::fabs(M[piv * n + k])) piv = i;
    if (std::fabs(M[piv * n + k]) < 1e-300) return false;
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(M[k * n + j], M[piv * n + j]);
      std::swap(r[k], r[piv]);
    }
    for (int i = k + 1; i < n; ++i) {
      const double f = M[i * n + k] / M[k * n + k];
      for (int j = k; j < n; ++j) M[i * n + j] -= f * M[k * n + j];
      r[i] -= f * r[k];
    }
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = r[i];
    for (int j = i + 1; j < n; ++j) s -= M[i * n + j] * r[j];
    r[i] = s / M[i * n + i];
  }
  return true;
}

// Symmetric basis: n_pairs mirrored Gaussian pairs plus an optional centered term.
struct SymmetricBasis {
  int n_pairs = 0;
  bool center = false;
  int n_nonlinear() const { return 2 * n_pairs + (center ? 1 : 0); }
  int n_columns() const { return n_pairs + (center ? 1 : 0); }

  // theta holds (log b_j, x_j) per pair then log b_c; columns evaluated at x.
  void eval_columns(const std::vector<double>& theta, double x, double* cols) const {
    for (int j = 0; j < n_pairs; ++j) {
      const double b = std::exp(theta[2 * j]);
      const double c = theta[2 * j + 1];
      const double dm = x - c, dp = x + c;
      cols[j] = std::exp(-b * dm * dm) + std::exp(-b * dp * dp);
    }
    if (center) {
      const double b = std::exp(theta[2 * n_pairs]);
      cols[n_pairs] = std::exp(-b * x * x);
    }
  }
};

// Residual rms of the variable-projection fit; best linear amplitudes returned.
double projected_rms(const SymmetricBasis& basis, const std::vector<double>& theta,
                     const std::vector<double>& xs, const std::vector<double>& vs,
                     std::vector<double>& amps) {
  const int nc = basis.n_columns();
  std::vector<double> M(nc * nc, 0.0), r(nc, 0.0), cols(nc);
  for (size_t i = 0; i < xs.size(); ++i) {
    basis.eval_columns(theta, xs[i], cols.data());
    for (int a = 0; a < nc; ++a) {
      r[a] += cols[a] * vs[i];
      for (int b = 0; b < nc; ++b) M[a * nc + b] += cols[a] * cols[b];
    }
  }
  for (int a = 0; a < nc; ++a) M[a * nc + a] *= 1.0 + 1e-12;
  amps = r;
  if (!solve_spd(M, amps, nc)) {
    amps.assign(nc, 0.0);
    return 1e300;
  }
  double ss = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    basis.eval_columns(theta, xs[i], cols.data());
    double f = 0.0;
    for (int a = 0; a < nc; ++a) f += amps[a] * cols[a];
    const double res = f - vs[i];
    ss += res * res;
  }
  return std::sqrt(ss / xs.size());
}

// Plain Nelder-Mead; deterministic, adequate for <= ~9 nonlinear parameters.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x0, double step, int max_iter) {
  const int n = static_cast<int>(x0.size());
  std::vector<std::vector<double>> pts(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 0; i < n; ++i) pts[i + 1][i] += step;
  for (int i = 0; i <= n; ++i) fv[i] = f(pts[i]);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<int> idx(n + 1);
    for (int i = 0; i <= n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    std::vector<std::vector<double>> sp(n + 1);
    std::vector<double> sf(n + 1);
    for (int i = 0; i <= n; ++i) {
      sp[i] = pts[idx[i]];
      sf[i] = fv[idx[i]];
    }
    pts = sp;
    fv = sf;
    if (std::fabs(fv[n] - fv[0]) < 1e-14 * (1.0 + std::fabs(fv[0]))) break;
    std::vector<double> centroid(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) centroid[j] += pts[i][j] / n;
    auto blend = [&](double t) {
      std::vector<double> p(n);
      for (int j = 0; j < n; ++j) p[j] = centroid[j] + t * (pts[n][j] - centroid[j]);
      return p;
    };
    const std::vector<double> xr = blend(-1.0);
    const double fr = f(xr);
    if (fr < fv[0]) {
      const std::vector<double> xe = blend(-2.0);
      const double fe = f(xe);
      if (fe < fr) {
        pts[n] = xe;
        fv[n] = fe;
      } else {
        pts[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      pts[n] = xr;
      fv[n] = fr;
    } else {
      const std::vector<double> xc = blend(fr < fv[n] ? -0.5 : 0.5);
      const double fc = f(xc);
      if (fc < std::min(fr, fv[n])) {
        pts[n] = xc;
        fv[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          for (int j = 0; j < n; ++j) pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
          fv[i] = f(pts[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  return pts[best];
}

}  // namespace

GaussianSumPotential fit_gaussian_sum(const QuarticDoubleWell& pot, double domain_lo,
                                      double domain_hi, int n_terms, double residual_threshold) {
  require(n_terms >= 1, Errc::invalid_argument, "fit needs at least one term");
  require(domain_lo <= -pot.minimum_position && domain_hi >= pot.minimum_position,
          Errc::invalid_argument, "fit domain must contain [-x_B, x_B]");

  const double xb = pot.minimum_position;
  const double vb = pot.barrier_height;
  const double default_edge = default_fit_domain(pot);
  if (n_terms == 5 && domain_lo == -default_edge && domain_hi == default_edge)
    return paper_gaussian_fit(pot);

  const int n_samples = 1001;
  std::vector<double> xs(n_samples), vs(n_samples);
  double vmax = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    xs[i] = domain_lo + (domain_hi - domain_lo) * i / (n_samples - 1);
    vs[i] = pot.eval(xs[i]);
    vmax = std::max(vmax, std::fabs(vs[i]));
  }

  SymmetricBasis basis;
  basis.n_pairs = n_terms / 2;
  basis.center = (n_terms % 2) == 1;

  std::vector<double> theta(basis.n_nonlinear());
  for (int j = 0; j < basis.n_pairs; ++j) {
    theta[2 * j] = std::log(1.5 / (xb * xb));
    theta[2 * j + 1] = xb * (1.0 + 1.8 * j / std::max(1, basis.n_pairs - 1) *
                                       (basis.n_pairs > 1 ? 1.0 : 0.0));
  }
  if (basis.n_pairs == 1) theta[1] = 1.5 * xb;
  if (basis.center) theta[2 * basis.n_pairs] = std::log(0.02 / (xb * xb));

  std::vector<double> amps;
  auto objective = [&](const std::vector<double>& th) {
    std::vector<double> a;
    return projected_rms(basis, th, xs, vs, a);
  };
  theta = nelder_mead(objective, theta, 0.3, 2500 * basis.n_nonlinear());
  const double rms = projected_rms(basis, theta, xs, vs, amps);

  require(rms <= residual_threshold * vmax, Errc::domain,
          "gaussian-sum fit residual " + format_double(rms) + " exceeds threshold " +
              format_double(residual_threshold * vmax) + " (rms, " + std::to_string(n_terms) +
              " terms on [" + format_double(domain_lo) + ", " + format_double(domain_hi) + "])");

  GaussianSumPotential fit;
  for (int j = 0; j < basis.n_pairs; ++j) {
    const double b = std::exp(theta[2 * j]);
    const double c = std::fabs(theta[2 * j + 1]);
    fit.terms.push_back({amps[j], b, -c});
    fit.terms.push_back({amps[j], b, +c});
  }
  if (basis.center) fit.terms.push_back({amps[basis.n_pairs], std::exp(theta[2 * basis.n_pairs]), 0.0});
  (void)vb;
  return fit;
}

void save_model(const Model& model, const std::string& path) {
  KeyValues kv;
  kv.set("potential", model.kind == PotentialKind::quartic ? "quartic" : "harmonic");
  kv.set_double("mass", model.mass);
  kv.set_double("charge", model.charge);
  if (model.kind == PotentialKind::quartic) {
    kv.set_double("barrier_height", model.well.barrier_height);
    kv.set_double("minimum_position", model.well.minimum_position);
    std::vector<double> g, b, c;
    for (const GaussianTerm& t : model.fit.terms) {
      g.push_back(t.amplitude);
      b.push_back(t.exponent);
      c.push_back(t.center);
    }
    kv.set_list("fit_amplitudes", g);
    kv.set_list("fit_exponents", b);
    kv.set_list("fit_centers", c);
  } else {
    kv.set_double("force_constant", model.harmonic.force_constant);
    kv.set_double("well_center", model.harmonic.center);
  }
  kv.save(path);
}

Model load_model(const std::string& path) {
  const KeyValues kv = KeyValues::load(path);
  const std::string kind = kv.get_string("potential");
  const double mass = kv.get_double("mass");
  const double charge = kv.get_double("charge");
  if (kind == "harmonic")
    return Model::harmonic_well(kv.get_double("force_constant"), kv.get_double("well_center", 0.0),
                                charge, mass);
  require(kind == "quartic", Errc::parse, "unknown potential kind '" + kind + "'");
  Model m = Model::quartic_paper(kv.get_double("barrier_height"), kv.get_double("minimum_position"),
                                 charge, mass);
  if (kv.has("fit_amplitudes")) {
    const std::vector<double> g = kv.get_list("fit_amplitudes");
    const std::vector<double> b = kv.get_list("fit_exponents");
    const std::vector<double> c = kv.get_list("fit_centers");
    require(g.size() == b.size() && g.size() == c.size(), Errc::parse,
            "fit coefficient lists must have equal length");
    m.fit.terms.clear();
    for (size_t i = 0; i < g.size(); ++i) {
      require(b[i] >= 0.0, Errc::parse, "fit exponents must be >= 0");
      m.fit.terms.push_back({g[i], b[i], c[i]});
    }
  }
  return m;
}

}  // namespace gwpoct
