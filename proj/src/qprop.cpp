#include "qprop.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>

#include "config.hpp"
#include "csv.hpp"
#include "error.hpp"

namespace gwpoct {

namespace {

std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

/// Per-instance FFTW plans; plan creation is serialized (FFTW planning is not
/// thread-safe), execution on private buffers is.
class FftEngine {
 public:
  explicit FftEngine(int n) : n_(n) {
    buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fwd_ = fftw_plan_dft_1d(n, buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_1d(n, buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~FftEngine() {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(buf_);
  }
  FftEngine(const FftEngine&) = delete;
  FftEngine& operator=(const FftEngine&) = delete;

  // std::complex<double> is layout-compatible with fftw_complex.
  void forward(std::complex<double>* data) {
    std::memcpy(static_cast<void*>(buf_), static_cast<const void*>(data),
                sizeof(fftw_complex) * n_);
    fftw_execute(fwd_);
    std::memcpy(static_cast<void*>(data), static_cast<const void*>(buf_),
                sizeof(fftw_complex) * n_);
  }
  // Unnormalized inverse; callers apply the 1/n.
  void inverse(std::complex<double>* data) {
    std::memcpy(static_cast<void*>(buf_), static_cast<const void*>(data),
                sizeof(fftw_complex) * n_);
    fftw_execute(inv_);
    std::memcpy(static_cast<void*>(data), static_cast<const void*>(buf_),
                sizeof(fftw_complex) * n_);
  }

 private:
  int n_;
  fftw_complex* buf_;
  fftw_plan fwd_, inv_;
};

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

std::vector<double> SpatialGrid::momenta() const {
  std::vector<double> k(n_points);
  const double dk = 2.0 * M_PI / (n_points * dx());
  for (int j = 0; j < n_points; ++j) k[j] = dk * (j < n_points / 2 ? j : j - n_points);
  return k;
}

void SpatialGrid::validate() const {
  require(x_max > x_min, Errc::invalid_argument, "grid needs x_max > x_min");
  require(n_points >= 64 && is_power_of_two(n_points), Errc::invalid_argument,
          "grid size must be a power of two >= 64");
}

SpatialGrid SpatialGrid::default_for(const QuarticDoubleWell& well) {
  return SpatialGrid{-6.0 * well.minimum_position, 6.0 * well.minimum_position, 1024};
}

double WaveFunction::norm_sq() const {
  double s = 0.0;
  for (const auto& a : amplitudes) s += std::norm(a);
  return s * grid.dx();
}

void WaveFunction::normalize() {
  const double n = std::sqrt(norm_sq());
  require(n > 0.0, Errc::domain, "cannot normalize a zero wavefunction");
  for (auto& a : amplitudes) a /= n;
}

double WaveFunction::position_mean() const {
  double s = 0.0;
  for (int i = 0; i < grid.n_points; ++i) s += std::norm(amplitudes[i]) * grid.x(i);
  return s * grid.dx();
}

double WaveFunction::position_variance() const {
  const double mean = position_mean();
  double s = 0.0;
  for (int i = 0; i < grid.n_points; ++i) {
    const double d = grid.x(i) - mean;
    s += std::norm(amplitudes[i]) * d * d;
  }
  return s * grid.dx();
}

double WaveFunction::momentum_mean() const {
  const int n = grid.n_points;
  std::vector<std::complex<double>> spec(amplitudes);
  FftEngine fft(n);
  fft.forward(spec.data());
  const std::vector<double> k = grid.momenta();
  double num = 0.0, den = 0.0;
  for (int j = 0; j < n; ++j) {
    const double w = std::norm(spec[j]);
    num += w * k[j];
    den += w;
  }
  return num / den;
}

double WaveFunction::kinetic_energy(double mass) const {
  const int n = grid.n_points;
  std::vector<std::complex<double>> spec(amplitudes);
  FftEngine fft(n);
  fft.forward(spec.data());
  const std::vector<double> k = grid.momenta();
  double num = 0.0, den = 0.0;
  for (int j = 0; j < n; ++j) {
    const double w = std::norm(spec[j]);
    num += w * k[j] * k[j] / (2.0 * mass);
    den += w;
  }
  return num / den;
}

double WaveFunction::potential_energy(const Model& model, double field,
                                      bool use_fitted_potential) const {
  double s = 0.0, den = 0.0;
  for (int i = 0; i < grid.n_points; ++i) {
    const double x = grid.x(i);
    const double v =
        (use_fitted_potential ? model.model_potential(x) : model.potential(x)) -
        model.charge * x * field;
    const double w = std::norm(amplitudes[i]);
    s += w * v;
    den += w;
  }
  return s / den;
}

double WaveFunction::overlap_abs(const WaveFunction& other) const {
  require(grid.n_points == other.grid.n_points, Errc::invalid_argument,
          "overlap requires matching grids");
  std::complex<double> s = 0.0;
  for (int i = 0; i < grid.n_points; ++i) s += std::conj(amplitudes[i]) * other.amplitudes[i];
  return std::abs(s) * grid.dx();
}

void WaveFunction::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, "cannot write '" + path + "'");
  const char magic[8] = {'G', 'W', 'P', 'W', 'F', '0', '1', '\0'};
  out.write(magic, 8);
  const std::int64_t n = grid.n_points;
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&grid.x_min), sizeof grid.x_min);
  out.write(reinterpret_cast<const char*>(&grid.x_max), sizeof grid.x_max);
  out.write(reinterpret_cast<const char*>(amplitudes.data()),
            static_cast<std::streamsize>(sizeof(std::complex<double>) * amplitudes.size()));
  require(out.good(), Errc::io, "write failed for '" + path + "'");
}

WaveFunction WaveFunction::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open '" + path + "'");
  char magic[8] = {};
  in.read(magic, 8);
  require(std::memcmp(magic, "GWPWF01", 7) == 0, Errc::parse,
          path + ": not a wavefunction snapshot");
  std::int64_t n = 0;
  WaveFunction wf;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&wf.grid.x_min), sizeof wf.grid.x_min);
  in.read(reinterpret_cast<char*>(&wf.grid.x_max), sizeof wf.grid.x_max);
  wf.grid.n_points = static_cast<int>(n);
  wf.grid.validate();
  wf.amplitudes.resize(wf.grid.n_points);
  in.read(reinterpret_cast<char*>(wf.amplitudes.data()),
          static_cast<std::streamsize>(sizeof(std::complex<double>) * wf.amplitudes.size()));
  require(in.good(), Errc::parse, path + ": truncated wavefunction snapshot");
  return wf;
}

WaveFunction init_gaussian_on_grid(const GaussianState& s, const SpatialGrid& grid) {
  grid.validate();
  require(s.alpha > 0.0, Errc::domain, "gaussian requires alpha > 0");
  const double margin = 5.0 / std::sqrt(2.0 * s.alpha);
  require(s.x0 - grid.x_min >= margin, Errc::domain,
          "gaussian support reaches the lower grid edge at x = " + format_double(grid.x_min));
  require(grid.x_max - s.x0 >= margin, Errc::domain,
          "gaussian support reaches the upper grid edge at x = " + format_double(grid.x_max));

  WaveFunction wf;
  wf.grid = grid;
  wf.amplitudes.resize(grid.n_points);
  const std::complex<double> width(-s.alpha, -s.beta);
  for (int i = 0; i < grid.n_points; ++i) {
    const double d = grid.x(i) - s.x0;
    wf.amplitudes[i] = std::exp(width * d * d + std::complex<double>(0.0, s.p0 * d));
  }
  wf.normalize();
  return wf;
}

TdseResult propagate_tdse(const WaveFunction& psi0, const FieldSignal& field, const Model& model,
                          double t0, double tf, const TdseOptions& options) {
  require(options.dt > 0.0, Errc::invalid_argument, "propagate_tdse requires dt > 0");
  require(tf > t0, Errc::invalid_argument, "propagate_tdse requires tf > t0");
  const SpatialGrid& grid = psi0.grid;
  grid.validate();
  const int n = grid.n_points;

  TdseResult result;
  result.psi_final = psi0;
  WaveFunction& psi = result.psi_final;
  require(std::fabs(psi.norm_sq() - 1.0) < 1e-8, Errc::domain,
          "propagate_tdse expects a normalized wavefunction");

  std::vector<double> v0(n);
  for (int i = 0; i < n; ++i)
    v0[i] = options.use_fitted_potential ? model.model_potential(grid.x(i))
                                         : model.potential(grid.x(i));
  const std::vector<double> k = grid.momenta();

  FftEngine fft(n);
  std::vector<std::complex<double>> kinetic_phase(n);
  double cached_dt = -1.0;
  auto refresh_kinetic = [&](double dt) {
    if (dt == cached_dt) return;
    for (int j = 0; j < n; ++j) {
      const double phase = -k[j] * k[j] / (2.0 * model.mass) * dt;
      kinetic_phase[j] = std::complex<double>(std::cos(phase), std::sin(phase)) / double(n);
    }
    cached_dt = dt;
  };

  auto record = [&](double t) {
    QuantumObservables obs;
    obs.t = t;
    obs.x_mean = psi.position_mean();
    obs.x_var = psi.position_variance();
    obs.p_mean = psi.momentum_mean();
    obs.norm = std::sqrt(psi.norm_sq());
    obs.kinetic = psi.kinetic_energy(model.mass);
    obs.potential = psi.potential_energy(model, field(t), options.use_fitted_potential);
    obs.total = obs.kinetic + obs.potential;
    double fsum = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
      const double w = std::norm(psi.amplitudes[i]);
      const double dv = options.use_fitted_potential
                            ? model.model_potential_derivative(grid.x(i))
                            : model.potential_derivative(grid.x(i));
      fsum += w * dv;
      den += w;
    }
    obs.mean_force = -fsum / den + model.charge * field(t);
    result.series.push_back(obs);
  };

  record(t0);
  double t = t0;
  long step_count = 0;
  const double eps = 1e-12 * (tf - t0);
  while (t < tf - eps) {
    const double dt = std::min(options.dt, tf - t);
    refresh_kinetic(dt);
    const double e_mid = field(t + 0.5 * dt);

    for (int i = 0; i < n; ++i) {
      const double phase = -(v0[i] - model.charge * grid.x(i) * e_mid) * 0.5 * dt;
      psi.amplitudes[i] *= std::complex<double>(std::cos(phase), std::sin(phase));
    }
    fft.forward(psi.amplitudes.data());
    for (int j = 0; j < n; ++j) psi.amplitudes[j] *= kinetic_phase[j];
    fft.inverse(psi.amplitudes.data());
    for (int i = 0; i < n; ++i) {
      const double phase = -(v0[i] - model.charge * grid.x(i) * e_mid) * 0.5 * dt;
      psi.amplitudes[i] *= std::complex<double>(std::cos(phase), std::sin(phase));
    }

    t += dt;
    ++step_count;
    const double drift = std::fabs(std::sqrt(psi.norm_sq()) - 1.0);
    require(drift <= options.norm_drift_abort, Errc::domain,
            "norm drift " + format_double(drift) + " at t = " + format_double(t) +
                " exceeds the abort threshold (grid or timestep inadequate)");
    if (step_count % options.observables_stride == 0 || !(t < tf - eps)) record(t);
  }
  return result;
}

namespace {

/// Fourier-grid Hamiltonian: T depends only on (i - j) mod n; one inverse
/// transform of k^2/(2m) yields the full Toeplitz kinetic block.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> fgh_eigensolve(const Model& model,
                                                              const SpatialGrid& grid) {
  grid.validate();
  const int n = grid.n_points;
  const std::vector<double> k = grid.momenta();
  std::vector<std::complex<double>> tkernel(n);
  for (int j = 0; j < n; ++j) tkernel[j] = k[j] * k[j] / (2.0 * model.mass);
  FftEngine fft(n);
  fft.inverse(tkernel.data());
  for (auto& c : tkernel) c /= double(n);

  Eigen::MatrixXd H(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) H(i, j) = tkernel[(i - j + n) % n].real();
  for (int i = 0; i < n; ++i) H(i, i) += model.potential(grid.x(i));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
  require(eig.info() == Eigen::Success, Errc::solver, "eigensolver failed");
  return eig;
}

}  // namespace

std::vector<BoundState> bound_states(const Model& model, const SpatialGrid& grid,
                                     double energy_cutoff) {
  const auto eig = fgh_eigensolve(model, grid);
  const int n = grid.n_points;
  const bool symmetric_grid = std::fabs(grid.x_min + grid.x_max) < 0.5 * grid.dx();
  std::vector<BoundState> out;
  for (int s = 0; s < n; ++s) {
    const double e = eig.eigenvalues()(s);
    if (e >= energy_cutoff) break;
    BoundState bs;
    bs.energy = e;
    if (symmetric_grid) {
      double mirror = 0.0, straight = 0.0;
      for (int i = 0; i < n; ++i) {
        const double a = eig.eigenvectors()(i, s);
        const double b = eig.eigenvectors()((n - i) % n, s);
        mirror += a * b;
        straight += a * a;
      }
      bs.parity = mirror / straight > 0.0 ? +1 : -1;
    }
    out.push_back(bs);
  }
  return out;
}

WaveFunction bound_state_wavefunction(const Model& model, const SpatialGrid& grid, int index) {
  require(index >= 0 && index < grid.n_points, Errc::invalid_argument,
          "eigenstate index out of range");
  const auto eig = fgh_eigensolve(model, grid);
  WaveFunction wf;
  wf.grid = grid;
  wf.amplitudes.resize(grid.n_points);
  for (int i = 0; i < grid.n_points; ++i) wf.amplitudes[i] = eig.eigenvectors()(i, index);
  wf.normalize();
  return wf;
}

std::vector<BoundState> bound_states(const Model& model, const SpatialGrid& grid) {
  require(model.kind == PotentialKind::quartic, Errc::invalid_argument,
          "default bound-state cutoff needs the quartic barrier; pass a cutoff explicitly");
  return bound_states(model, grid, model.well.barrier_height);
}

double err_metric(const WaveFunction& psi_final, double x0_target, double x_b) {
  require(x_b > 0.0, Errc::invalid_argument, "err metric requires x_B > 0");
  return std::fabs(x0_target - psi_final.position_mean()) / x_b;
}

GaussianState reduce_to_gaussian(const WaveFunction& psi) {
  const int n = psi.grid.n_points;
  const double x0 = psi.position_mean();
  const double var = psi.position_variance();
  const double p0 = psi.momentum_mean();

  // Symmetrized covariance Re <(x - x0)(p - p0)> via one spectral derivative.
  std::vector<std::complex<double>> dpsi(psi.amplitudes);
  FftEngine fft(n);
  fft.forward(dpsi.data());
  const std::vector<double> k = psi.grid.momenta();
  for (int j = 0; j < n; ++j) dpsi[j] *= k[j] / double(n);
  fft.inverse(dpsi.data());

  double cov = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = psi.grid.x(i) - x0;
    const std::complex<double> pterm = dpsi[i] - p0 * psi.amplitudes[i];
    cov += dx * std::real(std::conj(psi.amplitudes[i]) * pterm);
    den += std::norm(psi.amplitudes[i]);
  }
  cov /= den;

  GaussianState s;
  s.x0 = x0;
  s.p0 = p0;
  s.alpha = 1.0 / (4.0 * var);
  s.beta = -2.0 * s.alpha * cov;
  return s;
}

void write_observables_csv(const std::vector<QuantumObservables>& series,
                           const std::string& path) {
  csv::Writer w({"t", "x_mean", "x_var", "p_mean", "norm", "K", "V", "E"});
  for (const QuantumObservables& o : series)
    w.add_row({o.t, o.x_mean, o.x_var, o.p_mean, o.norm, o.kinetic, o.potential, o.total});
  w.save(path);
}

void write_bound_states_csv(const std::vector<BoundState>& states, const std::string& path) {
  csv::Writer w({"index", "energy", "parity"});
  for (size_t i = 0; i < states.size(); ++i)
    w.add_row({static_cast<double>(i), states[i].energy, static_cast<double>(states[i].parity)});
  w.save(path);
}

}  // namespace gwpoct
