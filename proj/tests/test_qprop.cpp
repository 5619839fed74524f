#include "qprop.hpp"

#include <cmath>
#include <complex>
#include <filesystem>

#include "csv.hpp"
#include "doctest.h"
#include "error.hpp"
#include "oracles.hpp"

using namespace gwpoct;

namespace {

const SpatialGrid kGrid{-10.0, 10.0, 1024};

Model harmonic_model() { return Model::harmonic_well(0.02, 0.0, 1.0, 1836.152673); }

}  // namespace

TEST_CASE("gaussian initialization on the grid") {
  const GaussianState s{3.0, 0.0, -2.0, 0.0};
  const WaveFunction psi = init_gaussian_on_grid(s, kGrid);
  CHECK(psi.norm_sq() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(psi.position_mean() == doctest::Approx(-2.0).epsilon(1e-8));
  CHECK(psi.position_variance() == doctest::Approx(1.0 / (4.0 * 3.0)).epsilon(1e-6));

  SUBCASE("momentum boost shows up in the spectral expectation") {
    const WaveFunction boosted = init_gaussian_on_grid({3.0, 0.0, -2.0, 5.0}, kGrid);
    CHECK(boosted.momentum_mean() == doctest::Approx(5.0).epsilon(1e-6));
  }

  SUBCASE("support check names the violated edge") {
    CHECK_THROWS_WITH_AS(init_gaussian_on_grid({0.05, 0.0, -9.0, 0.0}, kGrid),
                         doctest::Contains("lower grid edge"), Error);
    CHECK_THROWS_WITH_AS(init_gaussian_on_grid({0.05, 0.0, 9.0, 0.0}, kGrid),
                         doctest::Contains("upper grid edge"), Error);
  }

  SUBCASE("grid must be a power of two") {
    CHECK_THROWS_AS(init_gaussian_on_grid(s, SpatialGrid{-10.0, 10.0, 1000}), Error);
  }
}

TEST_CASE("stationary eigenstate keeps unit autocorrelation") {
  const Model model = Model::quartic_paper();
  const SpatialGrid grid{-12.0, 12.0, 512};
  const WaveFunction ground = bound_state_wavefunction(model, grid, 0);

  TdseOptions opt;
  opt.dt = 0.5;
  opt.observables_stride = 4000;
  const double tf = 1e4;
  const TdseResult res =
      propagate_tdse(ground, FieldSignal::constant(0.0, 0.0, tf), model, 0.0, tf, opt);
  CHECK(ground.overlap_abs(res.psi_final) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("harmonic coherent state follows the classical cosine") {
  const Model model = harmonic_model();
  const double omega = std::sqrt(0.02 / model.mass);
  const double alpha = 0.5 * model.mass * omega;
  const double period = 2.0 * M_PI / omega;
  const WaveFunction psi0 = init_gaussian_on_grid({alpha, 0.0, 0.7, 0.0}, kGrid);

  TdseOptions opt;
  opt.dt = 0.25;
  opt.observables_stride = 50;
  const TdseResult res =
      propagate_tdse(psi0, FieldSignal::constant(0.0, 0.0, period), model, 0.0, period, opt);
  for (const QuantumObservables& o : res.series) {
    CHECK(o.x_mean == doctest::Approx(0.7 * std::cos(omega * o.t)).epsilon(1e-6));
    // Coherent state: the variance stays at the ground-state value.
    CHECK(o.x_var == doctest::Approx(1.0 / (4.0 * alpha)).epsilon(1e-6));
  }
}

TEST_CASE("unitarity and entry guards") {
  const Model model = Model::quartic_paper();
  const WaveFunction psi0 = init_gaussian_on_grid({3.03, 0.0, -2.0, 0.0}, kGrid);

  SUBCASE("norm preserved to 1e-10 over 1e4 steps") {
    TdseOptions opt;
    opt.dt = 0.5;
    opt.observables_stride = 2000;
    const double tf = 5000.0;  // 1e4 steps at dt = 0.5
    const TdseResult res =
        propagate_tdse(psi0, FieldSignal::constant(0.003, 0.0, tf), model, 0.0, tf, opt);
    for (const QuantumObservables& o : res.series) CHECK(std::fabs(o.norm - 1.0) < 1e-10);
  }

  SUBCASE("unnormalized input is rejected") {
    WaveFunction bad = psi0;
    for (auto& a : bad.amplitudes) a *= 1.1;
    CHECK_THROWS_AS(
        propagate_tdse(bad, FieldSignal::constant(0.0, 0.0, 10.0), model, 0.0, 10.0, {}), Error);
  }
}

TEST_CASE("split-operator is second order in the timestep") {
  const Model model = Model::quartic_paper();
  const WaveFunction psi0 = init_gaussian_on_grid({3.03, 0.0, -2.0, 2.0}, kGrid);
  const double tf = 200.0;
  const FieldSignal field = FieldSignal::constant(0.004, 0.0, tf);

  auto final_state = [&](double dt) {
    TdseOptions opt;
    opt.dt = dt;
    opt.observables_stride = 1 << 30;
    return propagate_tdse(psi0, field, model, 0.0, tf, opt).psi_final;
  };
  const WaveFunction ref = final_state(0.125);
  auto err = [&](const WaveFunction& a) {
    double acc = 0.0;
    for (size_t i = 0; i < a.amplitudes.size(); ++i)
      acc += std::norm(a.amplitudes[i] - ref.amplitudes[i]);
    return std::sqrt(acc * a.grid.dx());
  };
  const double e1 = err(final_state(2.0));
  const double e2 = err(final_state(1.0));
  CHECK(e1 / e2 > 2.0);
  CHECK(e1 / e2 < 8.0);
}

TEST_CASE("observables are grid-independent once converged") {
  const Model model = Model::quartic_paper();
  const double tf = 400.0;
  const FieldSignal field = FieldSignal::constant(0.004, 0.0, tf);
  TdseOptions opt;
  opt.dt = 0.25;
  opt.observables_stride = 1 << 30;

  auto last = [&](int n_points) {
    const SpatialGrid grid{-12.0, 12.0, n_points};
    const WaveFunction psi0 = init_gaussian_on_grid({3.03, 0.0, -2.0, 0.0}, grid);
    return propagate_tdse(psi0, field, model, 0.0, tf, opt).series.back();
  };
  const QuantumObservables a = last(512);
  const QuantumObservables b = last(1024);
  CHECK(a.x_mean == doctest::Approx(b.x_mean).epsilon(1e-6));
  CHECK(a.x_var == doctest::Approx(b.x_var).epsilon(1e-6));
  CHECK(a.p_mean - b.p_mean == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(a.total == doctest::Approx(b.total).epsilon(1e-6));
}

TEST_CASE("ehrenfest: d<p>/dt equals the mean force") {
  const Model model = Model::quartic_paper();
  const WaveFunction psi0 = init_gaussian_on_grid({3.03, 0.0, -2.0, 0.0}, kGrid);
  const double tf = 400.0;
  // Linear ramp: smooth inside the horizon so the series can be differenced
  // at full stencil accuracy.
  const FieldSignal field({0.0, tf}, {0.0, 0.004});

  TdseOptions opt;
  opt.dt = 0.25;
  opt.observables_stride = 2;  // 0.5 a.u. between records
  const TdseResult res = propagate_tdse(psi0, field, model, 0.0, tf, opt);
  const auto& s = res.series;
  double fmax = 0.0;
  for (const auto& o : s) fmax = std::max(fmax, std::fabs(o.mean_force));
  for (size_t i = 2; i + 2 < s.size(); i += 7) {
    const double dpdt =
        (-s[i + 2].p_mean + 8.0 * s[i + 1].p_mean - 8.0 * s[i - 1].p_mean + s[i - 2].p_mean) /
        (12.0 * (s[i + 1].t - s[i].t));
    CHECK(std::fabs(dpdt - s[i].mean_force) < 1e-4 * fmax);
  }
}

TEST_CASE("bound states") {
  SUBCASE("harmonic level spacing equals omega") {
    const Model model = harmonic_model();
    const double omega = std::sqrt(0.02 / model.mass);
    const auto states = bound_states(model, SpatialGrid{-8.0, 8.0, 512}, 8.0 * omega);
    REQUIRE(states.size() >= 6);
    for (int i = 0; i < 5; ++i) {
      const double gap = states[i + 1].energy - states[i].energy;
      CHECK(gap == doctest::Approx(omega).epsilon(1e-4));
    }
    CHECK(states[0].parity == +1);
    CHECK(states[1].parity == -1);
  }

  SUBCASE("double well: 8 sub-barrier states at 1 m_H, 16 at 5 m_H") {
    const SpatialGrid grid{-12.0, 12.0, 512};
    const Model m1 = Model::quartic_paper();
    CHECK(bound_states(m1, grid).size() == 8);
    Model m5 = Model::quartic_paper();
    m5.mass = 5.0 * 1836.152673;
    m5.well.mass = m5.mass;
    CHECK(bound_states(m5, grid).size() == 16);
  }

  SUBCASE("parity alternates within the ladder") {
    const SpatialGrid grid{-12.0, 12.0, 512};
    const auto states = bound_states(Model::quartic_paper(), grid);
    // Near-degenerate tunneling doublets: even below odd within each pair.
    for (size_t i = 0; i + 1 < states.size(); i += 2) {
      CHECK(states[i].parity == +1);
      CHECK(states[i + 1].parity == -1);
    }
  }
}

TEST_CASE("err metric arithmetic") {
  const SpatialGrid grid{-10.0, 10.0, 256};
  const double xb = 2.0;

  const WaveFunction at_target = init_gaussian_on_grid({3.0, 0.0, 2.0, 0.0}, grid);
  CHECK(err_metric(at_target, 2.0, xb) == doctest::Approx(0.0).epsilon(1e-7));

  const WaveFunction at_barrier = init_gaussian_on_grid({3.0, 0.0, 0.0, 0.0}, grid);
  CHECK(err_metric(at_barrier, xb, xb) == doctest::Approx(1.0).epsilon(1e-7));

  const WaveFunction never_left = init_gaussian_on_grid({3.0, 0.0, -2.0, 0.0}, grid);
  CHECK(err_metric(never_left, xb, xb) == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("reduce_to_gaussian") {
  SUBCASE("round trips the constructor") {
    oracles::StateSampler sampler(3);
    for (int i = 0; i < 15; ++i) {
      GaussianState s = sampler.next();
      s.x0 *= 0.5;  // stay well inside the grid
      const WaveFunction psi = init_gaussian_on_grid(s, kGrid);
      const GaussianState r = reduce_to_gaussian(psi);
      CHECK(r.alpha == doctest::Approx(s.alpha).epsilon(1e-6));
      CHECK(std::fabs(r.beta - s.beta) < 1e-6 * std::max(1.0, std::fabs(s.beta)));
      CHECK(std::fabs(r.x0 - s.x0) < 1e-6);
      CHECK(std::fabs(r.p0 - s.p0) < 1e-6);
    }
  }

  SUBCASE("free spreading matches the analytic width law") {
    Model free = Model::quartic_paper();
    for (GaussianTerm& t : free.fit.terms) t.amplitude = 0.0;
    free.charge = 0.0;
    const double alpha0 = 3.0, mass = free.mass;
    const WaveFunction psi0 = init_gaussian_on_grid({alpha0, 0.0, 0.0, 0.0}, kGrid);
    const double tf = mass / (2.0 * alpha0);
    TdseOptions opt;
    opt.dt = 0.5;
    opt.observables_stride = 1 << 30;
    opt.use_fitted_potential = true;  // zeroed fit = exact free particle
    const TdseResult res =
        propagate_tdse(psi0, FieldSignal::constant(0.0, 0.0, tf), free, 0.0, tf, opt);
    const GaussianState r = reduce_to_gaussian(res.psi_final);
    const std::complex<double> a_exact =
        oracles::free_width(std::complex<double>(alpha0, 0.0), tf, mass);
    CHECK(r.alpha == doctest::Approx(a_exact.real()).epsilon(1e-6));
    CHECK(r.beta == doctest::Approx(a_exact.imag()).epsilon(1e-6));
  }

  SUBCASE("symmetric double peak reduces to zero center") {
    WaveFunction psi;
    psi.grid = kGrid;
    psi.amplitudes.resize(kGrid.n_points);
    for (int i = 0; i < kGrid.n_points; ++i) {
      const double x = kGrid.x(i);
      psi.amplitudes[i] = std::exp(-3.0 * (x - 2.0) * (x - 2.0)) +
                          std::exp(-3.0 * (x + 2.0) * (x + 2.0));
    }
    psi.normalize();
    CHECK(reduce_to_gaussian(psi).x0 == doctest::Approx(0.0).epsilon(1e-10));
  }
}

TEST_CASE("wavefunction snapshot round trip") {
  const WaveFunction psi = init_gaussian_on_grid({3.0, 1.0, -2.0, 4.0}, kGrid);
  const std::string path = (std::filesystem::temp_directory_path() / "gwpoct_wf.bin").string();
  psi.save(path);
  const WaveFunction back = WaveFunction::load(path);
  CHECK(back.grid.n_points == psi.grid.n_points);
  CHECK(back.grid.x_min == psi.grid.x_min);
  REQUIRE(back.amplitudes.size() == psi.amplitudes.size());
  double diff = 0.0;
  for (size_t i = 0; i < psi.amplitudes.size(); ++i)
    diff = std::max(diff, std::abs(psi.amplitudes[i] - back.amplitudes[i]));
  CHECK(diff == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("observable csv columns") {
  const Model model = Model::quartic_paper();
  const WaveFunction psi0 = init_gaussian_on_grid({3.03, 0.0, -2.0, 0.0}, kGrid);
  TdseOptions opt;
  opt.dt = 0.5;
  opt.observables_stride = 20;
  const TdseResult res =
      propagate_tdse(psi0, FieldSignal::constant(0.0, 0.0, 50.0), model, 0.0, 50.0, opt);
  const std::string path = (std::filesystem::temp_directory_path() / "gwpoct_obs.csv").string();
  write_observables_csv(res.series, path);
  const csv::Table t = csv::Table::load(path);
  CHECK(t.header ==
        std::vector<std::string>{"t", "x_mean", "x_var", "p_mean", "norm", "K", "V", "E"});
  CHECK(t.rows.size() == res.series.size());
  std::filesystem::remove(path);
}
