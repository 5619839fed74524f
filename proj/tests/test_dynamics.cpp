#include "dynamics.hpp"

#include <cmath>
#include <complex>
#include <filesystem>

#include "csv.hpp"
#include "doctest.h"
#include "error.hpp"
#include "oracles.hpp"

using namespace gwpoct;

namespace {

Model free_particle_model(double mass) {
  Model m = Model::quartic_paper();
  m.mass = mass;
  m.well.mass = mass;
  for (GaussianTerm& t : m.fit.terms) t.amplitude = 0.0;
  return m;
}

}  // namespace

TEST_CASE("field signal interpolation and range checks") {
  FieldSignal f({0.0, 1.0, 3.0}, {0.0, 2.0, -2.0});
  CHECK(f(0.5) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f(2.0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(f(3.0) == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK_THROWS_AS(f(-0.1), Error);
  CHECK_THROWS_AS(f(3.1), Error);
  CHECK_THROWS_AS(FieldSignal({1.0, 1.0}, {0.0, 0.0}), Error);

  SUBCASE("integral is the trapezoid over nodes") {
    CHECK(f.integral() == doctest::Approx(1.0 + 0.0).epsilon(1e-14));
  }

  SUBCASE("cubic interpolation passes through nodes") {
    FieldSignal c({0.0, 1.0, 2.0, 3.0}, {0.0, 1.0, 0.0, -1.0}, FieldInterpolation::cubic);
    CHECK(c(1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c(2.0) == doctest::Approx(0.0).epsilon(1e-12));
    // Smooth between nodes, values stay bounded.
    CHECK(std::fabs(c(1.5)) < 2.0);
  }
}

TEST_CASE("equations of motion: direct substitution with zero potential") {
  Model m = free_particle_model(1836.0);
  const GaussianState s{3.0, 1.0, 0.0, 2.0};
  const GaussianDeriv d = eom_rhs(s, 0.0, m);
  CHECK(d.alpha == doctest::Approx(12.0 / 1836.0).epsilon(1e-14));
  CHECK(d.beta == doctest::Approx(-16.0 / 1836.0).epsilon(1e-14));
  CHECK(d.x0 == doctest::Approx(2.0 / 1836.0).epsilon(1e-14));
  CHECK(d.p0 == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("equations of motion: stationary gaussian at a well") {
  const Model model = Model::quartic_paper();
  const double xb = model.well.minimum_position;
  const double alpha = stationary_width(model, -xb);
  const GaussianState s{alpha, 0.0, -xb, 0.0};
  const GaussianDeriv d = eom_rhs(s, 0.0, model);
  CHECK(d.alpha == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(d.x0 == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::fabs(d.beta) <= 1e-6 * 2.0 * alpha * alpha / model.mass);
}

TEST_CASE("equations of motion: symmetric state feels nothing") {
  const Model model = Model::quartic_paper();
  const GaussianState s{3.0, 0.0, 0.0, 0.0};
  const GaussianDeriv d = eom_rhs(s, 0.0, model);
  CHECK(d.x0 == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(d.p0 == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("eom jacobian matches finite differences") {
  const Model model = Model::quartic_paper();
  oracles::StateSampler sampler(21);
  for (int trial = 0; trial < 25; ++trial) {
    const GaussianState s = sampler.next();
    const double field = 0.01 * (trial - 12);
    EomJacobian jac;
    eom_rhs_jac(s, field, model, jac);
    for (int j = 0; j < 4; ++j) {
      for (int i = 0; i < 4; ++i) {
        const double fd = oracles::central_diff5(
            [&](double v) {
              GaussianState q = s;
              (&q.alpha)[j] = v;
              const GaussianDeriv r = eom_rhs(q, field, model);
              return r.to_array()[i];
            },
            (&s.alpha)[j], 1e-4 * std::max(1.0, std::fabs((&s.alpha)[j])));
        CHECK(jac.d_state[i * 4 + j] == doctest::Approx(fd).epsilon(2e-6));
      }
      const double fdE = oracles::central_diff(
          [&](double e) {
            const GaussianDeriv r = eom_rhs(s, e, model);
            return r.to_array()[j];
          },
          field, 1e-6);
      CHECK(jac.d_field[j] == doctest::Approx(fdE).epsilon(1e-8));
    }
  }
}

TEST_CASE("free gaussian spreading follows the analytic width law") {
  const double mass = 1836.0;
  const Model model = free_particle_model(mass);
  const double alpha0 = 3.0;
  const GaussianState s0{alpha0, 0.0, 0.0, 0.0};
  const double tf = mass / (2.0 * alpha0);
  const FieldSignal field = FieldSignal::constant(0.0, 0.0, tf);

  const GaussianTrajectory traj =
      propagate_gaussian(s0, field, model, 0.0, tf, default_gaussian_dt(0.0, tf));
  const GaussianState sf = traj.states.back();

  const std::complex<double> a_exact =
      oracles::free_width(std::complex<double>(alpha0, 0.0), tf, mass);
  CHECK(traj.times.back() == doctest::Approx(tf).epsilon(1e-14));
  CHECK(sf.alpha == doctest::Approx(a_exact.real()).epsilon(1e-8));
  CHECK(sf.beta == doctest::Approx(a_exact.imag()).epsilon(1e-8));
  CHECK(a_exact.real() == doctest::Approx(alpha0 / 2.0).epsilon(1e-12));
  CHECK(a_exact.imag() == doctest::Approx(-alpha0 / 2.0).epsilon(1e-12));
}

TEST_CASE("harmonic coherent state oscillates at the classical period") {
  const double mass = 1836.152673;
  const double k = 0.02;
  const Model model = Model::harmonic_well(k, 0.0, 1.0, mass);
  const double omega = std::sqrt(k / mass);
  const double alpha = 0.5 * mass * omega;
  const double displacement = 0.5;
  const GaussianState s0{alpha, 0.0, displacement, 0.0};
  const double period = 2.0 * M_PI / omega;
  const double tf = 3.0 * period;

  const GaussianTrajectory traj = propagate_gaussian(
      s0, FieldSignal::constant(0.0, 0.0, tf), model, 0.0, tf, default_gaussian_dt(0.0, tf));
  for (size_t i = 0; i < traj.times.size(); i += 500) {
    const double expected = displacement * std::cos(omega * traj.times[i]);
    CHECK(traj.states[i].x0 == doctest::Approx(expected).epsilon(1e-6));
    CHECK(traj.states[i].alpha == doctest::Approx(alpha).epsilon(1e-6));
  }
  CHECK(traj.states.back().x0 == doctest::Approx(displacement).epsilon(1e-6));
}

TEST_CASE("field-free propagation conserves the gaussian energy") {
  const Model model = Model::quartic_paper();
  const GaussianState s0{3.03, 0.0, -2.0, 0.0};
  const double tf = 1e4;
  const GaussianTrajectory traj = propagate_gaussian(
      s0, FieldSignal::constant(0.0, 0.0, tf), model, 0.0, tf, 1.0);
  const double e0 = gaussian_energy(s0, 0.0, model).total;
  double worst = 0.0;
  for (const GaussianState& s : traj.states)
    worst = std::max(worst, std::fabs(gaussian_energy(s, 0.0, model).total - e0));
  CHECK(worst / std::fabs(e0) < 1e-8);
}

TEST_CASE("time symmetry: reversed field propagation returns to the start") {
  const Model model = Model::quartic_paper();
  const double tf = 4000.0;
  std::vector<double> times, values;
  for (int i = 0; i <= 40; ++i) {
    times.push_back(tf * i / 40.0);
    values.push_back(0.008 * std::sin(2.0 * M_PI * i / 40.0) + 0.002);
  }
  const FieldSignal field(times, values);
  const GaussianState s0{3.03, 0.0, -2.0, 0.0};
  const double dt = 0.25;

  const GaussianTrajectory fwd = propagate_gaussian(s0, field, model, 0.0, tf, dt);
  GaussianState back = fwd.states.back();
  // Time reversal maps (alpha, beta, x0, p0) -> (alpha, -beta, x0, -p0).
  back.beta = -back.beta;
  back.p0 = -back.p0;
  std::vector<double> rvalues(values.rbegin(), values.rend());
  const GaussianTrajectory bwd =
      propagate_gaussian(back, FieldSignal(times, rvalues), model, 0.0, tf, dt);
  GaussianState rt = bwd.states.back();
  rt.beta = -rt.beta;
  rt.p0 = -rt.p0;
  CHECK(rt.alpha == doctest::Approx(s0.alpha).epsilon(1e-6));
  CHECK(std::fabs(rt.beta - s0.beta) < 1e-6);
  CHECK(std::fabs(rt.x0 - s0.x0) < 1e-6);
  CHECK(std::fabs(rt.p0 - s0.p0) < 1e-6);
}

TEST_CASE("rk4 shows fourth-order step convergence on the driven double well") {
  const Model model = Model::quartic_paper();
  const double tf = 2000.0;
  std::vector<double> times, values;
  for (int i = 0; i <= 20; ++i) {
    times.push_back(tf * i / 20.0);
    values.push_back(0.01 * std::sin(2.0 * M_PI * i / 20.0));
  }
  const FieldSignal field(times, values);
  const GaussianState s0{3.03, 0.0, -2.0, 0.0};

  auto endpoint = [&](double dt) {
    return propagate_gaussian(s0, field, model, 0.0, tf, dt).states.back();
  };
  const GaussianState ref = endpoint(0.125);
  auto err = [&](const GaussianState& s) {
    return std::sqrt(std::pow(s.alpha - ref.alpha, 2) + std::pow(s.beta - ref.beta, 2) +
                     std::pow(s.x0 - ref.x0, 2) + std::pow(s.p0 - ref.p0, 2));
  };
  const double e1 = err(endpoint(2.0));
  const double e2 = err(endpoint(1.0));
  const double ratio = e1 / e2;
  CHECK(ratio > 8.0);
  CHECK(ratio < 32.0);
}

TEST_CASE("gaussian energy breakdown") {
  const Model model = Model::quartic_paper();

  SUBCASE("resting gaussian kinetic energy is alpha/(2m)") {
    const GaussianState s{4.0, 0.0, -2.0, 0.0};
    CHECK(gaussian_energy(s, 0.0, model).kinetic ==
          doctest::Approx(4.0 / (2.0 * model.mass)).epsilon(1e-14));
  }

  SUBCASE("kinetic term matches quadrature for random states") {
    oracles::StateSampler sampler(9);
    for (int i = 0; i < 30; ++i) {
      const GaussianState s = sampler.next();
      const double closed = gaussian_energy(s, 0.0, model).kinetic;
      const double quad = oracles::kinetic_by_quadrature(s, model.mass);
      CHECK(closed == doctest::Approx(quad).epsilon(1e-10));
    }
  }

  SUBCASE("harmonic stationary state carries the zero-point energy") {
    const double k = 0.02, mass = 1836.152673;
    const Model harm = Model::harmonic_well(k, 0.0, 1.0, mass);
    const double omega = std::sqrt(k / mass);
    const GaussianState s{0.5 * mass * omega, 0.0, 0.0, 0.0};
    CHECK(gaussian_energy(s, 0.0, harm).total == doctest::Approx(0.5 * omega).epsilon(1e-12));
  }
}

TEST_CASE("alpha collapse aborts with a time stamp") {
  // A strong constant field on a free particle cannot break alpha, so force the
  // issue with a huge step on the quartic fit where the width dynamics stiffen.
  const Model model = Model::quartic_paper();
  const GaussianState s0{1e-2, -5.0, -2.0, 0.0};
  CHECK_THROWS_WITH_AS(
      propagate_gaussian(s0, FieldSignal::constant(0.0, 0.0, 5000.0), model, 0.0, 5000.0, 2500.0),
      doctest::Contains("alpha <= 0"), Error);
}

TEST_CASE("trajectory csv has the documented columns") {
  const Model model = Model::quartic_paper();
  const GaussianState s0{3.03, 0.0, -2.0, 0.0};
  const double tf = 50.0;
  const GaussianTrajectory traj = propagate_gaussian(
      s0, FieldSignal::constant(0.002, 0.0, tf), model, 0.0, tf, 1.0);
  const std::string path = (std::filesystem::temp_directory_path() / "gwpoct_traj.csv").string();
  write_trajectory_csv(traj, FieldSignal::constant(0.002, 0.0, tf), model, path);

  const csv::Table t = csv::Table::load(path);
  REQUIRE(t.header == std::vector<std::string>{"t", "alpha", "beta", "x0", "p0", "E", "K", "V",
                                               "Etot"});
  REQUIRE(t.rows.size() == traj.times.size());
  CHECK(t.cell(0, "t") == doctest::Approx(0.0));
  CHECK(t.cell(0, "alpha") == doctest::Approx(3.03));
  CHECK(t.cell(0, "E") == doctest::Approx(0.002));
  const double k0 = t.cell(0, "K"), v0 = t.cell(0, "V"), e0 = t.cell(0, "Etot");
  CHECK(e0 == doctest::Approx(k0 + v0).epsilon(1e-9));
  std::filesystem::remove(path);
}
