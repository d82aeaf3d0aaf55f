#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dmc/gaussian.hpp"
#include "oracles.hpp"

using namespace dmc;

namespace {

double total(const DensityMap& m) {
  double s = 0.0;
  for (float v : m.values()) s += v;
  return s;
}

}  // namespace

TEST_CASE("gaussian density") {
  const Point o{0.0, 0.0, 0.0};
  CHECK(gaussian_density(o, o, KernelSpec::isotropic(2, 1.0)) ==
        doctest::Approx(0.1591549430918953).epsilon(1e-14));
  CHECK(gaussian_density(o, o, KernelSpec::isotropic(2, 2.0)) ==
        doctest::Approx(0.0397887357729738).epsilon(1e-14));
  const double full[] = {4.0, 1.0, 1.0, 3.0};
  const KernelSpec k(2, full);
  // A point at Mahalanobis distance 1 along the first Cholesky column.
  const auto l = k.cholesky();
  const Point x{l[0], l[3], 0.0};
  CHECK(k.mahalanobis_squared(x, o) == doctest::Approx(1.0));
  CHECK(gaussian_density(x, o, k) ==
        doctest::Approx(k.peak_density() * std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("render unit mass") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  CHECK(total(render_density_map({2, {}}, k, {16, 16})) == 0.0);

  const DensityMap one = render_density_map({2, {{32.0, 32.0, 0.0}}}, k, {64, 64});
  CHECK(total(one) >= 0.999);
  CHECK(total(one) <= 1.001);
  CHECK(one.at({0, 32, 32}) == doctest::Approx(k.peak_density()).epsilon(1e-6));

  const DensityMap two =
      render_density_map({2, {{12.0, 32.0, 0.0}, {52.0, 32.0, 0.0}}}, k, {64, 64});
  CHECK(total(two) >= 1.998);
  CHECK(total(two) <= 2.002);

  const double sd[] = {2.0, 2.0, 1.0};
  const KernelSpec k3 = KernelSpec::diagonal(sd);
  const DensityMap v = render_density_map({3, {{16.3, 15.8, 8.4}}}, k3, {17, 32, 32});
  CHECK(total(v) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("render handles points outside the grid and weights") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  // Half the kernel lies inside.
  const DensityMap edge = render_density_map({2, {{-0.5, 16.0, 0.0}}}, k, {32, 32});
  CHECK(total(edge) == doctest::Approx(0.5).epsilon(2e-3));
  const DensityMap far = render_density_map({2, {{-100.0, 16.0, 0.0}}}, k, {32, 32});
  CHECK(total(far) == 0.0);

  const PointSet p{2, {{10.0, 10.0, 0.0}, {20.0, 20.0, 0.0}}};
  const double w[] = {2.0, 0.5};
  CHECK(total(render_density_map(p, w, k, {32, 32})) == doctest::Approx(2.5).epsilon(1e-3));
  const double bad[] = {1.0};
  CHECK_THROWS(render_density_map(p, bad, k, {32, 32}));
  CHECK_THROWS(render_density_map(p, k, {4, 4, 4}));
}

TEST_CASE("render is deterministic") {
  const KernelSpec k = KernelSpec::isotropic(2, 1.7);
  PointSet p{2, {}};
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0.0, 40.0);
  for (int i = 0; i < 30; ++i) p.points.push_back({u(g), u(g), 0.0});
  CHECK(render_density_map(p, k, {40, 40}) == render_density_map(p, k, {40, 40}));
}

TEST_CASE("mahalanobis radius for threshold") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  const double peak = k.peak_density();
  CHECK(mahalanobis_radius_for_threshold(0.999 * peak, k) ==
        doctest::Approx(0.04473254594997994).epsilon(1e-9));
  CHECK(mahalanobis_radius_for_threshold(0.5 * peak, k) ==
        doctest::Approx(std::sqrt(2.0 * std::log(2.0))).epsilon(1e-12));
  CHECK(mahalanobis_radius_for_threshold(peak * std::exp(-2.0), k) ==
        doctest::Approx(2.0).epsilon(1e-12));

  const double sd[] = {1.5, 3.0, 0.7};
  const KernelSpec k3 = KernelSpec::diagonal(sd);
  for (double f : {1e-4, 0.01, 0.3, 0.9}) {
    const double t = f * k3.peak_density();
    CHECK(mahalanobis_radius_for_threshold(t, k3) ==
          doctest::Approx(oracle::bisect_radius(t, k3.peak_density())).epsilon(1e-9));
  }
  double prev = 1e9;
  for (double f = 0.01; f < 1.0; f += 0.01) {
    const double r = mahalanobis_radius_for_threshold(f * peak, k);
    CHECK(r < prev);
    prev = r;
  }

  CHECK_THROWS_WITH(mahalanobis_radius_for_threshold(peak, k), "threshold above kernel peak");
  CHECK_THROWS_WITH(mahalanobis_radius_for_threshold(2.0 * peak, k),
                    "threshold above kernel peak");
  CHECK_THROWS(mahalanobis_radius_for_threshold(0.0, k));
  CHECK_THROWS(mahalanobis_radius_for_threshold(-1.0, k));
}

TEST_CASE("mass within radius") {
  const double half = std::sqrt(2.0 * std::log(2.0));
  CHECK(mass_within_radius(half, 2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mass_within_radius(half, 3) == doctest::Approx(0.2912494692006624).epsilon(1e-12));
  CHECK(mass_within_radius(2.0, 2) == doctest::Approx(0.8646647167633873).epsilon(1e-12));
  CHECK(mass_within_radius(1.0, 3) == doctest::Approx(0.1987480430987992).epsilon(1e-12));
  CHECK(mass_within_radius(4.0, 3) == doctest::Approx(0.9988660157102147).epsilon(1e-12));
  for (int d : {2, 3}) {
    CHECK(mass_within_radius(0.0, d) == 0.0);
    CHECK(std::abs(mass_within_radius(50.0, d) - 1.0) <= 1e-12);
  }
  CHECK_THROWS(mass_within_radius(1.0, 4));
  CHECK_THROWS(mass_within_radius(-1.0, 2));

  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(0.0, 6.0);
  for (int i = 0; i < 20; ++i) {
    const double r = u(g);
    for (int d : {2, 3}) CHECK(std::abs(mass_within_radius(r, d) - oracle::radial_mass(r, d)) <= 1e-6);
  }
  for (int d : {2, 3}) {
    double prev = 0.0;
    for (double r = 0.05; r < 8.0; r += 0.05) {
      const double m = mass_within_radius(r, d);
      CHECK(m > prev);
      prev = m;
    }
  }
}

TEST_CASE("ball volume") {
  const KernelSpec k = KernelSpec::isotropic(2, 2.0);
  CHECK(mahalanobis_ball_volume(1.0, k) == doctest::Approx(std::numbers::pi * 4.0));
  const double sd[] = {2.0, 2.0, 1.0};
  CHECK(mahalanobis_ball_volume(2.0, KernelSpec::diagonal(sd)) ==
        doctest::Approx(4.0 / 3.0 * std::numbers::pi * 8.0 * 4.0));
}

// Rendered mass above T against the analytic mass fraction. Cells straddling
// the T contour are counted whole, so the lattice sum drifts from the
// continuous integral as T grows: within 1e-3 only up to about 1e-3 * peak.
TEST_CASE("rendered superlevel mass against the mass function") {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> off(-0.5, 0.5);
  for (double sigma : {1.5, 2.0, 3.0, 4.0}) {
    const KernelSpec k = KernelSpec::isotropic(2, sigma);
    for (int trial = 0; trial < 5; ++trial) {
      const Point c{32.0 + off(g), 32.0 + off(g), 0.0};
      const DensityMap m = render_density_map({2, {c}}, k, {64, 64});
      for (double f : {1e-4, 3e-4, 1e-3, 0.01, 0.1, 0.3}) {
        const double t = f * k.peak_density();
        const double want = mass_within_radius(mahalanobis_radius_for_threshold(t, k), 2);
        const double err = std::abs(oracle::mass_above(m, t) - want);
        if (f <= 1e-3)
          CHECK(err <= 1e-3);
        else
          CHECK(err <= 0.03);
      }
    }
  }
}
