#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icx/plants.hpp"

#include <cmath>

using namespace icx;

TEST_CASE("point mass at rest stays at rest under zero action") {
  const PointMassPlant plant;
  Vector s = Vector::Zero(4);
  for (int t = 0; t < 50; ++t) {
    const auto r = plant.step(s, Vector::Zero(2), t);
    s = r.next_state;
  }
  CHECK(s.isZero(0.0));
}

TEST_CASE("point mass approaches the drag-limited terminal velocity") {
  const PointMassPlant plant;
  const auto& p = plant.params();
  Vector s = Vector::Zero(4);
  Vector u(2);
  u << 1.0, 0.0;
  for (int t = 0; t < 2000; ++t) s = plant.step(s, u, t).next_state;
  const double v_star = p.gain * u[0] / p.drag;
  CHECK(std::abs(s[2] - v_star) < 1e-9);
  CHECK(std::abs(s[3]) < 1e-12);
}

TEST_CASE("point mass reward is midpoint concave in the action") {
  const PointMassPlant plant;
  RngStream rng(41, 0);
  Vector s(4);
  s << 0.3, -0.2, 0.5, -0.1;
  for (int k = 0; k < 10000; ++k) {
    const Vector a = rng.gaussian_matrix(2, 1, 0.0, 1.0);
    const Vector b = rng.gaussian_matrix(2, 1, 0.0, 1.0);
    const double ra = plant.step(s, a, 0).reward;
    const double rb = plant.step(s, b, 0).reward;
    const double rm = plant.step(s, 0.5 * (a + b), 0).reward;
    CHECK(rm >= 0.5 * (ra + rb) - 1e-12);
  }
}

TEST_CASE("thermal zones at the outside temperature are in equilibrium") {
  const RcThermalPlant plant;
  const int z = plant.params().zones;
  const double w = 25.0;
  const Vector temps = Vector::Constant(z, w);
  const Vector next = plant.linear_temp_update(temps, w, Vector::Zero(z));
  CHECK((next - temps).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("thermal power map is midpoint convex") {
  const RcThermalPlant plant;
  RngStream rng(42, 0);
  const int z = plant.params().zones;
  for (int k = 0; k < 10000; ++k) {
    const Vector a = rng.gaussian_matrix(z, 1, 0.0, 1.0);
    const Vector b = rng.gaussian_matrix(z, 1, 0.0, 1.0);
    const double lhs = plant.power(0.5 * (a + b));
    const double rhs = 0.5 * (plant.power(a) + plant.power(b));
    CHECK(lhs <= rhs + 1e-12);
  }
}

TEST_CASE("thermal power with no linear term is symmetric in u") {
  RcThermalParams p = RcThermalParams::defaults();
  p.c3 = 0.0;
  const RcThermalPlant plant(p);
  RngStream rng(43, 0);
  for (int k = 0; k < 100; ++k) {
    const Vector u = rng.gaussian_matrix(4, 1, 0.0, 1.0);
    CHECK(plant.power(u) == doctest::Approx(plant.power(-u)).epsilon(1e-12));
  }
}

TEST_CASE("free thermal response matches the closed-form linear system") {
  const RcThermalPlant plant;
  const auto& p = plant.params();
  const int z = p.zones;

  // T_{t+1} = M T_t + diag(alpha) w_t, M = I - diag(alpha) - graph Laplacian.
  Matrix M = Matrix::Identity(z, z);
  for (int i = 0; i < z; ++i) {
    M(i, i) -= p.alpha[i];
    for (int j = 0; j < z; ++j) {
      if (j == i) continue;
      M(i, j) += p.kappa(i, j);
      M(i, i) -= p.kappa(i, j);
    }
  }

  Vector s(z + 1);
  s << 22.0, 19.5, 24.0, 20.5, outside_temperature(p, 0);
  Vector ref = s.head(z);
  for (long t = 0; t < 1008; ++t) {  // one week of 10-minute steps
    const double w = outside_temperature(p, t);
    ref = M * ref + p.alpha * w;
    s = plant.step(s, Vector::Zero(z), t).next_state;
    CHECK((s.head(z) - ref).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(s[z] == outside_temperature(p, t + 1));
  }
}

TEST_CASE("outside temperature is deterministic and bounded") {
  const auto p = RcThermalParams::defaults();
  for (long t : {0L, 17L, 1000L, 100000L}) {
    CHECK(outside_temperature(p, t) == outside_temperature(p, t));
    const double w = outside_temperature(p, t);
    CHECK(std::abs(w - p.w_mean) <= 1.5 * p.w_amp + p.w_noise);
  }
}

TEST_CASE("battery does nothing at zero action") {
  const BatteryPlant plant;
  Vector s = Vector::Constant(1, 0.5);
  const auto r = plant.step(s, Vector::Zero(1), 0);
  CHECK(r.next_state[0] == 0.5);
  CHECK(r.output[0] == 0.0);
  CHECK(r.reward == 0.0);
}

TEST_CASE("battery degradation cost is midpoint convex") {
  const BatteryPlant plant;
  RngStream rng(44, 0);
  for (int k = 0; k < 10000; ++k) {
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    const double lhs = plant.degradation_cost(0.5 * (a + b));
    const double rhs =
        0.5 * (plant.degradation_cost(a) + plant.degradation_cost(b));
    CHECK(lhs <= rhs + 1e-12);
  }
}

TEST_CASE("battery degradation gradient matches finite differences") {
  const BatteryPlant plant;
  RngStream rng(45, 0);
  for (int k = 0; k < 200; ++k) {
    const double u = rng.uniform(-1.0, 1.0);
    // Skip the kinks at 0 and +-knee where the derivative jumps.
    if (std::abs(u) < 1e-3 || std::abs(std::abs(u) - plant.params().knee) < 1e-3)
      continue;
    Vector x(1);
    x << u;
    const Vector fd = finite_difference_gradient(
        [&](const Vector& v) { return plant.degradation_cost(v[0]); }, x, 1e-6);
    CHECK(std::abs(plant.degradation_grad(u) - fd[0]) < 1e-6);
  }
}

TEST_CASE("charge then efficiency-matched discharge returns to the start") {
  const BatteryPlant plant;
  const auto& p = plant.params();
  Vector s = Vector::Constant(1, 0.5);
  s = plant.step(s, Vector::Constant(1, 1.0), 0).next_state;
  CHECK(s[0] == doctest::Approx(0.5 + p.eta_charge * p.dt).epsilon(1e-12));
  // Discharging u = -eta_c * eta_d removes exactly what charging u = 1 added.
  const double u_back = -p.eta_charge * p.eta_discharge;
  s = plant.step(s, Vector::Constant(1, u_back), 1).next_state;
  CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("battery state of charge is clipped to [0, 1]") {
  const BatteryPlant plant;
  Vector s = Vector::Constant(1, 0.99);
  CHECK(plant.step(s, Vector::Constant(1, 1.0), 0).next_state[0] == 1.0);
  s[0] = 0.01;
  CHECK(plant.step(s, Vector::Constant(1, -1.0), 0).next_state[0] == 0.0);
}

TEST_CASE("circles dataset is balanced and noise-free radii are exact") {
  const auto ds = circles_dataset(200, 1.0, 2.0, 0.0, 5);
  int inner = 0;
  for (int j = 0; j < 200; ++j) {
    const double r = ds.X.col(j).norm();
    if (ds.labels[j] == 0.0) {
      ++inner;
      CHECK(r == doctest::Approx(1.0).epsilon(1e-12));
    } else {
      CHECK(r == doctest::Approx(2.0).epsilon(1e-12));
    }
  }
  CHECK(inner == 100);
}

TEST_CASE("circles dataset is seed deterministic") {
  const auto a = circles_dataset(64, 1.0, 2.0, 0.1, 9);
  const auto b = circles_dataset(64, 1.0, 2.0, 0.1, 9);
  CHECK(a.X == b.X);
  CHECK(a.labels == b.labels);
  CHECK_THROWS_AS(circles_dataset(1, 1.0, 2.0, 0.1, 9), std::invalid_argument);
}

TEST_CASE("time-of-use price follows the peak window and wraps daily") {
  const TouProfile tou;
  CHECK(tou_price(tou, 0) == tou.off_peak);
  CHECK(tou_price(tou, tou.peak_start) == tou.peak);
  CHECK(tou_price(tou, tou.peak_end - 1) == tou.peak);
  CHECK(tou_price(tou, tou.peak_end) == tou.off_peak);
  CHECK(tou_price(tou, tou.period + tou.peak_start) == tou.peak);
  CHECK_THROWS_AS(tou_price(tou, -1), std::invalid_argument);
  for (long t = 0; t < 2 * tou.period; ++t) CHECK(tou_price(tou, t) > 0.0);
}

TEST_CASE("all plants stay finite over long random rollouts") {
  RngStream rng(46, 0);
  for (const char* name : {"point-mass", "rc-thermal", "battery"}) {
    const auto plant = make_plant(name);
    Vector s = plant->initial_state(rng);
    for (long t = 0; t < 2000; ++t) {
      Vector u(plant->action_dim());
      for (int i = 0; i < u.size(); ++i) u[i] = rng.uniform(-1.0, 1.0);
      const auto r = plant->step(s, u, t);
      REQUIRE(r.next_state.allFinite());
      REQUIRE(r.output.allFinite());
      REQUIRE(std::isfinite(r.reward));
      s = r.next_state;
    }
  }
}

TEST_CASE("make_plant maps names and rejects unknown ones") {
  CHECK(make_plant("point-mass")->name() == "point-mass");
  CHECK(make_plant("rc-thermal")->name() == "rc-thermal");
  CHECK(make_plant("battery")->name() == "battery");
  CHECK_THROWS_AS(make_plant("windmill"), std::invalid_argument);
}
