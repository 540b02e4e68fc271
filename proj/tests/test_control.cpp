#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icx/control.hpp"
#include "icx/maxaffine.hpp"

#include <cmath>

using namespace icx;

namespace {

// Hand-built ICNN computing |u|: relu(u) + relu(-u) via the expanded input.
IcnnModel abs_icnn() {
  IcnnModel m;
  m.input_dim = 1;
  Matrix W0 = Matrix::Identity(2, 2);
  m.W.push_back(W0);
  m.W.push_back(Matrix::Ones(1, 2));
  m.D.emplace_back();
  m.D.push_back(Matrix::Zero(1, 2));
  m.b.push_back(Vector::Zero(2));
  m.b.push_back(Vector::Zero(1));
  m.validate();
  return m;
}

Matrix flatten_to(const Vector& x, int rows, int cols) {
  Matrix m(rows, cols);
  int k = 0;
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = x[k++];
  return m;
}

// Finite-difference check of model.backward for random cost weights.
void check_backward(const HorizonModel& model, const Matrix& actions,
                    RngStream& rng, double tol) {
  const auto pred = model.predict(actions);
  const Matrix dY = rng.gaussian_matrix(static_cast<int>(pred.Y.rows()),
                                        model.horizon(), 0.0, 1.0);
  const Matrix dS = rng.gaussian_matrix(static_cast<int>(pred.S.rows()),
                                        model.horizon(), 0.0, 1.0);
  const Matrix grad = model.backward(actions, pred, dY, dS);

  Vector flat(actions.size());
  int k = 0;
  for (int j = 0; j < actions.cols(); ++j)
    for (int i = 0; i < actions.rows(); ++i) flat[k++] = actions(i, j);
  const Vector fd = finite_difference_gradient(
      [&](const Vector& v) {
        const auto p = model.predict(
            flatten_to(v, static_cast<int>(actions.rows()),
                       static_cast<int>(actions.cols())));
        return (dY.array() * p.Y.array()).sum() +
               (dS.array() * p.S.array()).sum();
      },
      flat, 1e-6);
  k = 0;
  for (int j = 0; j < actions.cols(); ++j)
    for (int i = 0; i < actions.rows(); ++i)
      CHECK(std::abs(grad(i, j) - fd[k++]) < tol);
}

}  // namespace

TEST_CASE("single shot finds the minimum of |u|") {
  BoxBounds box;
  box.lo = Vector::Constant(1, -2.0);
  box.hi = Vector::Constant(1, 2.0);
  SingleShotConfig cfg;
  const auto res = single_shot_minimize(abs_icnn(), box, cfg);
  CHECK(std::abs(res.argmin[0]) < 1e-4);
  CHECK(res.value < 1e-4);
}

TEST_CASE("single shot respects an active box constraint") {
  BoxBounds box;
  box.lo = Vector::Constant(1, 1.0);
  box.hi = Vector::Constant(1, 2.0);
  SingleShotConfig cfg;
  const auto res = single_shot_minimize(abs_icnn(), box, cfg);
  CHECK(res.argmin[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("single shot matches a dense grid on a compiled quadratic") {
  RngStream rng(61, 0);
  const int n = 600;
  Matrix X(1, n);
  Vector y(n);
  for (int j = 0; j < n; ++j) {
    X(0, j) = rng.uniform(-1.0, 2.0);
    y[j] = (X(0, j) - 0.7) * (X(0, j) - 0.7);
  }
  CplFitConfig fit_cfg;
  fit_cfg.seed = 61;
  const IcnnModel net = compile_to_icnn(fit_cpl(X, y, 6, fit_cfg));

  BoxBounds box;
  box.lo = Vector::Constant(1, -1.0);
  box.hi = Vector::Constant(1, 2.0);
  SingleShotConfig cfg;
  const auto res = single_shot_minimize(net, box, cfg);

  double grid_best = std::numeric_limits<double>::infinity();
  for (double u = -1.0; u <= 2.0; u += 1e-3) {
    Vector v(1);
    v << u;
    grid_best = std::min(grid_best, icnn_forward(net, v)[0]);
  }
  CHECK(res.value <= grid_best + 1e-8);
}

TEST_CASE("mpc with trivial dynamics recovers the quadratic reference") {
  LinearDynamics dyn;
  dyn.A = Matrix::Zero(1, 1);
  dyn.Bw = Matrix::Zero(1, 0);
  dyn.B = Matrix::Zero(1, 2);
  dyn.c = Vector::Zero(1);
  dyn.py_s = Vector::Zero(1);
  dyn.py_w = Vector::Zero(0);
  dyn.py_u = Vector::Zero(2);
  const int T = 4;
  const LinearHorizonModel model(dyn, Vector::Zero(1), Matrix::Zero(0, T), T);

  BoxBounds box;
  box.lo = Vector::Constant(2, -1.0);
  box.hi = Vector::Constant(2, 1.0);
  CostSpec cost;
  cost.kind = CostKind::QuadraticAction;
  cost.u_ref = Vector(2);
  cost.u_ref << 0.3, -2.0;  // second dim clips at the box edge
  MpcConfig cfg;
  const auto sol = mpc_solve(model, box, cost, {}, {}, cfg);
  for (int tau = 0; tau < T; ++tau) {
    CHECK(sol.actions(0, tau) == doctest::Approx(0.3).epsilon(1e-5));
    CHECK(sol.actions(1, tau) == doctest::Approx(-1.0).epsilon(1e-5));
  }
  CHECK_FALSE(sol.violation_flagged);
}

TEST_CASE("battery mpc beats an exhaustive action lattice") {
  BatteryParams params;
  params.base = 1.0;
  const BatteryPlant plant(params);
  const int T = 3;
  const BatteryHorizonModel model(plant, 0.85, T);

  BoxBounds box;
  box.lo = Vector::Constant(1, -1.0);
  box.hi = Vector::Constant(1, 1.0);
  CostSpec cost;
  cost.action_prices = Vector(T);
  cost.action_prices << 0.5, -0.3, 0.4;  // sell high, buy back cheap
  const Vector soc_lo = Vector::Constant(1, 0.1);
  const Vector soc_hi = Vector::Constant(1, 0.9);

  MpcConfig cfg;
  const auto sol = mpc_solve(model, box, cost, soc_lo, soc_hi, cfg);
  CHECK(sol.actions.minCoeff() >= -1.0);
  CHECK(sol.actions.maxCoeff() <= 1.0);
  CHECK_FALSE(sol.violation_flagged);

  const double weight = cfg.penalty0 * std::pow(10.0, cfg.restarts - 1);
  const double mpc_obj = horizon_objective(model, sol.actions, cost, soc_lo,
                                           soc_hi, weight, nullptr, nullptr,
                                           nullptr);
  double lattice_best = std::numeric_limits<double>::infinity();
  Matrix u(1, T);
  for (int a = -20; a <= 20; ++a)
    for (int b = -20; b <= 20; ++b)
      for (int c = -20; c <= 20; ++c) {
        u << a / 20.0, b / 20.0, c / 20.0;
        lattice_best = std::min(
            lattice_best, horizon_objective(model, u, cost, soc_lo, soc_hi,
                                            weight, nullptr, nullptr, nullptr));
      }
  CHECK(mpc_obj <= lattice_best + 1e-6);
}

TEST_CASE("predicted objective is convex along random segments") {
  RngStream rng(62, 0);
  const IcrnnModel f = make_icrnn(5, 6, 1, 2, rng);
  const IcrnnModel g = make_icrnn(5, 6, 1, 2, rng);
  const int T = 4;
  const Matrix history = rng.gaussian_matrix(5, 2, 0.0, 0.5);
  const IcrnnHorizonModel model(f, g, history, Vector::Zero(1), T);
  CostSpec cost;

  for (int k = 0; k < 100; ++k) {
    const Matrix a = rng.gaussian_matrix(2, T, 0.0, 1.0);
    const Matrix b = rng.gaussian_matrix(2, T, 0.0, 1.0);
    const double ja = horizon_objective(model, a, cost, {}, {}, 0.0, nullptr,
                                        nullptr, nullptr);
    const double jb = horizon_objective(model, b, cost, {}, {}, 0.0, nullptr,
                                        nullptr, nullptr);
    const double jm = horizon_objective(model, 0.5 * (a + b), cost, {}, {}, 0.0,
                                        nullptr, nullptr, nullptr);
    CHECK(jm <= 0.5 * (ja + jb) + 1e-8);
  }
}

TEST_CASE("random shooting is deterministic and never beats mpc") {
  BatteryParams params;
  params.base = 1.0;
  const BatteryPlant plant(params);
  const int T = 3;
  const BatteryHorizonModel model(plant, 0.5, T);
  BoxBounds box;
  box.lo = Vector::Constant(1, -1.0);
  box.hi = Vector::Constant(1, 1.0);
  CostSpec cost;
  cost.action_prices = Vector(T);
  cost.action_prices << 0.2, -0.1, 0.3;
  const Vector lo = Vector::Constant(1, 0.1);
  const Vector hi = Vector::Constant(1, 0.9);
  const double weight = 1e4;

  const auto a = random_shooting(model, box, cost, lo, hi, weight, 500, 5);
  const auto b = random_shooting(model, box, cost, lo, hi, weight, 500, 5);
  CHECK(a.actions == b.actions);
  CHECK(a.objective == b.objective);

  const auto single = random_shooting(model, box, cost, lo, hi, weight, 1, 5);
  const double check = horizon_objective(model, single.actions, cost, lo, hi,
                                         weight, nullptr, nullptr, nullptr);
  CHECK(single.objective == check);

  MpcConfig cfg;
  const auto sol = mpc_solve(model, box, cost, lo, hi, cfg);
  const double mpc_obj = horizon_objective(
      model, sol.actions, cost, lo, hi, weight, nullptr, nullptr, nullptr);
  const auto big = random_shooting(model, box, cost, lo, hi, weight, 10000, 5);
  CHECK(mpc_obj <= big.objective + 1e-9);
  CHECK(big.objective <= mpc_obj * 1.02 + 1e-6);

  CHECK_THROWS_AS(random_shooting(model, box, cost, lo, hi, weight, 0, 5),
                  std::invalid_argument);
}

TEST_CASE("warm started mpc is never worse") {
  BatteryParams params;
  params.base = 1.0;
  const BatteryPlant plant(params);
  const BatteryHorizonModel model(plant, 0.5, 4);
  BoxBounds box;
  box.lo = Vector::Constant(1, -1.0);
  box.hi = Vector::Constant(1, 1.0);
  CostSpec cost;
  cost.action_prices = Vector(4);
  cost.action_prices << 0.3, -0.2, 0.1, 0.25;

  MpcConfig cfg;
  cfg.max_iters = 200;  // deliberately under-converged
  const auto first = mpc_solve(model, box, cost, {}, {}, cfg);
  cfg.warm_start = first.actions;
  const auto second = mpc_solve(model, box, cost, {}, {}, cfg);
  CHECK(second.objective <= first.objective + 1e-9);
}

TEST_CASE("mpc rejects an empty action box") {
  BatteryParams params;
  const BatteryPlant plant(params);
  const BatteryHorizonModel model(plant, 0.5, 2);
  BoxBounds box;
  box.lo = Vector::Constant(1, 1.0);
  box.hi = Vector::Constant(1, -1.0);
  CHECK_THROWS_AS(mpc_solve(model, box, CostSpec{}, {}, {}, MpcConfig{}),
                  std::invalid_argument);
}

TEST_CASE("linear fit recovers an exactly linear system") {
  RngStream rng(63, 0);
  // s' = A s + Bw w + B u + c, y linear; two controllable dims, one exogenous.
  Matrix A(2, 2);
  A << 0.9, 0.05, -0.02, 0.85;
  Matrix Bw(2, 1);
  Bw << 0.1, 0.2;
  Matrix B(2, 2);
  B << 0.5, 0.0, 0.1, 0.4;
  Vector c(2);
  c << 0.01, -0.03;
  Vector py_s(2), py_w(1), py_u(2);
  py_s << 0.3, -0.1;
  py_w << 0.05;
  py_u << 0.7, -0.2;
  const double py0 = 0.4;

  std::vector<Rollout> rollouts(3);
  for (auto& r : rollouts) {
    const int H = 40;
    r.S.resize(3, H + 1);
    r.U = rng.gaussian_matrix(2, H, 0.0, 1.0);
    r.Y.resize(1, H);
    r.rewards = Vector::Zero(H);
    Vector s = rng.gaussian_matrix(2, 1, 0.0, 1.0);
    r.S.col(0).head(2) = s;
    r.S(2, 0) = rng.uniform(-1.0, 1.0);
    for (int t = 0; t < H; ++t) {
      const double w = r.S(2, t);
      const Vector u = r.U.col(t);
      r.Y(0, t) = py_s.dot(s) + py_w[0] * w + py_u.dot(u) + py0;
      s = A * s + Bw * w + B * u + c;
      r.S.col(t + 1).head(2) = s;
      r.S(2, t + 1) = rng.uniform(-1.0, 1.0);
    }
  }

  const auto dyn = fit_linear_dynamics(rollouts, 2);
  CHECK((dyn.A - A).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((dyn.B - B).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((dyn.Bw - Bw).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((dyn.c - c).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(dyn.py0 - py0) < 1e-8);
  CHECK(linear_output_rmse(dyn, rollouts, 2) < 1e-10);

  // The horizon model replays the same recursion.
  const int T = 10;
  Matrix exog(1, T);
  for (int tau = 0; tau < T; ++tau) exog(0, tau) = rng.uniform(-1.0, 1.0);
  Vector s0(2);
  s0 << 0.4, -0.6;
  const LinearHorizonModel model(dyn, s0, exog, T);
  const Matrix actions = rng.gaussian_matrix(2, T, 0.0, 1.0);
  const auto pred = model.predict(actions);
  Vector s = s0;
  for (int tau = 0; tau < T; ++tau) {
    const double y = py_s.dot(s) + py_w[0] * exog(0, tau) +
                     py_u.dot(actions.col(tau)) + py0;
    CHECK(std::abs(pred.Y(0, tau) - y) < 1e-7);
    s = A * s + Bw * exog.col(tau) + B * actions.col(tau) + c;
    CHECK((pred.S.col(tau) - s).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("linear fit rejects rank-deficient data") {
  std::vector<Rollout> rollouts(1);
  auto& r = rollouts[0];
  const int H = 20;
  r.S = Matrix::Constant(2, H + 1, 1.0);  // frozen state, frozen action
  r.U = Matrix::Zero(1, H);
  r.Y = Matrix::Constant(1, H, 0.5);
  r.rewards = Vector::Zero(H);
  CHECK_THROWS_AS(fit_linear_dynamics(rollouts, 1), std::runtime_error);
}

TEST_CASE("closed loop handles zero steps and clips policy actions") {
  const BatteryPlant plant;
  const Vector s0 = Vector::Constant(1, 0.5);
  const auto empty = run_closed_loop(
      plant, s0, 0, 0, [](const Vector&, long) { return Vector::Zero(1); });
  CHECK(empty.U.cols() == 0);
  CHECK(empty.S.cols() == 1);
  CHECK(empty.S.col(0) == s0);

  const auto clipped = run_closed_loop(
      plant, s0, 0, 3,
      [](const Vector&, long) { return Vector::Constant(1, 5.0); });
  CHECK((clipped.U.array() == 1.0).all());

  CHECK_THROWS_AS(run_closed_loop(plant, s0, 0, 2,
                                  [](const Vector&, long) {
                                    return Vector::Zero(2);
                                  }),
                  std::invalid_argument);
}

TEST_CASE("icrnn horizon backward matches finite differences") {
  RngStream rng(64, 0);
  // Frames [s(2 dims); u; -u], second state dim exogenous.
  const IcrnnModel f = make_icrnn(4, 5, 1, 3, rng);
  const IcrnnModel g = make_icrnn(4, 5, 2, 3, rng);
  const int T = 5;
  const Matrix history = rng.gaussian_matrix(4, 3, 0.0, 0.5);
  Vector s0(2);
  s0 << 0.2, -0.4;
  const Matrix exog = rng.gaussian_matrix(1, T, 0.0, 0.5);
  const IcrnnHorizonModel model(f, g, history, s0, T, {1}, exog);
  const Matrix actions = rng.gaussian_matrix(1, T, 0.0, 0.5);
  check_backward(model, actions, rng, 1e-4);
}

TEST_CASE("battery horizon backward matches finite differences") {
  RngStream rng(65, 0);
  BatteryParams params;
  params.base = 1.0;
  const BatteryPlant plant(params);
  const BatteryHorizonModel model(plant, 0.6, 6);
  Matrix actions(1, 6);
  // Stay away from the kinks at 0 and +-knee where the FD oracle breaks.
  actions << 0.3, -0.5, 0.6, -0.2, 0.4, -0.6;
  check_backward(model, actions, rng, 1e-4);
}

TEST_CASE("linear horizon backward matches finite differences") {
  RngStream rng(66, 0);
  LinearDynamics dyn;
  dyn.A = rng.gaussian_matrix(3, 3, 0.0, 0.3);
  dyn.Bw = rng.gaussian_matrix(3, 1, 0.0, 0.3);
  dyn.B = rng.gaussian_matrix(3, 2, 0.0, 0.5);
  dyn.c = rng.gaussian_matrix(3, 1, 0.0, 0.1);
  dyn.py_s = rng.gaussian_matrix(3, 1, 0.0, 1.0);
  dyn.py_w = rng.gaussian_matrix(1, 1, 0.0, 1.0);
  dyn.py_u = rng.gaussian_matrix(2, 1, 0.0, 1.0);
  dyn.py0 = 0.3;
  const int T = 7;
  const LinearHorizonModel model(dyn, rng.gaussian_matrix(3, 1, 0.0, 1.0),
                                 rng.gaussian_matrix(1, T, 0.0, 1.0), T);
  check_backward(model, rng.gaussian_matrix(2, T, 0.0, 1.0), rng, 1e-5);
}
