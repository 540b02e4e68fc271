#include "icx/control.hpp"

#include "icx/adam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace icx {

void CostSpec::validate(int horizon) const {
  if (kind == CostKind::PriceWeighted) {
    if (prices.size() < horizon)
      throw std::invalid_argument("CostSpec: price signal shorter than horizon");
    if (prices.minCoeff() < 0.0)
      throw std::invalid_argument("CostSpec: negative price");
  }
  if (action_prices.size() > 0 && action_prices.size() < horizon)
    throw std::invalid_argument("CostSpec: action price signal shorter than horizon");
  if (reward_c < 0.0) throw std::invalid_argument("CostSpec: reward_c < 0");
  if (reward_alpha <= 0.0) throw std::invalid_argument("CostSpec: reward_alpha <= 0");
}

double CostSpec::eval(const Vector& y, const Vector& u, int tau) const {
  double j = 0.0;
  switch (kind) {
    case CostKind::SumOutputs:
      j = y.sum();
      break;
    case CostKind::PriceWeighted:
      j = prices[tau] * y.sum();
      break;
    case CostKind::NegReward:
      j = y.sum() + reward_c * (u / reward_alpha).squaredNorm();
      break;
    case CostKind::QuadraticAction: {
      const Vector ref = u_ref.size() > 0 ? u_ref : Vector::Zero(u.size()).eval();
      j = (u - ref).squaredNorm();
      break;
    }
  }
  if (action_prices.size() > 0) j += action_prices[tau] * u.sum();
  return j;
}

void CostSpec::grad(const Vector& y, const Vector& u, int tau, Vector& dy,
                    Vector& du) const {
  dy = Vector::Zero(y.size());
  du = Vector::Zero(u.size());
  switch (kind) {
    case CostKind::SumOutputs:
      dy.setOnes();
      break;
    case CostKind::PriceWeighted:
      dy.setConstant(prices[tau]);
      break;
    case CostKind::NegReward:
      dy.setOnes();
      du = (2.0 * reward_c / (reward_alpha * reward_alpha)) * u;
      break;
    case CostKind::QuadraticAction: {
      const Vector ref = u_ref.size() > 0 ? u_ref : Vector::Zero(u.size()).eval();
      du = 2.0 * (u - ref);
      break;
    }
  }
  if (action_prices.size() > 0) du.array() += action_prices[tau];
}

IcrnnHorizonModel::IcrnnHorizonModel(const IcrnnModel& f, const IcrnnModel& g,
                                     Matrix history_frames, Vector current_state,
                                     int horizon, std::vector<int> exog_dims,
                                     Matrix exog_values)
    : f_(f),
      g_(g),
      history_(std::move(history_frames)),
      s0_(std::move(current_state)),
      horizon_(horizon),
      exog_dims_(std::move(exog_dims)),
      exog_values_(std::move(exog_values)) {
  if (f_.in_dim != g_.in_dim)
    throw std::invalid_argument("IcrnnHorizonModel: f/g frame dim mismatch");
  if (f_.n_w != g_.n_w)
    throw std::invalid_argument("IcrnnHorizonModel: f/g window mismatch");
  n_w_ = f_.n_w;
  state_dim_ = g_.out_dim;
  if ((f_.in_dim - state_dim_) % 2 != 0 || f_.in_dim <= state_dim_)
    throw std::invalid_argument("IcrnnHorizonModel: frame layout mismatch");
  action_dim_ = (f_.in_dim - state_dim_) / 2;
  if (history_.rows() != f_.in_dim || history_.cols() != n_w_)
    throw std::invalid_argument("IcrnnHorizonModel: history must hold n_w frames");
  if (s0_.size() != state_dim_)
    throw std::invalid_argument("IcrnnHorizonModel: state dim mismatch");
  if (horizon_ < 1) throw std::invalid_argument("IcrnnHorizonModel: horizon < 1");
  if (!exog_dims_.empty() &&
      (exog_values_.rows() != static_cast<Eigen::Index>(exog_dims_.size()) ||
       exog_values_.cols() != horizon_))
    throw std::invalid_argument("IcrnnHorizonModel: exogenous sequence shape");
}

Matrix IcrnnHorizonModel::build_frames(const Matrix& actions,
                                       const Prediction& pred) const {
  Matrix frames(f_.in_dim, n_w_ + horizon_);
  frames.leftCols(n_w_) = history_;
  for (int tau = 0; tau < horizon_; ++tau) {
    const Vector s = (tau == 0) ? s0_ : Vector(pred.S.col(tau - 1));
    frames.col(n_w_ + tau).head(state_dim_) = s;
    frames.col(n_w_ + tau).segment(state_dim_, action_dim_) = actions.col(tau);
    frames.col(n_w_ + tau).tail(action_dim_) = -actions.col(tau);
  }
  return frames;
}

IcrnnHorizonModel::Prediction IcrnnHorizonModel::predict(
    const Matrix& actions) const {
  if (actions.rows() != action_dim_ || actions.cols() != horizon_)
    throw std::invalid_argument("IcrnnHorizonModel: action sequence shape");
  Prediction pred;
  pred.Y.resize(f_.out_dim, horizon_);
  pred.S.resize(state_dim_, horizon_);

  Matrix frames(f_.in_dim, n_w_ + horizon_);
  frames.leftCols(n_w_) = history_;
  Vector s = s0_;
  const Vector zf = Vector::Zero(f_.hidden_dim);
  const Vector zg = Vector::Zero(g_.hidden_dim);
  for (int tau = 0; tau < horizon_; ++tau) {
    frames.col(n_w_ + tau).head(state_dim_) = s;
    frames.col(n_w_ + tau).segment(state_dim_, action_dim_) = actions.col(tau);
    frames.col(n_w_ + tau).tail(action_dim_) = -actions.col(tau);
    const Matrix window = frames.middleCols(tau, n_w_ + 1);
    pred.Y.col(tau) = icrnn_forward(f_, window, zf).Y.col(n_w_);
    Vector s_next = icrnn_forward(g_, window, zg).Y.col(n_w_);
    for (size_t e = 0; e < exog_dims_.size(); ++e)
      s_next[exog_dims_[e]] = exog_values_(e, tau);
    pred.S.col(tau) = s_next;
    s = s_next;
  }
  return pred;
}

Matrix IcrnnHorizonModel::backward(const Matrix& actions, const Prediction& pred,
                                   const Matrix& dY, const Matrix& dS) const {
  const Matrix frames = build_frames(actions, pred);
  Matrix dFrame = Matrix::Zero(f_.in_dim, n_w_ + horizon_);
  Matrix dU = Matrix::Zero(action_dim_, horizon_);
  const Vector zf = Vector::Zero(f_.hidden_dim);
  const Vector zg = Vector::Zero(g_.hidden_dim);

  for (int tau = horizon_ - 1; tau >= 0; --tau) {
    // Cost weight on the predicted s_{tau+1}, plus everything that flowed
    // back into its frame from later windows.
    Vector gs = dS.col(tau);
    if (tau + 1 < horizon_) {
      const Vector fg = dFrame.col(n_w_ + tau + 1);
      gs += fg.head(state_dim_);
      dU.col(tau + 1) += fg.segment(state_dim_, action_dim_) -
                         fg.tail(action_dim_);
    }
    for (int dim : exog_dims_) gs[dim] = 0.0;  // exogenous values are constants

    const Matrix window = frames.middleCols(tau, n_w_ + 1);
    if (dY.col(tau).cwiseAbs().maxCoeff() > 0.0) {
      Matrix wY = Matrix::Zero(f_.out_dim, n_w_ + 1);
      wY.col(n_w_) = dY.col(tau);
      Matrix dW;
      icrnn_backward(f_, window, zf, wY, nullptr, &dW);
      dFrame.middleCols(tau, n_w_ + 1) += dW;
    }
    if (gs.cwiseAbs().maxCoeff() > 0.0) {
      Matrix wS = Matrix::Zero(state_dim_, n_w_ + 1);
      wS.col(n_w_) = gs;
      Matrix dW;
      icrnn_backward(g_, window, zg, wS, nullptr, &dW);
      dFrame.middleCols(tau, n_w_ + 1) += dW;
    }
  }
  const Vector fg = dFrame.col(n_w_);
  dU.col(0) += fg.segment(state_dim_, action_dim_) - fg.tail(action_dim_);
  return dU;
}

BatteryHorizonModel::Prediction BatteryHorizonModel::predict(
    const Matrix& actions) const {
  if (actions.rows() != 1 || actions.cols() != horizon_)
    throw std::invalid_argument("BatteryHorizonModel: action sequence shape");
  Prediction pred;
  pred.Y.resize(1, horizon_);
  pred.S.resize(1, horizon_);
  const auto& p = plant_.params();
  double soc = soc0_;
  for (int tau = 0; tau < horizon_; ++tau) {
    const double u = actions(0, tau);
    const double rate = (u >= 0.0) ? p.eta_charge * u : u / p.eta_discharge;
    soc += rate * p.dt;  // unclipped inside the solver; bounds are penalties
    pred.S(0, tau) = soc;
    pred.Y(0, tau) = plant_.degradation_cost(u);
  }
  return pred;
}

Matrix BatteryHorizonModel::backward(const Matrix& actions, const Prediction&,
                                     const Matrix& dY, const Matrix& dS) const {
  const auto& p = plant_.params();
  Matrix dU(1, horizon_);
  double soc_suffix = 0.0;  // sum of dS over steps >= tau
  for (int tau = horizon_ - 1; tau >= 0; --tau) {
    soc_suffix += dS(0, tau);
    const double u = actions(0, tau);
    const double drate = (u >= 0.0) ? p.eta_charge : 1.0 / p.eta_discharge;
    dU(0, tau) = dY(0, tau) * plant_.degradation_grad(u) +
                 soc_suffix * drate * p.dt;
  }
  return dU;
}

LinearHorizonModel::LinearHorizonModel(LinearDynamics dyn, Vector s0,
                                       Matrix exog, int horizon)
    : dyn_(std::move(dyn)), s0_(std::move(s0)), exog_(std::move(exog)),
      horizon_(horizon) {
  if (dyn_.A.rows() != dyn_.A.cols() || dyn_.A.rows() != s0_.size())
    throw std::invalid_argument("LinearHorizonModel: A/s0 mismatch");
  if (exog_.cols() != horizon_)
    throw std::invalid_argument("LinearHorizonModel: exogenous sequence shape");
}

LinearHorizonModel::Prediction LinearHorizonModel::predict(
    const Matrix& actions) const {
  Prediction pred;
  pred.Y.resize(1, horizon_);
  pred.S.resize(s0_.size(), horizon_);
  Vector s = s0_;
  for (int tau = 0; tau < horizon_; ++tau) {
    const Vector w = exog_.col(tau);
    const Vector u = actions.col(tau);
    pred.Y(0, tau) = dyn_.py_s.dot(s) + dyn_.py_w.dot(w) + dyn_.py_u.dot(u) +
                     dyn_.py0;
    s = dyn_.A * s + dyn_.Bw * w + dyn_.B * u + dyn_.c;
    pred.S.col(tau) = s;
  }
  return pred;
}

Matrix LinearHorizonModel::backward(const Matrix&, const Prediction&,
                                    const Matrix& dY, const Matrix& dS) const {
  const int T = horizon_;
  Matrix dU = Matrix::Zero(dyn_.B.cols(), T);
  // lambda = gradient w.r.t. s_{tau+1}, swept backwards.
  Vector lambda = Vector::Zero(s0_.size());
  for (int tau = T - 1; tau >= 0; --tau) {
    lambda += dS.col(tau);
    dU.col(tau) = dyn_.py_u * dY(0, tau) + dyn_.B.transpose() * lambda;
    lambda = dyn_.A.transpose() * lambda;
    lambda += dyn_.py_s * dY(0, tau);  // y_tau reads s_tau
  }
  return dU;
}

void BoxBounds::validate() const {
  if (lo.size() != hi.size() || lo.size() == 0)
    throw std::invalid_argument("BoxBounds: bad dims");
  for (int i = 0; i < lo.size(); ++i)
    if (lo[i] > hi[i]) throw std::invalid_argument("BoxBounds: empty box");
}

Vector BoxBounds::project(const Vector& u) const {
  return u.cwiseMax(lo).cwiseMin(hi);
}

Matrix BoxBounds::project_cols(const Matrix& u) const {
  Matrix out = u;
  for (Eigen::Index j = 0; j < u.cols(); ++j) out.col(j) = project(out.col(j));
  return out;
}

double horizon_objective(const HorizonModel& model, const Matrix& actions,
                         const CostSpec& cost, const Vector& state_lo,
                         const Vector& state_hi, double penalty_weight,
                         Matrix* grad, HorizonModel::Prediction* pred_out,
                         double* violation) {
  const int T = model.horizon();
  HorizonModel::Prediction pred = model.predict(actions);
  if (!pred.Y.allFinite() || !pred.S.allFinite())
    throw std::runtime_error("horizon_objective: non-finite prediction");

  double total = 0.0;
  Matrix dY(pred.Y.rows(), T), dS = Matrix::Zero(pred.S.rows(), T);
  Matrix dU_direct(actions.rows(), T);
  for (int tau = 0; tau < T; ++tau) {
    total += cost.eval(pred.Y.col(tau), actions.col(tau), tau);
    if (grad) {
      Vector dy, du;
      cost.grad(pred.Y.col(tau), actions.col(tau), tau, dy, du);
      dY.col(tau) = dy;
      dU_direct.col(tau) = du;
    }
  }

  double viol = 0.0;
  const bool has_bounds = state_lo.size() > 0;
  if (has_bounds) {
    for (int tau = 0; tau < T; ++tau) {
      for (int i = 0; i < pred.S.rows(); ++i) {
        const double s = pred.S(i, tau);
        const double over = s - state_hi[i];
        const double under = state_lo[i] - s;
        viol = std::max({viol, over, under});
        if (over > 0.0) {
          total += penalty_weight * over * over;
          if (grad) dS(i, tau) += 2.0 * penalty_weight * over;
        }
        if (under > 0.0) {
          total += penalty_weight * under * under;
          if (grad) dS(i, tau) -= 2.0 * penalty_weight * under;
        }
      }
    }
  }

  if (grad) *grad = model.backward(actions, pred, dY, dS) + dU_direct;
  if (pred_out) *pred_out = std::move(pred);
  if (violation) *violation = viol;
  return total;
}

MpcSolution mpc_solve(const HorizonModel& model, const BoxBounds& action_box,
                      const CostSpec& cost, const Vector& state_lo,
                      const Vector& state_hi, const MpcConfig& config) {
  action_box.validate();
  const int T = model.horizon();
  const int ud = model.action_dim();
  cost.validate(T);
  if (state_lo.size() != state_hi.size())
    throw std::invalid_argument("mpc_solve: state bound dims");

  RngStream rng(config.seed, 6);
  const int restarts = std::max(1, config.restarts);
  const double ref_weight =
      config.penalty0 * std::pow(10.0, restarts - 1);

  Matrix best_u;
  double best_ref = std::numeric_limits<double>::infinity();
  int total_iters = 0;
  double exit_grad_norm = 0.0;

  for (int r = 0; r < restarts; ++r) {
    Matrix u(ud, T);
    if (r == 0 && config.warm_start.size() > 0) {
      if (config.warm_start.rows() != ud || config.warm_start.cols() != T)
        throw std::invalid_argument("mpc_solve: warm start shape");
      u = config.warm_start;
    } else if (r <= 1) {
      u.setZero();
    } else {
      for (int tau = 0; tau < T; ++tau)
        for (int i = 0; i < ud; ++i)
          u(i, tau) = rng.uniform(action_box.lo[i], action_box.hi[i]);
    }
    u = action_box.project_cols(u);

    const double weight = config.penalty0 * std::pow(10.0, r);
    AdamState adam;
    Matrix local_best = u;
    double local_best_obj = std::numeric_limits<double>::infinity();
    for (int it = 0; it < config.max_iters; ++it) {
      Matrix g;
      const double obj =
          horizon_objective(model, u, cost, state_lo, state_hi, weight, &g,
                            nullptr, nullptr);
      if (obj < local_best_obj) {
        local_best_obj = obj;
        local_best = u;
      }
      const Matrix pg = u - action_box.project_cols(u - g);
      exit_grad_norm = pg.norm();
      ++total_iters;
      if (exit_grad_norm < config.tol) break;
      adam.update(u, g, config.lr);
      u = action_box.project_cols(u);
    }
    {
      const double obj = horizon_objective(model, u, cost, state_lo, state_hi,
                                           weight, nullptr, nullptr, nullptr);
      if (obj < local_best_obj) {
        local_best_obj = obj;
        local_best = u;
      }
    }
    const double ref_obj =
        horizon_objective(model, local_best, cost, state_lo, state_hi,
                          ref_weight, nullptr, nullptr, nullptr);
    if (ref_obj < best_ref) {
      best_ref = ref_obj;
      best_u = local_best;
    }
  }

  MpcSolution sol;
  sol.actions = best_u;
  sol.iterations = total_iters;
  sol.grad_norm = exit_grad_norm;
  HorizonModel::Prediction pred;
  sol.objective = horizon_objective(model, best_u, cost, state_lo, state_hi,
                                    0.0, nullptr, &pred, &sol.violation);
  sol.pred_y = pred.Y;
  sol.pred_s = pred.S;
  sol.violation_flagged = sol.violation > config.violation_threshold;
  if (!std::isfinite(sol.objective))
    throw std::runtime_error("mpc_solve: non-finite objective");
  return sol;
}

SingleShotResult single_shot_minimize(const IcnnModel& model,
                                      const BoxBounds& box,
                                      const SingleShotConfig& config) {
  box.validate();
  if (model.output_dim() != 1)
    throw std::invalid_argument("single_shot_minimize: scalar output required");
  if (box.lo.size() != model.input_dim)
    throw std::invalid_argument("single_shot_minimize: box dim mismatch");

  RngStream rng(config.seed, 7);
  SingleShotResult best;
  best.value = std::numeric_limits<double>::infinity();

  const int restarts = std::max(1, config.restarts);
  for (int r = 0; r < restarts; ++r) {
    Vector u;
    if (r == 0) {
      u = 0.5 * (box.lo + box.hi);
    } else if (r == 1) {
      u = box.project(Vector::Zero(model.input_dim));
    } else {
      u = Vector(model.input_dim);
      for (int i = 0; i < u.size(); ++i) u[i] = rng.uniform(box.lo[i], box.hi[i]);
    }
    AdamState adam;
    for (int it = 0; it < config.max_iters; ++it) {
      const double value = icnn_forward(model, u)[0];
      if (!std::isfinite(value))
        throw std::runtime_error("single_shot_minimize: non-finite objective");
      if (value < best.value) {
        best.value = value;
        best.argmin = u;
      }
      const Vector g = icnn_grad_input(model, u);
      const Vector pg = u - box.project(u - g);
      ++best.iterations;
      if (pg.norm() < config.tol) break;
      Matrix um = u, gm = g;
      adam.update(um, gm, config.lr);
      u = box.project(um);
    }
    const double value = icnn_forward(model, u)[0];
    if (value < best.value) {
      best.value = value;
      best.argmin = u;
    }
  }
  return best;
}

ShootingResult random_shooting(const HorizonModel& model,
                               const BoxBounds& action_box,
                               const CostSpec& cost, const Vector& state_lo,
                               const Vector& state_hi, double penalty_weight,
                               int K, std::uint64_t seed) {
  if (K < 1) throw std::invalid_argument("random_shooting: K must be >= 1");
  action_box.validate();
  const int T = model.horizon();
  const int ud = model.action_dim();
  RngStream rng(seed, 8);
  ShootingResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    Matrix u(ud, T);
    for (int tau = 0; tau < T; ++tau)
      for (int i = 0; i < ud; ++i)
        u(i, tau) = rng.uniform(action_box.lo[i], action_box.hi[i]);
    const double obj = horizon_objective(model, u, cost, state_lo, state_hi,
                                         penalty_weight, nullptr, nullptr,
                                         nullptr);
    if (obj < best.objective) {  // strict: lowest index wins ties
      best.objective = obj;
      best.actions = u;
    }
  }
  return best;
}

ClosedLoopTrace run_closed_loop(const Plant& plant, const Vector& s0, long t0,
                                int steps, const Policy& policy) {
  if (steps < 0) throw std::invalid_argument("run_closed_loop: negative steps");
  ClosedLoopTrace trace;
  trace.S.resize(plant.state_dim(), steps + 1);
  trace.U.resize(plant.action_dim(), steps);
  trace.Y.resize(plant.output_dim(), steps);
  trace.rewards.resize(steps);
  trace.S.col(0) = s0;
  Vector s = s0;
  const Vector lo = plant.action_lower();
  const Vector hi = plant.action_upper();
  for (int k = 0; k < steps; ++k) {
    const long t = t0 + k;
    Vector u = policy(s, t);
    if (u.size() != plant.action_dim())
      throw std::invalid_argument("run_closed_loop: policy action dim mismatch");
    u = u.cwiseMax(lo).cwiseMin(hi);
    const StepResult step = plant.step(s, u, t);
    trace.U.col(k) = u;
    trace.Y.col(k) = step.output;
    trace.rewards[k] = step.reward;
    s = step.next_state;
    trace.S.col(k + 1) = s;
  }
  return trace;
}

LinearDynamics fit_linear_dynamics(const std::vector<Rollout>& rollouts,
                                   int controllable_dims) {
  if (rollouts.empty())
    throw std::invalid_argument("fit_linear_dynamics: no rollouts");
  const int sd = static_cast<int>(rollouts.front().S.rows());
  const int ed = sd - controllable_dims;
  const int ud = static_cast<int>(rollouts.front().U.rows());
  if (controllable_dims < 1 || ed < 0)
    throw std::invalid_argument("fit_linear_dynamics: bad controllable_dims");
  if (rollouts.front().Y.rows() != 1)
    throw std::invalid_argument("fit_linear_dynamics: scalar output expected");

  const int fd = sd + ud + 1;  // [s_c; w; u; 1]
  Matrix G = Matrix::Zero(fd, fd);
  Matrix Rs = Matrix::Zero(fd, controllable_dims);
  Vector Ry = Vector::Zero(fd);
  for (const auto& r : rollouts) {
    for (int t = 0; t < r.horizon(); ++t) {
      Vector phi(fd);
      phi << r.S.col(t), r.U.col(t), 1.0;
      G += phi * phi.transpose();
      Rs += phi * r.S.col(t + 1).head(controllable_dims).transpose();
      Ry += phi * r.Y(0, t);
    }
  }
  Eigen::FullPivLU<Matrix> lu(G);
  if (lu.rank() < fd)
    throw std::runtime_error("fit_linear_dynamics: singular regression");
  const Matrix Ws = lu.solve(Rs);  // fd x sc
  const Vector wy = lu.solve(Ry);

  LinearDynamics dyn;
  dyn.A = Ws.topRows(controllable_dims).transpose();
  dyn.Bw = Ws.middleRows(controllable_dims, ed).transpose();
  dyn.B = Ws.middleRows(sd, ud).transpose();
  dyn.c = Ws.row(fd - 1).transpose();
  dyn.py_s = wy.head(controllable_dims);
  dyn.py_w = wy.segment(controllable_dims, ed);
  dyn.py_u = wy.segment(sd, ud);
  dyn.py0 = wy[fd - 1];
  return dyn;
}

double linear_output_rmse(const LinearDynamics& dyn,
                          const std::vector<Rollout>& rollouts,
                          int controllable_dims) {
  const int ed = static_cast<int>(dyn.py_w.size());
  double sq = 0.0;
  long count = 0;
  for (const auto& r : rollouts) {
    for (int t = 0; t < r.horizon(); ++t) {
      const Vector s = r.S.col(t);
      const double yhat = dyn.py_s.dot(s.head(controllable_dims)) +
                          dyn.py_w.dot(s.segment(controllable_dims, ed)) +
                          dyn.py_u.dot(r.U.col(t)) + dyn.py0;
      const double e = yhat - r.Y(0, t);
      sq += e * e;
      ++count;
    }
  }
  return std::sqrt(sq / static_cast<double>(count));
}

}  // namespace icx
