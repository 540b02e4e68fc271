#include "icx/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace icx {

namespace {

std::vector<Rollout> normalize_rollouts(const std::vector<Rollout>& rollouts,
                                        const NormalizationSpec& s_norm,
                                        const NormalizationSpec& u_norm,
                                        const NormalizationSpec& y_norm) {
  std::vector<Rollout> out = rollouts;
  for (auto& r : out) {
    r.S = s_norm.normalize_cols(r.S);
    r.U = u_norm.normalize_cols(r.U);
    r.Y = y_norm.normalize_cols(r.Y);
  }
  return out;
}

Matrix shift_warm(const Matrix& actions) {
  Matrix w = actions;
  if (w.cols() > 1) {
    w.leftCols(w.cols() - 1) = actions.rightCols(actions.cols() - 1);
    w.col(w.cols() - 1) = actions.col(actions.cols() - 1);
  }
  return w;
}

}  // namespace

BuildingData collect_building_data(const RcThermalPlant& plant, int rollouts,
                                   int horizon, double split_ratio,
                                   std::uint64_t seed) {
  BuildingData data;
  const auto all = collect_random_rollouts(plant, rollouts, horizon, seed);
  auto [train, test] = chronological_split(all, split_ratio);
  data.train = std::move(train);
  data.test = std::move(test);

  Matrix states(plant.state_dim(), 0), actions(plant.action_dim(), 0),
      outputs(plant.output_dim(), 0);
  for (const auto& r : data.train) {
    const auto c = states.cols();
    states.conservativeResize(Eigen::NoChange, c + r.S.cols());
    states.rightCols(r.S.cols()) = r.S;
    actions.conservativeResize(Eigen::NoChange, actions.cols() + r.U.cols());
    actions.rightCols(r.U.cols()) = r.U;
    outputs.conservativeResize(Eigen::NoChange, outputs.cols() + r.Y.cols());
    outputs.rightCols(r.Y.cols()) = r.Y;
  }
  data.s_norm = NormalizationSpec::fit(states);
  data.u_norm = NormalizationSpec::fit(actions);
  data.y_norm = NormalizationSpec::fit(outputs);
  return data;
}

BuildingModels train_building_models(const BuildingData& data, int n_w,
                                     const IcrnnTrainConfig& config) {
  const auto train_n =
      normalize_rollouts(data.train, data.s_norm, data.u_norm, data.y_norm);
  const WindowDataset windows = make_windows(train_n, n_w);
  BuildingModels models;
  IcrnnTrainConfig cfg_f = config;
  IcrnnTrainConfig cfg_g = config;
  cfg_g.seed = config.seed + 1;
  models.f = train_icrnn(windows.output_windows, n_w, cfg_f).model;
  models.g = train_icrnn(windows.state_windows, n_w, cfg_g).model;
  models.s_norm = data.s_norm;
  models.u_norm = data.u_norm;
  models.y_norm = data.y_norm;
  models.n_w = n_w;
  return models;
}

double icrnn_output_rmse(const BuildingModels& models,
                         const std::vector<Rollout>& rollouts) {
  const auto rolls =
      normalize_rollouts(rollouts, models.s_norm, models.u_norm, models.y_norm);
  double sq = 0.0;
  long count = 0;
  for (size_t k = 0; k < rolls.size(); ++k) {
    const auto& r = rolls[k];
    const int H = r.horizon();
    const Matrix frames =
        assemble_frames(r.S.leftCols(H), r.U);
    for (int t = models.n_w; t < H; ++t) {
      const Matrix window = frames.middleCols(t - models.n_w, models.n_w + 1);
      const double yhat_n =
          icrnn_forward(models.f, window).Y(0, models.n_w);
      const double yhat = models.y_norm.denormalize(0, yhat_n);
      const double e = yhat - rollouts[k].Y(0, t);
      sq += e * e;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("icrnn_output_rmse: no windows");
  return std::sqrt(sq / static_cast<double>(count));
}

BuildingIcrnnPolicy::BuildingIcrnnPolicy(const RcThermalPlant& plant,
                                         BuildingModels models, Options opt)
    : plant_params_(plant.params()), models_(std::move(models)),
      opt_(std::move(opt)) {
  if (opt_.horizon < 1)
    throw std::invalid_argument("BuildingIcrnnPolicy: horizon < 1");
  if (models_.s_norm.dim() != plant.state_dim() ||
      models_.u_norm.dim() != plant.action_dim())
    throw std::invalid_argument("BuildingIcrnnPolicy: normalization dims");
}

Vector BuildingIcrnnPolicy::operator()(const Vector& state_raw, long t) {
  const int zones = plant_params_.zones;
  const int sd = zones + 1;
  const int ud = zones;
  const int T = opt_.horizon;
  const Vector s_n = models_.s_norm.normalize(state_raw);

  if (!history_ready_) {
    Vector frame = Vector::Zero(sd + 2 * ud);
    frame.head(sd) = s_n;
    history_ = frame.replicate(1, models_.n_w);
    history_ready_ = true;
  }

  Matrix exog(1, T);
  for (int tau = 0; tau < T; ++tau)
    exog(0, tau) = models_.s_norm.normalize(
        zones, outside_temperature(plant_params_, t + tau + 1));

  IcrnnHorizonModel model(models_.f, models_.g, history_, s_n, T, {zones},
                          exog);

  CostSpec cost;
  if (opt_.price) {
    cost.kind = CostKind::PriceWeighted;
    cost.prices.resize(T);
    for (int tau = 0; tau < T; ++tau) cost.prices[tau] = opt_.price(t + tau);
  } else {
    cost.kind = CostKind::SumOutputs;
  }

  Vector state_lo = Vector::Constant(sd, -std::numeric_limits<double>::infinity());
  Vector state_hi = Vector::Constant(sd, std::numeric_limits<double>::infinity());
  for (int i = 0; i < zones; ++i) {
    state_lo[i] =
        models_.s_norm.normalize(i, opt_.comfort_lo + opt_.comfort_margin);
    state_hi[i] =
        models_.s_norm.normalize(i, opt_.comfort_hi - opt_.comfort_margin);
  }

  BoxBounds box{models_.u_norm.normalize(Vector::Constant(ud, -1.0)),
                models_.u_norm.normalize(Vector::Constant(ud, 1.0))};
  MpcConfig cfg = opt_.mpc;
  if (warm_.size() > 0) cfg.warm_start = warm_;
  const MpcSolution sol = mpc_solve(model, box, cost, state_lo, state_hi, cfg);

  objectives_.push_back(sol.objective);
  violations_.push_back(sol.violation);
  iterations_.push_back(sol.iterations);
  warm_ = shift_warm(sol.actions);

  const Vector u_n = sol.actions.col(0);
  Vector frame(sd + 2 * ud);
  frame << s_n, u_n, -u_n;
  history_.leftCols(models_.n_w - 1) = history_.rightCols(models_.n_w - 1).eval();
  history_.col(models_.n_w - 1) = frame;

  return models_.u_norm.denormalize(u_n);
}

BuildingRcPolicy::BuildingRcPolicy(const RcThermalPlant& plant,
                                   LinearDynamics dyn, Options opt)
    : plant_params_(plant.params()), dyn_(std::move(dyn)), opt_(std::move(opt)) {
  if (opt_.horizon < 1)
    throw std::invalid_argument("BuildingRcPolicy: horizon < 1");
}

Vector BuildingRcPolicy::operator()(const Vector& state_raw, long t) {
  const int zones = plant_params_.zones;
  const int T = opt_.horizon;

  Matrix exog(1, T);
  for (int tau = 0; tau < T; ++tau)
    exog(0, tau) = outside_temperature(plant_params_, t + tau);

  LinearHorizonModel model(dyn_, state_raw.head(zones), exog, T);

  CostSpec cost;
  if (opt_.price) {
    cost.kind = CostKind::PriceWeighted;
    cost.prices.resize(T);
    for (int tau = 0; tau < T; ++tau) cost.prices[tau] = opt_.price(t + tau);
  } else {
    cost.kind = CostKind::SumOutputs;
  }

  const Vector state_lo =
      Vector::Constant(zones, opt_.comfort_lo + opt_.comfort_margin);
  const Vector state_hi =
      Vector::Constant(zones, opt_.comfort_hi - opt_.comfort_margin);
  BoxBounds box{Vector::Constant(zones, -1.0), Vector::Constant(zones, 1.0)};
  MpcConfig cfg = opt_.mpc;
  if (warm_.size() > 0) cfg.warm_start = warm_;
  const MpcSolution sol = mpc_solve(model, box, cost, state_lo, state_hi, cfg);

  objectives_.push_back(sol.objective);
  violations_.push_back(sol.violation);
  warm_ = shift_warm(sol.actions);
  return sol.actions.col(0);
}

Policy thermostat_policy(const RcThermalPlant& plant, double setpoint,
                         double kp) {
  const int zones = plant.params().zones;
  return [zones, setpoint, kp](const Vector& s, long) {
    Vector u(zones);
    for (int i = 0; i < zones; ++i)
      u[i] = std::clamp(kp * (setpoint - s[i]), -1.0, 1.0);
    return u;
  };
}

EpisodeMetrics building_metrics(const ClosedLoopTrace& trace, long t0,
                                double comfort_lo, double comfort_hi,
                                int zones, const TouProfile* tou,
                                const std::function<double(long)>& price) {
  EpisodeMetrics m;
  const double mid = 0.5 * (comfort_lo + comfort_hi);
  const double half = 0.5 * (comfort_hi - comfort_lo);
  const int steps = static_cast<int>(trace.U.cols());
  for (int k = 0; k < steps; ++k) {
    const long t = t0 + k;
    const double y = trace.Y(0, k);
    m.total_energy += y;
    if (tou && tou->is_peak(t)) m.peak_energy += y;
    m.total_cost += (price ? price(t) : 1.0) * y;
  }
  for (int k = 1; k <= steps; ++k) {  // realized temperatures after each step
    for (int i = 0; i < zones; ++i) {
      const double temp = trace.S(i, k);
      m.max_temp_violation = std::max(
          {m.max_temp_violation, temp - comfort_hi, comfort_lo - temp});
      m.max_band_violation_norm = std::max(
          m.max_band_violation_norm, std::abs(temp - mid) / half - 1.0);
    }
  }
  return m;
}

}  // namespace icx
