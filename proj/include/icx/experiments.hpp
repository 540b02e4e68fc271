#pragma once

#include "icx/control.hpp"
#include "icx/icrnn.hpp"
#include "icx/plants.hpp"
#include "icx/sysid.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace icx {

// Building-proxy pipeline: collect rollouts, normalize, train the two ICRNN
// heads, run receding-horizon control against the baselines.

struct BuildingData {
  std::vector<Rollout> train, test;
  NormalizationSpec s_norm, u_norm, y_norm;
};

/// Random-action rollouts on the plant, chronological 10/12-style split,
/// normalization fit on the training part only.
BuildingData collect_building_data(const RcThermalPlant& plant, int rollouts,
                                   int horizon, double split_ratio,
                                   std::uint64_t seed);

struct BuildingModels {
  IcrnnModel f;  // output head: normalized power
  IcrnnModel g;  // dynamics head: normalized next state
  NormalizationSpec s_norm, u_norm, y_norm;
  int n_w = 0;
};

BuildingModels train_building_models(const BuildingData& data, int n_w,
                                     const IcrnnTrainConfig& config);

/// Output-prediction RMSE in raw units over the rollouts' windows.
double icrnn_output_rmse(const BuildingModels& models,
                         const std::vector<Rollout>& rollouts);

/// Receding-horizon controller through the trained ICRNN heads. Stateful:
/// keeps the frame history and warm-starts each solve with the previous
/// shifted solution. Solves in normalized units, returns raw actions.
class BuildingIcrnnPolicy {
 public:
  struct Options {
    int horizon = 36;
    double comfort_lo = 19.0, comfort_hi = 24.0;
    double comfort_margin = 0.2;  // solver-side tightening, raw degrees
    std::function<double(long)> price;  // null = flat
    MpcConfig mpc;
  };

  BuildingIcrnnPolicy(const RcThermalPlant& plant, BuildingModels models,
                      Options opt);
  Vector operator()(const Vector& state_raw, long t);

  const std::vector<double>& objectives() const { return objectives_; }
  const std::vector<double>& violations() const { return violations_; }
  const std::vector<int>& iterations() const { return iterations_; }

 private:
  RcThermalParams plant_params_;
  BuildingModels models_;
  Options opt_;
  Matrix history_;  // in_dim x n_w, normalized frames
  bool history_ready_ = false;
  Matrix warm_;
  std::vector<double> objectives_, violations_;
  std::vector<int> iterations_;
};

/// Same receding-horizon loop through a least-squares linear (RC) model,
/// solved in raw units.
class BuildingRcPolicy {
 public:
  using Options = BuildingIcrnnPolicy::Options;

  BuildingRcPolicy(const RcThermalPlant& plant, LinearDynamics dyn,
                   Options opt);
  Vector operator()(const Vector& state_raw, long t);

  const std::vector<double>& objectives() const { return objectives_; }
  const std::vector<double>& violations() const { return violations_; }

 private:
  RcThermalParams plant_params_;
  LinearDynamics dyn_;
  Options opt_;
  Matrix warm_;
  std::vector<double> objectives_, violations_;
};

/// Proportional thermostat tracking a fixed setpoint; the fixed-setpoint
/// baseline of the savings comparisons.
Policy thermostat_policy(const RcThermalPlant& plant, double setpoint,
                         double kp = 1.0);

/// Wraps a stateful policy object into the plain Policy callable.
template <typename P>
Policy wrap_policy(std::shared_ptr<P> p) {
  return [p](const Vector& s, long t) { return (*p)(s, t); };
}

struct EpisodeMetrics {
  double total_energy = 0.0;  // sum of raw power outputs
  double peak_energy = 0.0;   // restricted to the TOU peak window
  double total_cost = 0.0;    // price-weighted energy
  double max_temp_violation = 0.0;       // raw degrees outside [lo, hi]
  double max_band_violation_norm = 0.0;  // band-normalized units beyond 1
};

EpisodeMetrics building_metrics(const ClosedLoopTrace& trace, long t0,
                                double comfort_lo, double comfort_hi,
                                int zones, const TouProfile* tou,
                                const std::function<double(long)>& price);

}  // namespace icx
