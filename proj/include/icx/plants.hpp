#pragma once

#include "icx/numeric.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace icx {

struct StepResult {
  Vector next_state;
  Vector output;
  double reward = 0.0;
};

/// Ground-truth simulator: y_t = f(s_t, u_t), s_{t+1} = g(s_t, u_t).
/// Step functions are pure; all randomness comes from the caller's streams.
class Plant {
 public:
  virtual ~Plant() = default;
  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual Vector action_lower() const = 0;
  virtual Vector action_upper() const = 0;
  virtual Vector initial_state(RngStream& rng) const = 0;
  virtual StepResult step(const Vector& s, const Vector& u, long t) const = 0;
};

// Double integrator with drag on a plane; reward is forward velocity minus
// a quadratic effort penalty r = v_next - c * ||u / alpha||^2.
struct PointMassParams {
  double dt = 0.1;
  double gain = 1.0;
  double drag = 0.5;
  double reward_c = 0.5;
  double reward_alpha = 1.0;
};

class PointMassPlant : public Plant {
 public:
  explicit PointMassPlant(PointMassParams p = {}) : p_(p) {}
  std::string name() const override { return "point-mass"; }
  int state_dim() const override { return 4; }  // px, py, vx, vy
  int action_dim() const override { return 2; }
  int output_dim() const override { return 1; }  // reward trace
  Vector action_lower() const override { return Vector::Constant(2, -1.0); }
  Vector action_upper() const override { return Vector::Constant(2, 1.0); }
  Vector initial_state(RngStream& rng) const override;
  StepResult step(const Vector& s, const Vector& u, long t) const override;
  const PointMassParams& params() const { return p_; }

 private:
  PointMassParams p_;
};

// Multi-zone thermal model. Zone temperatures follow a linear RC exchange
// with the outside temperature and each other; the power map is nonlinear
// (quadratic + |u| + a linear term), so a linear fit of it misses.
// State is [T_1..T_z, w] with w the outside temperature, carried as an
// uncontrolled state dimension; w(t) is a deterministic function of t and
// hence known over any control horizon.
struct RcThermalParams {
  int zones = 4;
  Vector alpha;   // zone <-> outside coupling, per step
  Matrix kappa;   // zone <-> zone coupling, per step
  Vector beta;    // setpoint-offset effect on zone temperature
  double c1 = 0.5, c2 = 0.2, c3 = 0.15, base = 0.25;  // power map
  double w_mean = 28.0, w_amp = 4.0, w_noise = 0.4;
  int period = 144;  // 10-minute steps, one day
  std::uint64_t w_seed = 7;

  static RcThermalParams defaults();
};

double outside_temperature(const RcThermalParams& p, long t);

class RcThermalPlant : public Plant {
 public:
  explicit RcThermalPlant(RcThermalParams p = RcThermalParams::defaults());
  std::string name() const override { return "rc-thermal"; }
  int state_dim() const override { return p_.zones + 1; }
  int action_dim() const override { return p_.zones; }
  int output_dim() const override { return 1; }  // total electric power
  Vector action_lower() const override { return Vector::Constant(p_.zones, -1.0); }
  Vector action_upper() const override { return Vector::Constant(p_.zones, 1.0); }
  Vector initial_state(RngStream& rng) const override;
  StepResult step(const Vector& s, const Vector& u, long t) const override;
  const RcThermalParams& params() const { return p_; }

  /// Linear part only: next zone temperatures given temps, outside temp, u.
  Vector linear_temp_update(const Vector& temps, double w, const Vector& u) const;
  double power(const Vector& u) const;

 private:
  RcThermalParams p_;
};

// Single cell with charge/discharge efficiency and a convex degradation
// cost. SoC is clipped to [0, 1]; controllers keep it interior via bounds.
struct BatteryParams {
  double dt = 0.1;
  double eta_charge = 0.95;
  double eta_discharge = 0.95;
  double k_quad = 0.4, k_abs = 0.1, k_knee = 0.6;
  double knee = 0.8;
  double base = 0.0;  // fixed per-step cost; nonzero keeps objectives away from 0
};

class BatteryPlant : public Plant {
 public:
  explicit BatteryPlant(BatteryParams p = {}) : p_(p) {}
  std::string name() const override { return "battery"; }
  int state_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  int output_dim() const override { return 1; }  // degradation cost
  Vector action_lower() const override { return Vector::Constant(1, -1.0); }
  Vector action_upper() const override { return Vector::Constant(1, 1.0); }
  Vector initial_state(RngStream& rng) const override;
  StepResult step(const Vector& s, const Vector& u, long t) const override;
  double degradation_cost(double u) const;
  double degradation_grad(double u) const;
  const BatteryParams& params() const { return p_; }

 private:
  BatteryParams p_;
};

struct CirclesDataset {
  Matrix X;       // 2 x n
  Vector labels;  // 0 inner, 1 outer
};

CirclesDataset circles_dataset(int n, double inner_radius, double outer_radius,
                               double noise, std::uint64_t seed);

struct TouProfile {
  double off_peak = 0.1;
  double peak = 0.5;
  int peak_start = 102;  // 17:00 at 10-minute resolution
  int peak_end = 126;    // 21:00
  int period = 144;

  bool is_peak(long t) const;
};

double tou_price(const TouProfile& profile, long t);

std::unique_ptr<Plant> make_plant(const std::string& name);

}  // namespace icx
