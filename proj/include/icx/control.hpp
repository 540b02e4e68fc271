#pragma once

#include "icx/icnn.hpp"
#include "icx/icrnn.hpp"
#include "icx/numeric.hpp"
#include "icx/plants.hpp"
#include "icx/sysid.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace icx {

// Per-step cost J(y_tau, u_tau, tau). Every variant is convex in u and
// convex nondecreasing in y, so the predicted objective stays convex when
// composed with input-convex models.
enum class CostKind {
  SumOutputs,       // sum(y_tau)
  PriceWeighted,    // price_tau * sum(y_tau)
  NegReward,        // sum(y_tau) + c * ||u/alpha||^2, y trained as negated reward
  QuadraticAction,  // ||u_tau - u_ref||^2
};

struct CostSpec {
  CostKind kind = CostKind::SumOutputs;
  Vector prices;             // per horizon step, PriceWeighted only
  double reward_c = 0.5;     // NegReward
  double reward_alpha = 1.0; // NegReward
  Vector u_ref;              // QuadraticAction; empty means zero
  Vector action_prices;      // optional linear term price_tau * sum(u_tau)

  void validate(int horizon) const;
  double eval(const Vector& y, const Vector& u, int tau) const;
  void grad(const Vector& y, const Vector& u, int tau, Vector& dy,
            Vector& du) const;
};

/// Predicts outputs/states over a fixed horizon from an action sequence and
/// backpropagates cost weights to the actions. Actions and states are in the
/// model's own (normalized) units.
class HorizonModel {
 public:
  struct Prediction {
    Matrix Y;  // out_dim x T, y_tau
    Matrix S;  // state_dim x T, predicted s_{tau+1}
  };

  virtual ~HorizonModel() = default;
  virtual int action_dim() const = 0;
  virtual int horizon() const = 0;
  virtual Prediction predict(const Matrix& actions) const = 0;
  /// Gradient of sum(dY .* Y) + sum(dS .* S) w.r.t. the action matrix.
  virtual Matrix backward(const Matrix& actions, const Prediction& pred,
                          const Matrix& dY, const Matrix& dS) const = 0;
};

// Receding-horizon predictor through a pair of ICRNN heads: f for the
// output and g for the next state, each reading a window of n_w+1 frames
// [s; u; -u]. Exogenous state dims are overridden with their known future
// values and excluded from the gradient.
class IcrnnHorizonModel : public HorizonModel {
 public:
  IcrnnHorizonModel(const IcrnnModel& f, const IcrnnModel& g,
                    Matrix history_frames, Vector current_state, int horizon,
                    std::vector<int> exog_dims = {}, Matrix exog_values = {});

  int action_dim() const override { return action_dim_; }
  int horizon() const override { return horizon_; }
  Prediction predict(const Matrix& actions) const override;
  Matrix backward(const Matrix& actions, const Prediction& pred,
                  const Matrix& dY, const Matrix& dS) const override;

 private:
  Matrix build_frames(const Matrix& actions, const Prediction& pred) const;

  const IcrnnModel& f_;
  const IcrnnModel& g_;
  Matrix history_;  // in_dim x n_w
  Vector s0_;
  int horizon_;
  int state_dim_, action_dim_, n_w_;
  std::vector<int> exog_dims_;
  Matrix exog_values_;  // |exog_dims| x T, value of s_{tau+1} dims
};

/// Exact battery dynamics: SoC integration plus the plant's convex
/// degradation cost as the output; gradients are analytic.
class BatteryHorizonModel : public HorizonModel {
 public:
  BatteryHorizonModel(const BatteryPlant& plant, double soc0, int horizon)
      : plant_(plant), soc0_(soc0), horizon_(horizon) {}
  int action_dim() const override { return 1; }
  int horizon() const override { return horizon_; }
  Prediction predict(const Matrix& actions) const override;
  Matrix backward(const Matrix& actions, const Prediction& pred,
                  const Matrix& dY, const Matrix& dS) const override;

 private:
  const BatteryPlant& plant_;
  double soc0_;
  int horizon_;
};

// Linear state-space surrogate s' = A s + Bw w + B u + c with a linear
// output map; the RC baseline and the exactly-linear sanity checks use it.
struct LinearDynamics {
  Matrix A, Bw, B;
  Vector c;
  Vector py_s, py_w, py_u;
  double py0 = 0.0;
};

class LinearHorizonModel : public HorizonModel {
 public:
  LinearHorizonModel(LinearDynamics dyn, Vector s0, Matrix exog, int horizon);
  int action_dim() const override { return static_cast<int>(dyn_.B.cols()); }
  int horizon() const override { return horizon_; }
  Prediction predict(const Matrix& actions) const override;
  Matrix backward(const Matrix& actions, const Prediction& pred,
                  const Matrix& dY, const Matrix& dS) const override;

 private:
  LinearDynamics dyn_;
  Vector s0_;
  Matrix exog_;  // exog_dim x T
  int horizon_;
};

struct BoxBounds {
  Vector lo, hi;
  void validate() const;
  Vector project(const Vector& u) const;
  Matrix project_cols(const Matrix& u) const;
};

struct MpcConfig {
  int max_iters = 2000;
  double tol = 1e-6;
  int restarts = 3;
  double lr = 0.05;
  double penalty0 = 10.0;        // state-bound penalty weight, x10 per restart
  double violation_threshold = 1e-3;
  std::uint64_t seed = 0;
  Matrix warm_start;             // optional, action_dim x T
};

struct MpcSolution {
  Matrix actions;          // action_dim x T
  double objective = 0.0;  // cost term only, no penalty
  int iterations = 0;
  double grad_norm = 0.0;
  Matrix pred_y, pred_s;
  double violation = 0.0;  // max state-bound violation at the solution
  bool violation_flagged = false;
};

/// Projected Adam descent over the stacked action sequence; box projection
/// for action bounds, quadratic penalty with an increasing weight schedule
/// for state bounds. Multi-restart, best kept; deterministic given seed.
MpcSolution mpc_solve(const HorizonModel& model, const BoxBounds& action_box,
                      const CostSpec& cost, const Vector& state_lo,
                      const Vector& state_hi, const MpcConfig& config);

struct SingleShotConfig {
  int max_iters = 2000;
  double tol = 1e-8;
  int restarts = 3;
  double lr = 0.02;
  std::uint64_t seed = 0;
};

struct SingleShotResult {
  Vector argmin;
  double value = 0.0;
  int iterations = 0;
};

/// min_u f(u) over a box for a scalar-output input-convex model.
SingleShotResult single_shot_minimize(const IcnnModel& model,
                                      const BoxBounds& box,
                                      const SingleShotConfig& config);

struct ShootingResult {
  Matrix actions;
  double objective = 0.0;
};

/// Samples K uniform action sequences in the box, evaluates the predicted
/// penalized objective, returns the argmin (lowest index on ties).
ShootingResult random_shooting(const HorizonModel& model,
                               const BoxBounds& action_box,
                               const CostSpec& cost, const Vector& state_lo,
                               const Vector& state_hi, double penalty_weight,
                               int K, std::uint64_t seed);

/// Penalized objective of a fixed action sequence (shared by the solver,
/// shooting, and test oracles). grad may be null.
double horizon_objective(const HorizonModel& model, const Matrix& actions,
                         const CostSpec& cost, const Vector& state_lo,
                         const Vector& state_hi, double penalty_weight,
                         Matrix* grad, HorizonModel::Prediction* pred,
                         double* violation);

struct ClosedLoopTrace {
  Matrix S;  // state_dim x (steps+1), raw units
  Matrix U;  // action_dim x steps
  Matrix Y;  // output_dim x steps
  Vector rewards;
  std::vector<double> objectives;   // per MPC solve; empty for plain policies
  std::vector<double> violations;
  std::vector<int> iterations;
};

using Policy = std::function<Vector(const Vector& state_raw, long t)>;

/// Applies the policy step by step from (t0, s0). steps == 0 gives an empty
/// trajectory.
ClosedLoopTrace run_closed_loop(const Plant& plant, const Vector& s0, long t0,
                                int steps, const Policy& policy);

/// Least-squares fit of LinearDynamics on rollouts whose state splits into
/// controllable dims followed by exogenous dims. Throws if the regression
/// normal matrix is singular.
LinearDynamics fit_linear_dynamics(const std::vector<Rollout>& rollouts,
                                   int controllable_dims);

/// Output-prediction RMSE of a linear fit on rollouts.
double linear_output_rmse(const LinearDynamics& dyn,
                          const std::vector<Rollout>& rollouts,
                          int controllable_dims);

}  // namespace icx
