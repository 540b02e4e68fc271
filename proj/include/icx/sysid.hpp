#pragma once

#include "icx/icrnn.hpp"
#include "icx/numeric.hpp"
#include "icx/plants.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace icx {

struct Rollout {
  Matrix S;        // state_dim x (H+1)
  Matrix U;        // action_dim x H
  Matrix Y;        // output_dim x H
  Vector rewards;  // H
  std::string plant;
  std::uint64_t seed = 0;

  int horizon() const { return static_cast<int>(U.cols()); }
  void validate() const;
};

/// Per-dimension affine map onto [-1, 1].
struct NormalizationSpec {
  Vector lo, hi;

  static NormalizationSpec fit(const Matrix& data);
  void validate() const;
  int dim() const { return static_cast<int>(lo.size()); }

  double normalize(int i, double raw) const;
  double denormalize(int i, double norm) const;
  Vector normalize(const Vector& raw) const;
  Vector denormalize(const Vector& norm) const;
  Matrix normalize_cols(const Matrix& raw) const;
  Matrix denormalize_cols(const Matrix& norm) const;
};

/// Rollouts with u_t ~ Uniform[lo, hi]; deterministic per (seed, index).
std::vector<Rollout> collect_random_rollouts(const Plant& plant, int n,
                                             int horizon, std::uint64_t seed);

using Controller = std::function<Vector(const Vector& state, long t)>;
/// Retrains on the aggregated dataset and returns the refreshed policy.
using Retrain = std::function<Controller(const std::vector<Rollout>&)>;

struct DaggerConfig {
  int iterations = 6;
  int rollouts_per_iter = 10;
  int horizon = 200;
  double random_mix = 0.1;    // fraction of fresh random rollouts per iteration
  double noise_sigma = 0.001; // exploration noise std, normalized action units
  std::uint64_t seed = 0;
};

/// Seeds the dataset with one round of random rollouts, then per iteration
/// mixes on-policy rollouts (controller output plus Gaussian noise, clipped
/// to bounds) with fresh random ones and retrains. Throws if the controller
/// emits a non-finite action.
std::vector<Rollout> dagger_aggregate(const Plant& plant, Controller controller,
                                      const Retrain& retrain,
                                      const DaggerConfig& config);

// Supervised windows for the two ICRNN heads, built from normalized
// rollouts. Frames are [s_t; u_t; -u_t]; a window of n_w+1 frames ending at
// t targets y_t (output head) and s_{t+1} (dynamics head), loss on the last
// step only.
struct WindowDataset {
  std::vector<IcrnnSequence> output_windows;  // target y_t
  std::vector<IcrnnSequence> state_windows;   // target s_{t+1}
  int state_dim = 0, action_dim = 0, n_w = 0;
};

WindowDataset make_windows(const std::vector<Rollout>& rollouts, int n_w);

/// Chronological split (time-series; no shuffling across the boundary).
std::pair<std::vector<Rollout>, std::vector<Rollout>> chronological_split(
    const std::vector<Rollout>& rollouts, double ratio);

/// Shuffled split for i.i.d. regression sets; columns of X and Y move together.
struct SampleSplit {
  Matrix train_x, train_y, test_x, test_y;
};
SampleSplit shuffled_split(const Matrix& X, const Matrix& Y, double ratio,
                           std::uint64_t seed);

void write_rollouts_csv(const std::string& path,
                        const std::vector<Rollout>& rollouts);
std::vector<Rollout> read_rollouts_csv(const std::string& path);

}  // namespace icx
