#include "icx/sysid.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace icx {

void Rollout::validate() const {
  const int h = horizon();
  if (h < 1) throw std::invalid_argument("Rollout: empty");
  if (S.cols() != h + 1 || Y.cols() != h || rewards.size() != h)
    throw std::invalid_argument("Rollout: inconsistent lengths");
}

NormalizationSpec NormalizationSpec::fit(const Matrix& data) {
  if (data.cols() == 0) throw std::invalid_argument("NormalizationSpec: no data");
  NormalizationSpec spec;
  spec.lo = data.rowwise().minCoeff();
  spec.hi = data.rowwise().maxCoeff();
  for (int i = 0; i < spec.lo.size(); ++i) {
    if (spec.hi[i] - spec.lo[i] < 1e-12) {
      spec.lo[i] -= 0.5;
      spec.hi[i] += 0.5;
    }
  }
  return spec;
}

void NormalizationSpec::validate() const {
  if (lo.size() != hi.size() || lo.size() == 0)
    throw std::invalid_argument("NormalizationSpec: bad dims");
  for (int i = 0; i < lo.size(); ++i)
    if (!(hi[i] > lo[i]))
      throw std::invalid_argument("NormalizationSpec: hi must exceed lo");
}

double NormalizationSpec::normalize(int i, double raw) const {
  return 2.0 * (raw - lo[i]) / (hi[i] - lo[i]) - 1.0;
}

double NormalizationSpec::denormalize(int i, double norm) const {
  return lo[i] + (norm + 1.0) * 0.5 * (hi[i] - lo[i]);
}

Vector NormalizationSpec::normalize(const Vector& raw) const {
  if (raw.size() != dim()) throw std::invalid_argument("normalize: dim mismatch");
  Vector out(raw.size());
  for (int i = 0; i < raw.size(); ++i) out[i] = normalize(i, raw[i]);
  return out;
}

Vector NormalizationSpec::denormalize(const Vector& norm) const {
  if (norm.size() != dim()) throw std::invalid_argument("denormalize: dim mismatch");
  Vector out(norm.size());
  for (int i = 0; i < norm.size(); ++i) out[i] = denormalize(i, norm[i]);
  return out;
}

Matrix NormalizationSpec::normalize_cols(const Matrix& raw) const {
  Matrix out(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j)
    out.col(j) = normalize(Vector(raw.col(j)));
  return out;
}

Matrix NormalizationSpec::denormalize_cols(const Matrix& norm) const {
  Matrix out(norm.rows(), norm.cols());
  for (Eigen::Index j = 0; j < norm.cols(); ++j)
    out.col(j) = denormalize(Vector(norm.col(j)));
  return out;
}

namespace {

Rollout run_rollout(const Plant& plant, int horizon, Controller* controller,
                    double noise_sigma, std::uint64_t seed,
                    std::uint64_t stream) {
  RngStream rng(seed, stream);
  Rollout r;
  r.plant = plant.name();
  r.seed = seed;
  const int sd = plant.state_dim();
  const int ud = plant.action_dim();
  r.S.resize(sd, horizon + 1);
  r.U.resize(ud, horizon);
  r.Y.resize(plant.output_dim(), horizon);
  r.rewards.resize(horizon);

  const Vector lo = plant.action_lower();
  const Vector hi = plant.action_upper();
  Vector s = plant.initial_state(rng);
  r.S.col(0) = s;
  for (int t = 0; t < horizon; ++t) {
    Vector u(ud);
    if (controller) {
      u = (*controller)(s, t);
      if (!u.allFinite())
        throw std::runtime_error("dagger_aggregate: controller emitted a "
                                 "non-finite action at step " + std::to_string(t));
      for (int i = 0; i < ud; ++i)
        u[i] += rng.gaussian(0.0, noise_sigma) * 0.5 * (hi[i] - lo[i]);
    } else {
      for (int i = 0; i < ud; ++i) u[i] = rng.uniform(lo[i], hi[i]);
    }
    u = u.cwiseMax(lo).cwiseMin(hi);
    StepResult step = plant.step(s, u, t);
    if (!step.next_state.allFinite())
      throw std::runtime_error("rollout: plant produced non-finite state at step " +
                               std::to_string(t));
    r.U.col(t) = u;
    r.Y.col(t) = step.output;
    r.rewards[t] = step.reward;
    s = step.next_state;
    r.S.col(t + 1) = s;
  }
  return r;
}

}  // namespace

std::vector<Rollout> collect_random_rollouts(const Plant& plant, int n,
                                             int horizon, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("collect_random_rollouts: n must be >= 1");
  if (horizon < 1) throw std::invalid_argument("collect_random_rollouts: horizon must be >= 1");
  std::vector<Rollout> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    try {
      out.push_back(run_rollout(plant, horizon, nullptr, 0.0, seed, i));
    } catch (const std::exception& e) {
      throw std::runtime_error("rollout " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Rollout> dagger_aggregate(const Plant& plant, Controller controller,
                                      const Retrain& retrain,
                                      const DaggerConfig& config) {
  std::vector<Rollout> dataset = collect_random_rollouts(
      plant, config.rollouts_per_iter, config.horizon, config.seed);
  std::uint64_t stream = 1000;
  for (int iter = 0; iter < config.iterations; ++iter) {
    const int n_rand = std::max(
        1, static_cast<int>(std::lround(config.random_mix * config.rollouts_per_iter)));
    const int n_on = config.rollouts_per_iter - n_rand;
    try {
      for (int i = 0; i < n_on; ++i)
        dataset.push_back(run_rollout(plant, config.horizon, &controller,
                                      config.noise_sigma, config.seed, stream++));
      for (int i = 0; i < n_rand; ++i)
        dataset.push_back(run_rollout(plant, config.horizon, nullptr, 0.0,
                                      config.seed, stream++));
    } catch (const std::exception& e) {
      throw std::runtime_error("dagger iteration " + std::to_string(iter) + ": " +
                               e.what());
    }
    controller = retrain(dataset);
  }
  return dataset;
}

WindowDataset make_windows(const std::vector<Rollout>& rollouts, int n_w) {
  if (rollouts.empty()) throw std::invalid_argument("make_windows: no rollouts");
  if (n_w < 1) throw std::invalid_argument("make_windows: n_w must be >= 1");
  WindowDataset ds;
  ds.state_dim = static_cast<int>(rollouts.front().S.rows());
  ds.action_dim = static_cast<int>(rollouts.front().U.rows());
  ds.n_w = n_w;
  const int L = n_w + 1;
  for (const auto& r : rollouts) {
    r.validate();
    const int H = r.horizon();
    if (n_w >= H)
      throw std::invalid_argument("make_windows: n_w must be < rollout length");
    for (int end = n_w; end < H; ++end) {
      const int start = end - n_w;
      const Matrix frames = assemble_frames(r.S.middleCols(start, L),
                                            r.U.middleCols(start, L));
      Vector mask = Vector::Zero(L);
      mask[L - 1] = 1.0;

      IcrnnSequence fw;
      fw.frames = frames;
      fw.targets = Matrix::Zero(r.Y.rows(), L);
      fw.targets.col(L - 1) = r.Y.col(end);
      fw.mask = mask;
      ds.output_windows.push_back(std::move(fw));

      IcrnnSequence gw;
      gw.frames = frames;
      gw.targets = Matrix::Zero(r.S.rows(), L);
      gw.targets.col(L - 1) = r.S.col(end + 1);
      gw.mask = mask;
      ds.state_windows.push_back(std::move(gw));
    }
  }
  return ds;
}

std::pair<std::vector<Rollout>, std::vector<Rollout>> chronological_split(
    const std::vector<Rollout>& rollouts, double ratio) {
  if (ratio <= 0.0 || ratio >= 1.0)
    throw std::invalid_argument("chronological_split: ratio must be in (0,1)");
  const int n = static_cast<int>(rollouts.size());
  const int boundary = static_cast<int>(std::lround(ratio * n));
  if (boundary < 1 || boundary >= n)
    throw std::invalid_argument("chronological_split: a side would be empty");
  return {std::vector<Rollout>(rollouts.begin(), rollouts.begin() + boundary),
          std::vector<Rollout>(rollouts.begin() + boundary, rollouts.end())};
}

SampleSplit shuffled_split(const Matrix& X, const Matrix& Y, double ratio,
                           std::uint64_t seed) {
  if (ratio <= 0.0 || ratio >= 1.0)
    throw std::invalid_argument("shuffled_split: ratio must be in (0,1)");
  const int n = static_cast<int>(X.cols());
  if (Y.cols() != n) throw std::invalid_argument("shuffled_split: X/Y mismatch");
  const int n_train = static_cast<int>(std::lround(ratio * n));
  if (n_train < 1 || n_train >= n)
    throw std::invalid_argument("shuffled_split: a side would be empty");
  RngStream rng(seed, 5);
  const std::vector<int> perm = rng.permutation(n);
  SampleSplit s;
  s.train_x.resize(X.rows(), n_train);
  s.train_y.resize(Y.rows(), n_train);
  s.test_x.resize(X.rows(), n - n_train);
  s.test_y.resize(Y.rows(), n - n_train);
  for (int j = 0; j < n; ++j) {
    if (j < n_train) {
      s.train_x.col(j) = X.col(perm[j]);
      s.train_y.col(j) = Y.col(perm[j]);
    } else {
      s.test_x.col(j - n_train) = X.col(perm[j]);
      s.test_y.col(j - n_train) = Y.col(perm[j]);
    }
  }
  return s;
}

namespace {

void format_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace

void write_rollouts_csv(const std::string& path,
                        const std::vector<Rollout>& rollouts) {
  if (rollouts.empty()) throw std::invalid_argument("write_rollouts_csv: no rollouts");
  const std::string tmp = path + ".tmp";
  std::ofstream os(tmp);
  if (!os) throw std::runtime_error("write_rollouts_csv: cannot open " + tmp);
  const auto& first = rollouts.front();
  os << "rollout,t";
  for (int i = 0; i < first.S.rows(); ++i) os << ",s" << i;
  for (int i = 0; i < first.U.rows(); ++i) os << ",u" << i;
  for (int i = 0; i < first.Y.rows(); ++i) os << ",y" << i;
  os << ",reward\n";
  for (size_t k = 0; k < rollouts.size(); ++k) {
    const auto& r = rollouts[k];
    for (int t = 0; t < r.horizon(); ++t) {
      os << k << "," << t;
      for (int i = 0; i < r.S.rows(); ++i) {
        os << ",";
        format_double(os, r.S(i, t));
      }
      for (int i = 0; i < r.U.rows(); ++i) {
        os << ",";
        format_double(os, r.U(i, t));
      }
      for (int i = 0; i < r.Y.rows(); ++i) {
        os << ",";
        format_double(os, r.Y(i, t));
      }
      os << ",";
      format_double(os, r.rewards[t]);
      os << "\n";
    }
    // Trailing state row: s_H with no action.
    os << k << "," << r.horizon();
    for (int i = 0; i < r.S.rows(); ++i) {
      os << ",";
      format_double(os, r.S(i, r.horizon()));
    }
    for (int i = 0; i < r.U.rows() + r.Y.rows(); ++i) os << ",";
    os << ",\n";
  }
  os.close();
  std::filesystem::rename(tmp, path);
}

std::vector<Rollout> read_rollouts_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_rollouts_csv: cannot open " + path);
  std::string header;
  if (!std::getline(is, header))
    throw std::runtime_error("read_rollouts_csv: empty file");
  int sd = 0, ud = 0, yd = 0;
  {
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("s", 0) == 0 && col != "reward") ++sd;
      else if (col.rfind("u", 0) == 0) ++ud;
      else if (col.rfind("y", 0) == 0) ++yd;
    }
  }
  if (sd == 0) throw std::runtime_error("read_rollouts_csv: bad header");

  struct Row {
    int rollout, t;
    std::vector<double> vals;
    bool has_action;
  };
  std::vector<Row> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Row row;
    std::getline(ss, cell, ',');
    row.rollout = std::stoi(cell);
    std::getline(ss, cell, ',');
    row.t = std::stoi(cell);
    row.has_action = true;
    while (std::getline(ss, cell, ',')) {
      if (cell.empty()) {
        row.has_action = false;
        row.vals.push_back(0.0);
      } else {
        row.vals.push_back(std::stod(cell));
      }
    }
    rows.push_back(std::move(row));
  }

  std::vector<Rollout> out;
  for (const auto& row : rows) {
    if (row.rollout == static_cast<int>(out.size())) {
      out.emplace_back();
      out.back().S.resize(sd, 0);
      out.back().U.resize(ud, 0);
      out.back().Y.resize(yd, 0);
    }
    Rollout& r = out.back();
    const int t = row.t;
    if (r.S.cols() <= t) r.S.conservativeResize(sd, t + 1);
    for (int i = 0; i < sd; ++i) r.S(i, t) = row.vals[i];
    if (row.has_action) {
      if (r.U.cols() <= t) {
        r.U.conservativeResize(ud, t + 1);
        r.Y.conservativeResize(yd, t + 1);
        r.rewards.conservativeResize(t + 1);
      }
      for (int i = 0; i < ud; ++i) r.U(i, t) = row.vals[sd + i];
      for (int i = 0; i < yd; ++i) r.Y(i, t) = row.vals[sd + ud + i];
      r.rewards[t] = row.vals[sd + ud + yd];
    }
  }
  for (auto& r : out) r.validate();
  return out;
}

}  // namespace icx
