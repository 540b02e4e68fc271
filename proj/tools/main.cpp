#include "icx/control.hpp"
#include "icx/experiments.hpp"
#include "icx/icnn.hpp"
#include "icx/icrnn.hpp"
#include "icx/maxaffine.hpp"
#include "icx/plants.hpp"
#include "icx/serialize.hpp"
#include "icx/sysid.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace {

constexpr const char* kVersion = "0.1.0";

using icx::Json;
using icx::Matrix;
using icx::Vector;

// Exit contract: 0 success, 1 verification failure, 2 usage/IO error.
constexpr int kOk = 0;
constexpr int kVerifyFail = 1;
constexpr int kUsage = 2;

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%FT%TZ", std::gmtime(&tt));
  return buf;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot open " + tmp);
    os << text;
    if (!os) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Manifest next to every artifact set; wall-clock lives only here so the
/// data files themselves stay byte-reproducible.
void write_manifest(const std::string& out_prefix, const std::string& command,
                    const Json& config, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  Json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = config.contains("seed") ? config["seed"] : Json(nullptr);
  m["version"] = kVersion;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["wall_clock"] = iso_now();
  icx::save_json(out_prefix + ".manifest.json", m);
}

// Plain x/y sample CSV: header x0..x{d-1},y0..y{m-1}, one sample per row.
struct XyData {
  Matrix X, Y;
};

XyData read_xy_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty CSV " + path);
  int d = 0, m = 0;
  {
    std::stringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.rfind("x", 0) == 0)
        ++d;
      else if (col.rfind("y", 0) == 0)
        ++m;
      else
        throw std::runtime_error("unexpected column '" + col + "' in " + path);
    }
  }
  if (d == 0 || m == 0) throw std::runtime_error("need x* and y* columns in " + path);
  std::vector<double> vals;
  long rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    int got = 0;
    while (std::getline(ls, cell, ',')) {
      vals.push_back(std::stod(cell));
      ++got;
    }
    if (got != d + m) throw std::runtime_error("ragged row in " + path);
    ++rows;
  }
  XyData data;
  data.X.resize(d, rows);
  data.Y.resize(m, rows);
  for (long j = 0; j < rows; ++j) {
    for (int i = 0; i < d; ++i) data.X(i, j) = vals[j * (d + m) + i];
    for (int i = 0; i < m; ++i) data.Y(i, j) = vals[j * (d + m) + d + i];
  }
  return data;
}

void write_loss_csv(const std::string& path, const std::vector<double>& loss) {
  std::string text = "epoch,loss\n";
  for (size_t i = 0; i < loss.size(); ++i)
    text += std::to_string(i) + "," + fmt17(loss[i]) + "\n";
  write_text_atomic(path, text);
}

Json norm_bundle_to_json(const icx::NormalizationSpec& s,
                         const icx::NormalizationSpec& u,
                         const icx::NormalizationSpec& y, int n_w) {
  Json j;
  j["type"] = "normalization-bundle";
  j["n_w"] = n_w;
  j["s"] = icx::normalization_to_json(s);
  j["u"] = icx::normalization_to_json(u);
  j["y"] = icx::normalization_to_json(y);
  return j;
}

void norm_bundle_from_json(const Json& j, icx::NormalizationSpec& s,
                           icx::NormalizationSpec& u, icx::NormalizationSpec& y,
                           int& n_w) {
  if (j.value("type", "") != "normalization-bundle")
    throw std::runtime_error("expected a normalization-bundle file");
  n_w = j.at("n_w").get<int>();
  s = icx::normalization_from_json(j.at("s"));
  u = icx::normalization_from_json(j.at("u"));
  y = icx::normalization_from_json(j.at("y"));
}

void write_trajectory_csv(const std::string& path,
                          const icx::ClosedLoopTrace& trace, long t0) {
  const int steps = static_cast<int>(trace.U.cols());
  std::string text = "t";
  for (int i = 0; i < trace.S.rows(); ++i) text += ",s" + std::to_string(i);
  for (int i = 0; i < trace.U.rows(); ++i) text += ",u" + std::to_string(i);
  for (int i = 0; i < trace.Y.rows(); ++i) text += ",y" + std::to_string(i);
  text += ",objective,iterations,violation\n";
  for (int k = 0; k < steps; ++k) {
    text += std::to_string(t0 + k);
    for (int i = 0; i < trace.S.rows(); ++i) text += "," + fmt17(trace.S(i, k));
    for (int i = 0; i < trace.U.rows(); ++i) text += "," + fmt17(trace.U(i, k));
    for (int i = 0; i < trace.Y.rows(); ++i) text += "," + fmt17(trace.Y(i, k));
    const bool have = static_cast<size_t>(k) < trace.objectives.size();
    text += have ? "," + fmt17(trace.objectives[k]) : ",";
    text += static_cast<size_t>(k) < trace.iterations.size()
                ? "," + std::to_string(trace.iterations[k])
                : ",";
    text += static_cast<size_t>(k) < trace.violations.size()
                ? "," + fmt17(trace.violations[k])
                : ",";
    text += "\n";
  }
  write_text_atomic(path, text);
}

// ---------------------------------------------------------------------------
// dataset

int cmd_dataset(const std::string& plant_name, int rollouts, int horizon,
                std::uint64_t seed, const std::string& out) {
  const auto plant = icx::make_plant(plant_name);
  const auto data = icx::collect_random_rollouts(*plant, rollouts, horizon, seed);
  icx::write_rollouts_csv(out, data);
  Json config{{"plant", plant_name}, {"rollouts", rollouts},
              {"horizon", horizon}, {"seed", seed}, {"out", out}};
  write_manifest(out, "dataset", config, {}, {out});
  std::cout << "wrote " << out << " (" << rollouts << " rollouts x " << horizon
            << " steps)\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// train

int cmd_train_icnn(const std::string& data_path, const std::string& out,
                   std::vector<int> hidden, int epochs, double lr,
                   std::uint64_t seed) {
  const XyData data = read_xy_csv(data_path);
  icx::IcnnTrainConfig cfg;
  cfg.hidden_widths = hidden.empty() ? std::vector<int>{16} : hidden;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.seed = seed;
  const auto result = icx::train_icnn(data.X, data.Y, cfg);
  icx::save_json(out + ".model.json", icx::icnn_to_json(result.model));
  write_loss_csv(out + ".loss.csv", result.loss_history);

  // Identity spec on each input dim: the xy format is already model-space.
  icx::NormalizationSpec id;
  id.lo = Vector::Constant(data.X.rows(), -1.0);
  id.hi = Vector::Constant(data.X.rows(), 1.0);
  icx::save_json(out + ".norm.json", icx::normalization_to_json(id));

  Json config{{"kind", "icnn"}, {"data", data_path}, {"out", out},
              {"hidden", cfg.hidden_widths}, {"epochs", epochs}, {"lr", lr},
              {"seed", seed}};
  write_manifest(out, "train", config, {data_path},
                 {out + ".model.json", out + ".norm.json", out + ".loss.csv"});
  std::cout << "final loss " << result.loss_history.back() << "\n";
  return kOk;
}

int cmd_train_icrnn(const std::string& data_path, const std::string& out,
                    const std::string& target, int n_w, int hidden, int epochs,
                    double lr, bool negate_output, std::uint64_t seed) {
  auto rollouts = icx::read_rollouts_csv(data_path);
  if (negate_output)
    for (auto& r : rollouts) r.Y = (-r.Y.array()).matrix();

  Matrix states(rollouts.front().S.rows(), 0);
  Matrix actions(rollouts.front().U.rows(), 0);
  Matrix outputs(rollouts.front().Y.rows(), 0);
  for (const auto& r : rollouts) {
    states.conservativeResize(Eigen::NoChange, states.cols() + r.S.cols());
    states.rightCols(r.S.cols()) = r.S;
    actions.conservativeResize(Eigen::NoChange, actions.cols() + r.U.cols());
    actions.rightCols(r.U.cols()) = r.U;
    outputs.conservativeResize(Eigen::NoChange, outputs.cols() + r.Y.cols());
    outputs.rightCols(r.Y.cols()) = r.Y;
  }
  const auto s_norm = icx::NormalizationSpec::fit(states);
  const auto u_norm = icx::NormalizationSpec::fit(actions);
  const auto y_norm = icx::NormalizationSpec::fit(outputs);
  for (auto& r : rollouts) {
    r.S = s_norm.normalize_cols(r.S);
    r.U = u_norm.normalize_cols(r.U);
    r.Y = y_norm.normalize_cols(r.Y);
  }
  const auto windows = icx::make_windows(rollouts, n_w);
  const auto& seqs = (target == "state") ? windows.state_windows
                                         : windows.output_windows;
  icx::IcrnnTrainConfig cfg;
  cfg.hidden_dim = hidden;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.seed = seed;
  const auto result = icx::train_icrnn(seqs, n_w, cfg);
  icx::save_json(out + ".model.json", icx::icrnn_to_json(result.model));
  icx::save_json(out + ".norm.json",
                 norm_bundle_to_json(s_norm, u_norm, y_norm, n_w));
  write_loss_csv(out + ".loss.csv", result.loss_history);

  Json config{{"kind", "icrnn"}, {"data", data_path}, {"out", out},
              {"target", target}, {"n_w", n_w}, {"hidden", hidden},
              {"epochs", epochs}, {"lr", lr}, {"negate_output", negate_output},
              {"seed", seed}};
  write_manifest(out, "train", config, {data_path},
                 {out + ".model.json", out + ".norm.json", out + ".loss.csv"});
  std::cout << "final loss " << result.loss_history.back() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// construct / enumerate

int cmd_construct(const std::string& model_path, const std::string& out) {
  const Json j = icx::load_json(model_path);
  if (icx::json_model_type(j) != "maxaffine")
    throw std::runtime_error("construct expects a maxaffine model file");
  const auto f = icx::maxaffine_from_json(j);
  const auto icnn = icx::compile_to_icnn(f);
  icx::save_json(out, icx::icnn_to_json(icnn));
  Json config{{"model", model_path}, {"out", out}};
  write_manifest(out, "construct", config, {model_path}, {out});
  std::cout << "compiled " << f.piece_count() << " pieces into "
            << icnn.layer_count() - 1 << " hidden layers\n";
  return kOk;
}

int cmd_enumerate(const std::string& model_path, const std::string& out) {
  const Json j = icx::load_json(model_path);
  if (icx::json_model_type(j) != "icnn")
    throw std::runtime_error("enumerate expects an icnn model file");
  const auto icnn = icx::icnn_from_json(j);
  const auto f = icx::enumerate_pieces(icnn);
  icx::save_json(out, icx::maxaffine_to_json(f));
  Json config{{"model", model_path}, {"out", out}};
  write_manifest(out, "enumerate", config, {model_path}, {out});
  std::cout << "enumerated " << f.piece_count() << " pieces\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// control

int control_battery(const std::string& objective, int horizon, int episode,
                    std::uint64_t seed, int shooting_k, const std::string& out,
                    const Json& config) {
  icx::BatteryParams bp;
  bp.base = 1.0;  // keeps per-step objectives away from zero
  const icx::BatteryPlant plant(bp);
  icx::RngStream init(seed, 0);
  const Vector s0 = plant.initial_state(init);
  const icx::TouProfile tou;

  auto cost_for = [&](long t, int T) {
    icx::CostSpec cost;
    cost.kind = icx::CostKind::SumOutputs;
    if (objective == "tou") {
      cost.action_prices.resize(T);
      for (int tau = 0; tau < T; ++tau)
        cost.action_prices[tau] = icx::tou_price(tou, t + tau);
    }
    return cost;
  };
  const Vector soc_lo = Vector::Constant(1, 0.05);
  const Vector soc_hi = Vector::Constant(1, 0.95);
  const icx::BoxBounds box{plant.action_lower(), plant.action_upper()};

  auto run = [&](bool use_mpc) {
    auto trace = std::make_shared<icx::ClosedLoopTrace>();
    Matrix warm;
    icx::Policy policy = [&, trace, warm](const Vector& s, long t) mutable {
      icx::BatteryHorizonModel model(plant, s[0], horizon);
      const auto cost = cost_for(t, horizon);
      if (use_mpc) {
        icx::MpcConfig cfg;
        cfg.seed = seed;
        if (warm.size() > 0) cfg.warm_start = warm;
        const auto sol = icx::mpc_solve(model, box, cost, soc_lo, soc_hi, cfg);
        trace->objectives.push_back(sol.objective);
        trace->violations.push_back(sol.violation);
        trace->iterations.push_back(sol.iterations);
        warm = sol.actions;
        return Vector(sol.actions.col(0));
      }
      const auto sol = icx::random_shooting(model, box, cost, soc_lo, soc_hi,
                                            1e4, shooting_k,
                                            seed + static_cast<std::uint64_t>(t));
      trace->objectives.push_back(sol.objective);
      return Vector(sol.actions.col(0));
    };
    auto loop = icx::run_closed_loop(plant, s0, 0, episode, policy);
    loop.objectives = trace->objectives;
    loop.violations = trace->violations;
    loop.iterations = trace->iterations;
    return loop;
  };

  const auto mpc_trace = run(true);
  const auto shoot_trace = run(false);

  auto realized = [&](const icx::ClosedLoopTrace& tr) {
    double total = 0.0;
    for (int k = 0; k < episode; ++k) {
      total += tr.Y(0, k);
      if (objective == "tou")
        total += icx::tou_price(tou, k) * tr.U(0, k);
    }
    return total;
  };
  const double mpc_cost = realized(mpc_trace);
  const double shoot_cost = realized(shoot_trace);

  write_trajectory_csv(out + ".traj.csv", mpc_trace, 0);
  Json metrics;
  metrics["total_cost"] = mpc_cost;
  metrics["baseline"] = "random-shooting";
  metrics["baseline_total_cost"] = shoot_cost;
  metrics["saving_vs_baseline_pct"] =
      shoot_cost != 0.0 ? 100.0 * (shoot_cost - mpc_cost) / std::abs(shoot_cost)
                        : 0.0;
  double max_violation = 0.0;
  for (double v : mpc_trace.violations) max_violation = std::max(max_violation, v);
  metrics["max_violation"] = max_violation;
  icx::save_json(out + ".metrics.json", metrics);
  write_manifest(out, "control", config, {},
                 {out + ".traj.csv", out + ".metrics.json"});
  std::cout << "total cost " << mpc_cost << " (baseline " << shoot_cost << ")\n";
  return kOk;
}

int control_rc_thermal(const std::string& objective, int horizon, int episode,
                       std::uint64_t seed, const std::string& model_path,
                       const std::string& dynamics_path,
                       const std::string& norm_path, const std::string& out,
                       const Json& config) {
  if (model_path.empty() || dynamics_path.empty() || norm_path.empty())
    throw std::runtime_error(
        "rc-thermal control needs --model, --dynamics and --norm");
  icx::BuildingModels models;
  models.f = icx::icrnn_from_json(icx::load_json(model_path));
  models.g = icx::icrnn_from_json(icx::load_json(dynamics_path));
  norm_bundle_from_json(icx::load_json(norm_path), models.s_norm, models.u_norm,
                        models.y_norm, models.n_w);
  const icx::RcThermalPlant plant;
  if (models.s_norm.dim() != plant.state_dim() ||
      models.u_norm.dim() != plant.action_dim())
    throw std::runtime_error("normalization spec does not match the plant");

  const icx::TouProfile tou;
  std::function<double(long)> price;
  if (objective == "tou")
    price = [tou](long t) { return icx::tou_price(tou, t); };

  icx::BuildingIcrnnPolicy::Options opt;
  opt.horizon = horizon;
  opt.price = price;
  opt.mpc.seed = seed;
  auto policy = std::make_shared<icx::BuildingIcrnnPolicy>(plant, models, opt);

  icx::RngStream init(seed, 0);
  const Vector s0 = plant.initial_state(init);
  auto trace = icx::run_closed_loop(plant, s0, 0, episode,
                                    icx::wrap_policy(policy));
  trace.objectives = policy->objectives();
  trace.violations = policy->violations();
  trace.iterations = policy->iterations();

  auto base_trace = icx::run_closed_loop(plant, s0, 0, episode,
                                         icx::thermostat_policy(plant, 21.5));

  const auto m = icx::building_metrics(trace, 0, opt.comfort_lo, opt.comfort_hi,
                                       plant.params().zones, &tou, price);
  const auto mb = icx::building_metrics(base_trace, 0, opt.comfort_lo,
                                        opt.comfort_hi, plant.params().zones,
                                        &tou, price);

  write_trajectory_csv(out + ".traj.csv", trace, 0);
  Json metrics;
  metrics["total_cost"] = m.total_cost;
  metrics["total_energy"] = m.total_energy;
  metrics["peak_energy"] = m.peak_energy;
  metrics["max_temp_violation"] = m.max_temp_violation;
  metrics["baseline"] = "fixed-setpoint";
  metrics["baseline_total_cost"] = mb.total_cost;
  metrics["baseline_total_energy"] = mb.total_energy;
  metrics["baseline_peak_energy"] = mb.peak_energy;
  metrics["saving_vs_baseline_pct"] =
      100.0 * (mb.total_cost - m.total_cost) / mb.total_cost;
  icx::save_json(out + ".metrics.json", metrics);
  write_manifest(out, "control", config, {model_path, dynamics_path, norm_path},
                 {out + ".traj.csv", out + ".metrics.json"});
  std::cout << "total cost " << m.total_cost << " (baseline " << mb.total_cost
            << ", saving " << metrics["saving_vs_baseline_pct"] << "%)\n";
  return kOk;
}

int control_point_mass(int horizon, int episode, std::uint64_t seed,
                       const std::string& model_path,
                       const std::string& dynamics_path,
                       const std::string& norm_path, int shooting_k,
                       const std::string& out, const Json& config) {
  if (model_path.empty() || dynamics_path.empty() || norm_path.empty())
    throw std::runtime_error(
        "point-mass control needs --model, --dynamics and --norm");
  const icx::PointMassPlant plant;
  icx::IcrnnModel f = icx::icrnn_from_json(icx::load_json(model_path));
  icx::IcrnnModel g = icx::icrnn_from_json(icx::load_json(dynamics_path));
  icx::NormalizationSpec s_norm, u_norm, y_norm;
  int n_w = 0;
  norm_bundle_from_json(icx::load_json(norm_path), s_norm, u_norm, y_norm, n_w);
  if (s_norm.dim() != plant.state_dim() || u_norm.dim() != plant.action_dim())
    throw std::runtime_error("normalization spec does not match the plant");

  const int sd = plant.state_dim(), ud = plant.action_dim();
  const icx::BoxBounds box{u_norm.normalize(plant.action_lower()),
                           u_norm.normalize(plant.action_upper())};
  const Vector no_lo, no_hi;
  icx::CostSpec cost;  // f is trained on the negated reward
  cost.kind = icx::CostKind::SumOutputs;

  auto run = [&](bool use_mpc) {
    auto state = std::make_shared<std::pair<Matrix, Matrix>>();  // history, warm
    icx::Policy policy = [&, state](const Vector& s_raw, long t) {
      const Vector s_n = s_norm.normalize(s_raw);
      auto& [history, warm] = *state;
      if (history.size() == 0) {
        Vector frame = Vector::Zero(sd + 2 * ud);
        frame.head(sd) = s_n;
        history = frame.replicate(1, n_w);
      }
      icx::IcrnnHorizonModel model(f, g, history, s_n, horizon);
      Vector u_n;
      if (use_mpc) {
        icx::MpcConfig cfg;
        cfg.seed = seed;
        if (warm.size() > 0) cfg.warm_start = warm;
        const auto sol = icx::mpc_solve(model, box, cost, no_lo, no_hi, cfg);
        warm = sol.actions;
        u_n = sol.actions.col(0);
      } else {
        const auto sol =
            icx::random_shooting(model, box, cost, no_lo, no_hi, 0.0,
                                 shooting_k, seed + static_cast<std::uint64_t>(t));
        u_n = sol.actions.col(0);
      }
      Vector frame(sd + 2 * ud);
      frame << s_n, u_n, -u_n;
      history.leftCols(n_w - 1) = history.rightCols(n_w - 1).eval();
      history.col(n_w - 1) = frame;
      return Vector(u_norm.denormalize(u_n));
    };
    icx::RngStream init(seed, 0);
    return icx::run_closed_loop(plant, plant.initial_state(init), 0, episode,
                                policy);
  };

  const auto mpc_trace = run(true);
  const auto shoot_trace = run(false);
  write_trajectory_csv(out + ".traj.csv", mpc_trace, 0);
  Json metrics;
  metrics["total_reward"] = mpc_trace.rewards.sum();
  metrics["baseline"] = "random-shooting";
  metrics["baseline_total_reward"] = shoot_trace.rewards.sum();
  metrics["shooting_k"] = shooting_k;
  icx::save_json(out + ".metrics.json", metrics);
  write_manifest(out, "control", config, {model_path, dynamics_path, norm_path},
                 {out + ".traj.csv", out + ".metrics.json"});
  std::cout << "total reward " << mpc_trace.rewards.sum() << " (shooting "
            << shoot_trace.rewards.sum() << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const std::string& suite, const std::string& model_path,
               long samples, std::uint64_t seed, const std::string& out) {
  const Json j = model_path.empty() ? Json() : icx::load_json(model_path);
  Json report;
  report["suite"] = suite;
  report["samples"] = samples;
  bool pass = false;
  double max_violation = 0.0;
  Json offender;

  icx::RngStream rng(seed, 9);
  if (suite == "convexity") {
    const std::string type = icx::json_model_type(j);
    double tol = 1e-8;
    if (type == "icnn") {
      const auto model = icx::icnn_from_json(j);
      const int d = model.input_dim;
      for (long k = 0; k < samples; ++k) {
        const Vector a = rng.uniform_vector(d, -2.0, 2.0);
        const Vector b = rng.uniform_vector(d, -2.0, 2.0);
        const Vector fa = icx::icnn_forward(model, a);
        const Vector fb = icx::icnn_forward(model, b);
        const Vector fm = icx::icnn_forward(model, 0.5 * (a + b));
        const double v = (fm - 0.5 * (fa + fb)).maxCoeff();
        if (v > max_violation) {
          max_violation = v;
          offender = {{"a", icx::to_json(a)}, {"b", icx::to_json(b)}};
        }
      }
    } else if (type == "icrnn") {
      const auto model = icx::icrnn_from_json(j);
      const int L = std::max(2, model.n_w + 1);
      for (long k = 0; k < samples; ++k) {
        const Matrix a = Matrix::NullaryExpr(
            model.in_dim, L, [&](Eigen::Index, Eigen::Index) {
              return rng.uniform(-2.0, 2.0);
            });
        const Matrix b = Matrix::NullaryExpr(
            model.in_dim, L, [&](Eigen::Index, Eigen::Index) {
              return rng.uniform(-2.0, 2.0);
            });
        const Matrix fa = icx::icrnn_forward(model, a).Y;
        const Matrix fb = icx::icrnn_forward(model, b).Y;
        const Matrix fm = icx::icrnn_forward(model, 0.5 * (a + b)).Y;
        const double v = (fm - 0.5 * (fa + fb)).maxCoeff();
        if (v > max_violation) {
          max_violation = v;
          offender = {{"sample", k}};
        }
      }
    } else {
      throw std::runtime_error("convexity suite expects icnn or icrnn");
    }
    pass = max_violation < tol;
    report["tolerance"] = tol;
  } else if (suite == "gradients") {
    const auto model = icx::icnn_from_json(j);
    const double tol = 1e-4;
    for (long k = 0; k < samples; ++k) {
      const Vector u = rng.uniform_vector(model.input_dim, -2.0, 2.0);
      const Vector g = icx::icnn_grad_input(model, u);
      const Vector fd = icx::finite_difference_gradient(
          [&](const Vector& x) { return icx::icnn_forward(model, x)[0]; }, u);
      const double v = icx::rel_error(g, fd);
      if (v > max_violation) {
        max_violation = v;
        offender = {{"u", icx::to_json(u)}};
      }
    }
    pass = max_violation < tol;
    report["tolerance"] = tol;
  } else if (suite == "theorem1") {
    icx::MaxAffine f;
    if (!j.is_null() && !j.empty()) {
      f = icx::maxaffine_from_json(j);
    } else {
      f.A = Matrix::NullaryExpr(8, 3, [&](Eigen::Index, Eigen::Index) {
        return rng.uniform(-2.0, 2.0);
      });
      f.b = rng.uniform_vector(8, -1.0, 1.0);
    }
    const auto icnn = icx::compile_to_icnn(f);
    for (long k = 0; k < samples; ++k) {
      const Vector x = rng.uniform_vector(f.input_dim(), -5.0, 5.0);
      const double v =
          std::abs(icx::icnn_forward(icnn, x)[0] - icx::maxaffine_eval(f, x));
      if (v > max_violation) {
        max_violation = v;
        offender = {{"x", icx::to_json(x)}};
      }
    }
    pass = max_violation < 1e-9;
    report["tolerance"] = 1e-9;
  } else if (suite == "theorem2") {
    const auto icnn = icx::icnn_from_json(j);
    const auto f = icx::enumerate_pieces(icnn);
    for (long k = 0; k < samples; ++k) {
      const Vector x = rng.uniform_vector(icnn.input_dim, -5.0, 5.0);
      const double v =
          std::abs(icx::icnn_forward(icnn, x)[0] - icx::maxaffine_eval(f, x));
      if (v > max_violation) {
        max_violation = v;
        offender = {{"x", icx::to_json(x)}};
      }
    }
    pass = max_violation < 1e-9;
    report["tolerance"] = 1e-9;
    report["pieces"] = f.piece_count();
  } else {
    throw std::runtime_error("unknown suite '" + suite + "'");
  }

  report["pass"] = pass;
  report["max_violation"] = max_violation;
  report["offending_sample"] = offender;
  if (!out.empty()) {
    icx::save_json(out, report);
    Json config{{"suite", suite}, {"model", model_path}, {"samples", samples},
                {"seed", seed}, {"out", out}};
    write_manifest(out, "verify", config,
                   model_path.empty() ? std::vector<std::string>{}
                                      : std::vector<std::string>{model_path},
                   {out});
  }
  std::cout << (pass ? "PASS" : "FAIL") << " max violation " << max_violation
            << "\n";
  return pass ? kOk : kVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"input-convex model toolkit"};
  app.require_subcommand(1);

  // Config file values sit between defaults and flags.
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags override)");
  Json file_cfg;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") {
      try {
        file_cfg = icx::load_json(argv[i + 1]);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
      }
    }
  auto cfg_or = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    if (file_cfg.contains(key)) return file_cfg.at(key).get<T>();
    return fallback;
  };

  std::uint64_t seed = cfg_or("seed", std::uint64_t{0});
  std::string data = cfg_or("data", std::string{});
  std::string model = cfg_or("model", std::string{});
  std::string dynamics = cfg_or("dynamics", std::string{});
  std::string norm = cfg_or("norm", std::string{});
  std::string out = cfg_or("out", std::string{"out"});
  std::string plant = cfg_or("plant", std::string{"battery"});
  std::string objective = cfg_or("objective", std::string{"energy"});
  int horizon = cfg_or("horizon", 4);
  int k = cfg_or("k", 100);
  double tol = cfg_or("tol", 1e-6);
  int max_iters = cfg_or("max_iters", 2000);
  (void)tol;
  (void)max_iters;

  auto* ds = app.add_subcommand("dataset", "collect random rollouts to CSV");
  int ds_rollouts = cfg_or("rollouts", 10);
  int ds_horizon = cfg_or("horizon", 200);
  ds->add_option("--plant", plant);
  ds->add_option("--rollouts", ds_rollouts);
  ds->add_option("--horizon", ds_horizon);
  ds->add_option("--seed", seed);
  ds->add_option("--out", out);

  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  std::string kind = cfg_or("kind", std::string{"icnn"});
  std::string target = cfg_or("target", std::string{"output"});
  std::vector<int> hidden = cfg_or("hidden", std::vector<int>{16});
  int epochs = cfg_or("epochs", 200);
  double lr = cfg_or("lr", 1e-3);
  int n_w = cfg_or("n_w", 8);
  bool negate_output = cfg_or("negate_output", false);
  tr->add_option("--kind", kind)->check(CLI::IsMember({"icnn", "icrnn"}));
  tr->add_option("--data", data)->required();
  tr->add_option("--out", out);
  tr->add_option("--target", target)->check(CLI::IsMember({"output", "state"}));
  tr->add_option("--hidden", hidden);
  tr->add_option("--epochs", epochs);
  tr->add_option("--lr", lr);
  tr->add_option("--n-w", n_w);
  tr->add_flag("--negate-output", negate_output);
  tr->add_option("--seed", seed);

  auto* co = app.add_subcommand("construct", "compile maxaffine to icnn");
  co->add_option("--model", model)->required();
  co->add_option("--out", out);

  auto* en = app.add_subcommand("enumerate", "expand one-layer icnn to maxaffine");
  en->add_option("--model", model)->required();
  en->add_option("--out", out);

  auto* ct = app.add_subcommand("control", "closed-loop MPC run with metrics");
  int episode = cfg_or("episode", 48);
  ct->add_option("--plant", plant)
      ->check(CLI::IsMember({"battery", "rc-thermal", "point-mass"}));
  ct->add_option("--objective", objective)
      ->check(CLI::IsMember({"energy", "tou", "reward", "quadratic"}));
  ct->add_option("--horizon", horizon);
  ct->add_option("--episode", episode);
  ct->add_option("--seed", seed);
  ct->add_option("--model", model);
  ct->add_option("--dynamics", dynamics);
  ct->add_option("--norm", norm);
  ct->add_option("--k", k);
  ct->add_option("--out", out);

  auto* vf = app.add_subcommand("verify", "property verification suites");
  std::string suite = cfg_or("suite", std::string{"convexity"});
  long samples = cfg_or("samples", long{100000});
  vf->add_option("--suite", suite)
      ->check(CLI::IsMember({"convexity", "gradients", "theorem1", "theorem2"}));
  vf->add_option("--model", model);
  vf->add_option("--samples", samples);
  vf->add_option("--seed", seed);
  vf->add_option("--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (ds->parsed()) return cmd_dataset(plant, ds_rollouts, ds_horizon, seed, out);
    if (tr->parsed()) {
      if (kind == "icnn")
        return cmd_train_icnn(data, out, hidden, epochs, lr, seed);
      return cmd_train_icrnn(data, out, target, n_w, hidden.front(), epochs, lr,
                             negate_output, seed);
    }
    if (co->parsed()) return cmd_construct(model, out);
    if (en->parsed()) return cmd_enumerate(model, out);
    if (ct->parsed()) {
      Json config{{"plant", plant}, {"objective", objective},
                  {"horizon", horizon}, {"episode", episode}, {"seed", seed},
                  {"model", model}, {"dynamics", dynamics}, {"norm", norm},
                  {"k", k}, {"out", out}};
      if (plant == "battery")
        return control_battery(objective, horizon, episode, seed, k, out, config);
      if (plant == "rc-thermal")
        return control_rc_thermal(objective, horizon, episode, seed, model,
                                  dynamics, norm, out, config);
      return control_point_mass(horizon, episode, seed, model, dynamics, norm,
                                k, out, config);
    }
    if (vf->parsed()) {
      const std::string report_out = vf->count("--out") ? out : std::string{};
      return cmd_verify(suite, model, samples, seed, report_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
