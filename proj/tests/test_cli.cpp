#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icx/serialize.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace icx;
namespace fs = std::filesystem;

namespace {

std::string cli() {
#ifdef ICX_CLI_PATH
  return ICX_CLI_PATH;
#else
  const char* path = std::getenv("ICX_CLI_PATH");
  REQUIRE_MESSAGE(path != nullptr, "ICX_CLI_PATH must point at the binary");
  return path;
#endif
}

fs::path workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "icx_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd =
      cli() + " " + args + " > /dev/null 2> /dev/null";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE_MESSAGE(is.good(), path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string abs_data_csv() {
  const fs::path path = workdir() / "abs.csv";
  if (!fs::exists(path)) {
    RngStream rng(81, 0);
    std::ofstream os(path);
    os << "x0,y0\n";
    for (int j = 0; j < 400; ++j) {
      const double x = rng.uniform(-2.0, 2.0);
      os << x << "," << std::abs(x) << "\n";
    }
  }
  return path.string();
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("train --kind icnn") == 2);  // --data is required
  CHECK(run("train --kind icnn --data " +
            (workdir() / "no_such_file.csv").string() + " --out " +
            (workdir() / "x").string()) == 2);
  CHECK(run("dataset --plant windmill --out " +
            (workdir() / "w.csv").string()) == 2);
}

TEST_CASE("dataset runs are byte reproducible") {
  const std::string out = (workdir() / "battery.csv").string();
  CHECK(run("dataset --plant battery --rollouts 3 --horizon 20 --seed 5 --out " +
            out) == 0);
  const std::string first = slurp(out);
  CHECK(run("dataset --plant battery --rollouts 3 --horizon 20 --seed 5 --out " +
            out) == 0);
  CHECK(slurp(out) == first);  // data identical; wall clock lives in the manifest
  CHECK(fs::exists(out + ".manifest.json"));
  const Json manifest = load_json(out + ".manifest.json");
  CHECK(manifest.at("command") == "dataset");
  CHECK(manifest.at("seed").get<std::uint64_t>() == 5);
}

TEST_CASE("icnn training fits |u| and reruns byte identically") {
  const std::string out = (workdir() / "absnet").string();
  const std::string args = "train --kind icnn --data " + abs_data_csv() +
                           " --out " + out +
                           " --hidden 16 --epochs 300 --lr 0.03 --seed 3";
  CHECK(run(args) == 0);
  const std::string model_bytes = slurp(out + ".model.json");
  CHECK(fs::exists(out + ".loss.csv"));
  CHECK(fs::exists(out + ".manifest.json"));

  const IcnnModel model = icnn_from_json(load_json(out + ".model.json"));
  CHECK(model.min_constrained_weight() >= 0.0);
  double sq = 0.0;
  RngStream rng(82, 0);
  for (int k = 0; k < 500; ++k) {
    Vector x(1);
    x << rng.uniform(-2.0, 2.0);
    const double e = icnn_forward(model, x)[0] - std::abs(x[0]);
    sq += e * e;
  }
  CHECK(std::sqrt(sq / 500) < 0.05);

  CHECK(run(args) == 0);
  CHECK(slurp(out + ".model.json") == model_bytes);
}

TEST_CASE("construct compiles a saved maxaffine into an equal icnn") {
  MaxAffine m;
  m.A = Matrix(2, 1);
  m.A << 1.0, -1.0;
  m.b = Vector::Zero(2);
  const std::string in = (workdir() / "absma.json").string();
  const std::string out = (workdir() / "absma.icnn.json").string();
  save_json(in, maxaffine_to_json(m));
  CHECK(run("construct --model " + in + " --out " + out) == 0);

  const IcnnModel net = icnn_from_json(load_json(out));
  CHECK(net.layer_count() == 2);  // one relu layer for two pieces
  for (double x = -3.0; x <= 3.0; x += 1e-2) {
    Vector v(1);
    v << x;
    CHECK(std::abs(icnn_forward(net, v)[0] - maxaffine_eval(m, v)) <= 1e-9);
  }
  // Feeding the wrong model type is a usage error.
  CHECK(run("construct --model " + out + " --out " +
            (workdir() / "bad.json").string()) == 2);
}

TEST_CASE("enumerate expands a one-layer icnn into 2^K pieces") {
  RngStream rng(83, 0);
  const int K = 10, d = 2;
  IcnnModel model;
  model.input_dim = d;
  Matrix H = rng.gaussian_matrix(K, d, 0.0, 1.0);
  Matrix W0 = Matrix::Zero(K, 2 * d);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < d; ++j) {
      if (H(i, j) >= 0.0)
        W0(i, j) = H(i, j);
      else
        W0(i, d + j) = -H(i, j);
    }
  model.W.push_back(W0);
  model.W.push_back(rng.gaussian_matrix(1, K, 0.0, 1.0).cwiseAbs());
  model.D.emplace_back();
  model.D.push_back(Matrix::Zero(1, 2 * d));
  model.b.push_back(rng.gaussian_matrix(K, 1, 0.0, 1.0));
  model.b.push_back(rng.gaussian_matrix(1, 1, 0.0, 1.0));

  const std::string in = (workdir() / "onelayer.json").string();
  const std::string out = (workdir() / "onelayer.ma.json").string();
  save_json(in, icnn_to_json(model));
  CHECK(run("enumerate --model " + in + " --out " + out) == 0);

  const MaxAffine pieces = maxaffine_from_json(load_json(out));
  CHECK(pieces.piece_count() == 1024);
  for (int k = 0; k < 2000; ++k) {
    const Vector x = rng.gaussian_matrix(d, 1, 0.0, 2.0);
    CHECK(std::abs(maxaffine_eval(pieces, x) - icnn_forward(model, x)[0]) <=
          1e-9);
  }
}

TEST_CASE("verify passes on sound models and fails on corrupted ones") {
  const std::string model = (workdir() / "absnet").string() + ".model.json";
  REQUIRE(fs::exists(model));  // produced by the training test above
  const std::string report = (workdir() / "report.json").string();
  CHECK(run("verify --suite convexity --model " + model +
            " --samples 2000 --out " + report) == 0);
  const Json rep = load_json(report);
  CHECK(rep.at("pass") == true);

  // Flip an inner weight negative: the forward map stops being convex.
  IcnnModel broken = icnn_from_json(load_json(model));
  broken.W[1] = -broken.W[1].cwiseAbs();
  const std::string bad = (workdir() / "broken.json").string();
  save_json(bad, icnn_to_json(broken));
  CHECK(run("verify --suite convexity --model " + bad +
            " --samples 2000 --out " + report) == 1);
  CHECK(load_json(report).at("pass") == false);

  CHECK(run("verify --suite theorem1 --samples 2000") == 0);
  CHECK(run("verify --suite gradients --model " + model + " --samples 50") == 0);
}

TEST_CASE("battery control writes a trajectory and beats its baseline log") {
  const std::string out = (workdir() / "bat").string();
  CHECK(run("control --plant battery --objective tou --horizon 3 --episode 4 "
            "--k 20 --seed 2 --out " + out) == 0);
  const Json metrics = load_json(out + ".metrics.json");
  CHECK(metrics.contains("total_cost"));
  CHECK(metrics.at("max_violation").get<double>() < 1e-3);
  const std::string traj = slurp(out + ".traj.csv");
  CHECK(traj.rfind("t,s0,u0,y0,objective,iterations,violation\n", 0) == 0);
  CHECK(std::count(traj.begin(), traj.end(), '\n') == 5);  // header + 4 steps
}

TEST_CASE("point-mass control with a zero-step episode emits an empty log") {
  RngStream rng(84, 0);
  // Any well-formed model files will do: the policy is never invoked.
  const int n_w = 2;
  const IcrnnModel f = make_icrnn(8, 4, 1, n_w, rng);
  const IcrnnModel g = make_icrnn(8, 4, 4, n_w, rng);
  NormalizationSpec s_norm, u_norm, y_norm;
  s_norm.lo = Vector::Constant(4, -1.0);
  s_norm.hi = Vector::Constant(4, 1.0);
  u_norm.lo = Vector::Constant(2, -1.0);
  u_norm.hi = Vector::Constant(2, 1.0);
  y_norm.lo = Vector::Constant(1, -1.0);
  y_norm.hi = Vector::Constant(1, 1.0);

  const std::string fm = (workdir() / "pm_f.json").string();
  const std::string gm = (workdir() / "pm_g.json").string();
  const std::string nm = (workdir() / "pm_norm.json").string();
  save_json(fm, icrnn_to_json(f));
  save_json(gm, icrnn_to_json(g));
  Json bundle;
  bundle["type"] = "normalization-bundle";
  bundle["n_w"] = n_w;
  bundle["s"] = normalization_to_json(s_norm);
  bundle["u"] = normalization_to_json(u_norm);
  bundle["y"] = normalization_to_json(y_norm);
  save_json(nm, bundle);

  const std::string out = (workdir() / "pm").string();
  CHECK(run("control --plant point-mass --horizon 3 --episode 0 --model " + fm +
            " --dynamics " + gm + " --norm " + nm + " --out " + out) == 0);
  const std::string traj = slurp(out + ".traj.csv");
  CHECK(std::count(traj.begin(), traj.end(), '\n') == 1);  // header only

  // Missing model files are a usage error for the learned-model plants.
  CHECK(run("control --plant rc-thermal --episode 1 --out " +
            (workdir() / "rc").string()) == 2);
}
