#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icx/serialize.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace icx;

namespace {

std::string temp_path(const char* stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

}  // namespace

TEST_CASE("matrices and vectors round trip bit exactly") {
  RngStream rng(71, 0);
  const Matrix m = rng.gaussian_matrix(4, 7, 0.0, 1e3);
  const Matrix m2 = matrix_from_json(to_json(m));
  CHECK(m == m2);  // bitwise, no tolerance

  Vector v = rng.gaussian_matrix(9, 1, 0.0, 1e-7);
  v[0] = 0.1 + 0.2;  // not exactly representable as written
  const Vector v2 = vector_from_json(to_json(v));
  CHECK(v == v2);
}

TEST_CASE("icnn round trip preserves the forward pass bitwise") {
  RngStream rng(72, 0);
  const IcnnModel model = make_icnn(3, {8, 4}, 1, rng);
  const IcnnModel back = icnn_from_json(icnn_to_json(model));
  back.validate();
  for (int k = 0; k < 100; ++k) {
    const Vector u = rng.gaussian_matrix(3, 1, 0.0, 1.0);
    CHECK(icnn_forward(model, u) == icnn_forward(back, u));
  }
}

TEST_CASE("icrnn round trip preserves the forward pass bitwise") {
  RngStream rng(73, 0);
  const IcrnnModel model = make_icrnn(4, 6, 2, 3, rng);
  const IcrnnModel back = icrnn_from_json(icrnn_to_json(model));
  back.validate();
  CHECK(back.n_w == model.n_w);
  for (int k = 0; k < 50; ++k) {
    const Matrix frames = rng.gaussian_matrix(4, 6, 0.0, 1.0);
    CHECK(icrnn_forward(model, frames).Y == icrnn_forward(back, frames).Y);
  }
}

TEST_CASE("max-affine round trip preserves evaluation bitwise") {
  RngStream rng(74, 0);
  MaxAffine m;
  m.A = rng.gaussian_matrix(5, 2, 0.0, 1.0);
  m.b = rng.gaussian_matrix(5, 1, 0.0, 1.0);
  const MaxAffine back = maxaffine_from_json(maxaffine_to_json(m));
  for (int k = 0; k < 100; ++k) {
    const Vector x = rng.gaussian_matrix(2, 1, 0.0, 2.0);
    CHECK(maxaffine_eval(m, x) == maxaffine_eval(back, x));
  }
}

TEST_CASE("normalization round trip is exact") {
  RngStream rng(75, 0);
  const auto spec = NormalizationSpec::fit(rng.gaussian_matrix(3, 20, 1.0, 4.0));
  const auto back = normalization_from_json(normalization_to_json(spec));
  CHECK(back.lo == spec.lo);
  CHECK(back.hi == spec.hi);
}

TEST_CASE("json model type is validated") {
  RngStream rng(76, 0);
  const IcnnModel model = make_icnn(2, {4}, 1, rng);
  CHECK(json_model_type(icnn_to_json(model)) == "icnn");
  CHECK(json_model_type(maxaffine_to_json(MaxAffine{Matrix::Zero(1, 1),
                                                    Vector::Zero(1)})) ==
        "maxaffine");
  Json j;
  j["type"] = "polynomial";
  CHECK_THROWS_AS(json_model_type(j), std::runtime_error);
  CHECK_THROWS_AS(json_model_type(Json::object()), std::runtime_error);
}

TEST_CASE("loading the wrong model type fails") {
  RngStream rng(77, 0);
  const IcnnModel model = make_icnn(2, {4}, 1, rng);
  CHECK_THROWS(icrnn_from_json(icnn_to_json(model)));
  CHECK_THROWS(maxaffine_from_json(icnn_to_json(model)));
}

TEST_CASE("save and load files atomically") {
  RngStream rng(78, 0);
  const IcnnModel model = make_icnn(2, {4}, 1, rng);
  const std::string path = temp_path("icx_test_model.json");
  save_json(path, icnn_to_json(model));
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));  // temp was renamed

  const IcnnModel back = icnn_from_json(load_json(path));
  const Vector u = Vector::Constant(2, 0.3);
  CHECK(icnn_forward(model, u) == icnn_forward(back, u));

  // The file ends with a newline and parses standalone.
  std::ifstream is(path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  CHECK_FALSE(text.empty());
  CHECK(text.back() == '\n');

  std::remove(path.c_str());
  CHECK_THROWS_AS(load_json(path), std::runtime_error);
}

TEST_CASE("malformed json files are rejected") {
  const std::string path = temp_path("icx_test_broken.json");
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_AS(load_json(path), std::runtime_error);
  std::remove(path.c_str());
}
