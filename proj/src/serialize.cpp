#include "icx/serialize.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace icx {

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw std::runtime_error("matrix_from_json: expected array");
  const auto rows = j.size();
  if (rows == 0) return Matrix(0, 0);
  const auto cols = j.at(0).size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < rows; ++i) {
    const Json& row = j.at(i);
    if (!row.is_array() || row.size() != cols)
      throw std::runtime_error("matrix_from_json: ragged rows");
    for (size_t k = 0; k < cols; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          row.at(k).get<double>();
  }
  return m;
}

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw std::runtime_error("vector_from_json: expected array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

Json icnn_to_json(const IcnnModel& model) {
  model.validate();
  Json j;
  j["type"] = "icnn";
  j["d"] = model.input_dim;
  Json widths = Json::array();
  for (const auto& w : model.W) widths.push_back(w.rows());
  j["widths"] = std::move(widths);
  Json W = Json::array(), D = Json::array(), b = Json::array();
  for (const auto& w : model.W) W.push_back(to_json(w));
  for (const auto& d : model.D) D.push_back(to_json(d));
  for (const auto& bias : model.b) b.push_back(to_json(bias));
  j["W"] = std::move(W);
  j["D"] = std::move(D);
  j["b"] = std::move(b);
  return j;
}

IcnnModel icnn_from_json(const Json& j) {
  IcnnModel model;
  model.input_dim = j.at("d").get<int>();
  for (const auto& w : j.at("W")) model.W.push_back(matrix_from_json(w));
  for (const auto& d : j.at("D")) model.D.push_back(matrix_from_json(d));
  for (const auto& b : j.at("b")) model.b.push_back(vector_from_json(b));
  model.validate();
  return model;
}

Json icrnn_to_json(const IcrnnModel& model) {
  model.validate();
  Json j;
  j["type"] = "icrnn";
  j["dims"] = {{"in", model.in_dim},
               {"hidden", model.hidden_dim},
               {"out", model.out_dim}};
  j["n_w"] = model.n_w;
  j["U"] = to_json(model.U);
  j["W"] = to_json(model.W);
  j["V"] = to_json(model.V);
  j["D1"] = to_json(model.D1);
  j["D2"] = to_json(model.D2);
  j["D3"] = to_json(model.D3);
  j["biases"] = {{"bz", to_json(model.bz)}, {"by", to_json(model.by)}};
  return j;
}

IcrnnModel icrnn_from_json(const Json& j) {
  IcrnnModel model;
  model.in_dim = j.at("dims").at("in").get<int>();
  model.hidden_dim = j.at("dims").at("hidden").get<int>();
  model.out_dim = j.at("dims").at("out").get<int>();
  model.n_w = j.at("n_w").get<int>();
  model.U = matrix_from_json(j.at("U"));
  model.W = matrix_from_json(j.at("W"));
  model.V = matrix_from_json(j.at("V"));
  model.D1 = matrix_from_json(j.at("D1"));
  model.D2 = matrix_from_json(j.at("D2"));
  model.D3 = matrix_from_json(j.at("D3"));
  model.bz = vector_from_json(j.at("biases").at("bz"));
  model.by = vector_from_json(j.at("biases").at("by"));
  model.validate();
  return model;
}

Json maxaffine_to_json(const MaxAffine& f) {
  f.validate();
  Json j;
  j["type"] = "maxaffine";
  j["d"] = f.input_dim();
  Json pieces = Json::array();
  for (int i = 0; i < f.piece_count(); ++i)
    pieces.push_back(Json::array({to_json(Vector(f.A.row(i))), f.b[i]}));
  j["pieces"] = std::move(pieces);
  return j;
}

MaxAffine maxaffine_from_json(const Json& j) {
  const int d = j.at("d").get<int>();
  const auto& pieces = j.at("pieces");
  MaxAffine f;
  f.A.resize(static_cast<Eigen::Index>(pieces.size()), d);
  f.b.resize(static_cast<Eigen::Index>(pieces.size()));
  for (size_t i = 0; i < pieces.size(); ++i) {
    const Vector a = vector_from_json(pieces.at(i).at(0));
    if (a.size() != d) throw std::runtime_error("maxaffine_from_json: piece dim");
    f.A.row(static_cast<Eigen::Index>(i)) = a.transpose();
    f.b[static_cast<Eigen::Index>(i)] = pieces.at(i).at(1).get<double>();
  }
  f.validate();
  return f;
}

Json normalization_to_json(const NormalizationSpec& spec) {
  spec.validate();
  Json j;
  j["type"] = "normalization";
  j["lo"] = to_json(spec.lo);
  j["hi"] = to_json(spec.hi);
  return j;
}

NormalizationSpec normalization_from_json(const Json& j) {
  NormalizationSpec spec;
  spec.lo = vector_from_json(j.at("lo"));
  spec.hi = vector_from_json(j.at("hi"));
  spec.validate();
  return spec;
}

void save_json(const std::string& path, const Json& j) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("save_json: cannot open " + tmp);
    os << j.dump(2) << "\n";
    if (!os) throw std::runtime_error("save_json: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_json: cannot open " + path);
  Json j;
  try {
    is >> j;
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("load_json: parse failure in " + path + ": " +
                             e.what());
  }
  return j;
}

std::string json_model_type(const Json& j) {
  if (!j.contains("type") || !j.at("type").is_string())
    throw std::runtime_error("json_model_type: missing type field");
  const std::string type = j.at("type").get<std::string>();
  if (type != "icnn" && type != "icrnn" && type != "maxaffine" &&
      type != "normalization")
    throw std::runtime_error("json_model_type: unknown type '" + type + "'");
  return type;
}

}  // namespace icx
