#pragma once

#include "icx/icnn.hpp"
#include "icx/icrnn.hpp"
#include "icx/maxaffine.hpp"
#include "icx/numeric.hpp"
#include "icx/sysid.hpp"

#include <json.hpp>

#include <string>

namespace icx {

using Json = nlohmann::json;

// Matrices are stored as nested row-major arrays; numbers survive the
// round-trip bit exactly.
Json to_json(const Matrix& m);
Json to_json(const Vector& v);
Matrix matrix_from_json(const Json& j);
Vector vector_from_json(const Json& j);

Json icnn_to_json(const IcnnModel& model);
IcnnModel icnn_from_json(const Json& j);

Json icrnn_to_json(const IcrnnModel& model);
IcrnnModel icrnn_from_json(const Json& j);

Json maxaffine_to_json(const MaxAffine& f);
MaxAffine maxaffine_from_json(const Json& j);

Json normalization_to_json(const NormalizationSpec& spec);
NormalizationSpec normalization_from_json(const Json& j);

/// Atomic write (temp file then rename), trailing newline, 2-space indent.
void save_json(const std::string& path, const Json& j);
/// Throws std::runtime_error on missing file or parse failure.
Json load_json(const std::string& path);

/// "icnn", "icrnn", "maxaffine", or "normalization"; throws on anything else.
std::string json_model_type(const Json& j);

}  // namespace icx
