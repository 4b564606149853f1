#ifndef MEAD_JSON_IO_HPP
#define MEAD_JSON_IO_HPP

#include "mead/core.hpp"

#include <json.hpp>

#include <string>

namespace mead {

/// Serialize with every floating-point number written to 17 significant digits; NaN/inf become null.
std::string dump_json(const nlohmann::json& value, int indent = 2);

void write_json(const nlohmann::json& value, const std::string& path);

nlohmann::json read_json(const std::string& path);

nlohmann::json to_json(const Vector& v);
nlohmann::json to_json(const Matrix& m);  // array of rows

Vector vector_from_json(const nlohmann::json& j);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace mead

#endif  // MEAD_JSON_IO_HPP
