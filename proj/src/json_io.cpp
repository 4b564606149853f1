#include "mead/json_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mead {

namespace {

void dump(const nlohmann::json& v, int indent, int depth, std::string& out) {
    auto newline = [&](int d) {
        if (indent < 0) return;
        out += '\n';
        out.append(static_cast<std::size_t>(indent * d), ' ');
    };
    switch (v.type()) {
        case nlohmann::json::value_t::object: {
            if (v.empty()) {
                out += "{}";
                return;
            }
            out += '{';
            bool first = true;
            for (auto it = v.begin(); it != v.end(); ++it) {
                if (!first) out += ',';
                first = false;
                newline(depth + 1);
                out += nlohmann::json(it.key()).dump();
                out += indent < 0 ? ":" : ": ";
                dump(it.value(), indent, depth + 1, out);
            }
            newline(depth);
            out += '}';
            return;
        }
        case nlohmann::json::value_t::array: {
            if (v.empty()) {
                out += "[]";
                return;
            }
            // Arrays of scalars stay on one line.
            bool scalars = true;
            for (const auto& e : v)
                if (e.is_structured()) scalars = false;
            out += '[';
            bool first = true;
            for (const auto& e : v) {
                if (!first) out += scalars && indent >= 0 ? ", " : ",";
                first = false;
                if (!scalars) newline(depth + 1);
                dump(e, indent, depth + 1, out);
            }
            if (!scalars) newline(depth);
            out += ']';
            return;
        }
        case nlohmann::json::value_t::number_float: {
            const double d = v.get<double>();
            out += std::isfinite(d) ? format_real(d) : "null";
            return;
        }
        default:
            out += v.dump();
            return;
    }
}

}  // namespace

std::string dump_json(const nlohmann::json& value, int indent) {
    std::string out;
    dump(value, indent, 0, out);
    return out;
}

void write_json(const nlohmann::json& value, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    out << dump_json(value) << '\n';
    if (!out) throw FormatError(path + ": write failed");
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open file");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": invalid JSON: " + e.what());
    }
}

nlohmann::json to_json(const Vector& v) {
    nlohmann::json j = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

nlohmann::json to_json(const Matrix& m) {
    nlohmann::json j = nlohmann::json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(std::move(row));
    }
    return j;
}

Vector vector_from_json(const nlohmann::json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
    return v;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const Index rows = static_cast<Index>(j.size());
    const Index cols = rows > 0 ? static_cast<Index>(j[0].size()) : 0;
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        if (static_cast<Index>(j[static_cast<std::size_t>(r)].size()) != cols)
            throw FormatError("ragged matrix in JSON document");
        for (Index c = 0; c < cols; ++c)
            m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

}  // namespace mead
