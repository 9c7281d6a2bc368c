#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "vca/core_math.hpp"
#include "vca/errors.hpp"

namespace vca::detail {

using nlohmann::json;

inline json vec_to_json(const Vec& v) { return json(v); }

inline Vec vec_from_json(const json& j, const char* what) {
    if (!j.is_array()) throw DatasetError(std::string(what) + ": expected an array of reals");
    Vec v;
    v.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) throw DatasetError(std::string(what) + ": non-numeric entry");
        v.push_back(x.get<double>());
    }
    if (!all_finite(v)) throw DatasetError(std::string(what) + ": non-finite entry");
    return v;
}

inline json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Mat mat_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.empty()) throw DatasetError(std::string(what) + ": expected a matrix");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Mat m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const Vec row = vec_from_json(j[r], what);
        if (row.size() != cols) throw DatasetError(std::string(what) + ": ragged matrix rows");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c];
    }
    return m;
}

inline void write_text_file(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + file.string());
    out << text;
    if (!out) throw IoError("write failed: " + file.string());
}

inline json load_json_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open: " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DatasetError(file.string() + ": " + e.what());
    }
    return j;
}

/// Rejects unknown keys so typos in run configs fail loudly.
inline void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                                const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) { ok = true; break; }
        if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

} // namespace vca::detail
