// Copyright (c) 2026 ttakit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "tta/errors.hpp"
#include "tta/tensor.hpp"

namespace tta {

using json = nlohmann::json;

// Rank 0 -> number, rank 1 -> array, rank 2 -> array of row arrays.
// nlohmann serializes doubles with shortest round-trip precision, so tensor
// persistence is value-exact for finite values.
inline json tensor_to_json(const Tensor& t) {
    switch (t.rank()) {
        case 0:
            return t.value();
        case 1: {
            json a = json::array();
            for (std::size_t i = 0; i < t.numel(); ++i) a.push_back(t[i]);
            return a;
        }
        case 2: {
            json rows = json::array();
            for (std::size_t i = 0; i < t.rows(); ++i) {
                json row = json::array();
                for (std::size_t j = 0; j < t.cols(); ++j) row.push_back(t.at(i, j));
                rows.push_back(std::move(row));
            }
            return rows;
        }
        default:
            throw DimensionError("tensor_to_json: unsupported rank");
    }
}

inline Tensor tensor_from_json(const json& j) {
    if (j.is_number()) return Tensor::scalar(j.get<double>());
    if (!j.is_array()) throw IoError("tensor_from_json: expected number or array");
    if (j.empty()) return Tensor::vec({});
    if (j[0].is_array()) {
        const std::size_t rows = j.size(), cols = j[0].size();
        std::vector<double> data;
        data.reserve(rows * cols);
        for (const auto& row : j) {
            if (!row.is_array() || row.size() != cols) throw IoError("ragged tensor rows");
            for (const auto& v : row) data.push_back(v.get<double>());
        }
        return Tensor::mat(rows, cols, std::move(data));
    }
    std::vector<double> data;
    data.reserve(j.size());
    for (const auto& v : j) data.push_back(v.get<double>());
    return Tensor::vec(std::move(data));
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return text;
}

inline json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw IoError("malformed JSON in " + path + ": " + e.what());
    }
}

}  // namespace tta
