// Copyright (c) gnnrv contributors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared vocabulary: vertices, edges, dense matrices and the error type.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gnnrv {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

using Vertex = std::uint32_t;

struct Edge {
    Vertex src = 0;
    Vertex dst = 0;

    auto operator<=>(const Edge&) const = default;
};

using EdgeSet = std::set<Edge>;

// Undirected graphs identify (u,v) with (v,u); the slot is the ordered form.
inline Edge canonical(Edge e, bool directed) {
    if (!directed && e.src > e.dst) {
        std::swap(e.src, e.dst);
    }
    return e;
}

inline Edge reversed(Edge e) { return {e.dst, e.src}; }

inline std::string to_string(Edge e) {
    return "(" + std::to_string(e.src) + "," + std::to_string(e.dst) + ")";
}

// Dense row-major matrix.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) {
            return {};
        }
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m.cols_) {
                throw Error("ragged matrix: row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                            " entries, expected " + std::to_string(m.cols_));
            }
            std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
        }
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    std::vector<std::vector<double>> to_rows() const {
        std::vector<std::vector<double>> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) {
            out[r].assign(row(r).begin(), row(r).end());
        }
        return out;
    }

    bool operator==(const Matrix&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// out[i] = sum_j m(i,j) * x[j], accumulated left to right.
inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = 0.0;
        const auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            acc += r[j] * x[j];
        }
        out[i] = acc;
    }
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

} // namespace gnnrv

template <>
struct std::hash<gnnrv::Edge> {
    std::size_t operator()(const gnnrv::Edge& e) const noexcept {
        return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(e.src) << 32) | e.dst);
    }
};
