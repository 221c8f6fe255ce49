#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace rgm {

/**
 * Dense row-major matrix of doubles.
 *
 * Throughout the library rows index states and columns index actions, so a
 * Table holds any per-(state, action) quantity: rewards, occupancy measures,
 * policies, advantages, correction parameters.
 */
struct Table {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Table() = default;
    Table(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }

    bool same_shape(const Table& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

/// Sum of all entries.
inline double table_sum(const Table& t) {
    double s = 0.0;
    for (double v : t.data) s += v;
    return s;
}

/// Entry-wise inner product. Throws on shape mismatch.
inline double table_dot(const Table& a, const Table& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("table_dot: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

/// Largest absolute entry difference between two tables of equal shape.
inline double table_max_abs_diff(const Table& a, const Table& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("table_max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        if (d < 0) d = -d;
        if (d > m) m = d;
    }
    return m;
}

}  // namespace rgm
