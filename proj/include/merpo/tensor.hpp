#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace merpo {

/// Dense row-major (rows x cols) table of doubles.
struct Table2 {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    Table2() = default;
    Table2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) {
        assert(i < rows && j < cols);
        return v[i * cols + j];
    }
    double operator()(std::size_t i, std::size_t j) const {
        assert(i < rows && j < cols);
        return v[i * cols + j];
    }
    std::size_t size() const { return v.size(); }
};

/// Dense row-major (d0 x d1 x d2) tensor of doubles.
struct Table3 {
    std::size_t d0 = 0, d1 = 0, d2 = 0;
    std::vector<double> v;

    Table3() = default;
    Table3(std::size_t a, std::size_t b, std::size_t c, double fill = 0.0)
        : d0(a), d1(b), d2(c), v(a * b * c, fill) {}

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        assert(i < d0 && j < d1 && k < d2);
        return v[(i * d1 + j) * d2 + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        assert(i < d0 && j < d1 && k < d2);
        return v[(i * d1 + j) * d2 + k];
    }
    /// Pointer to the contiguous (i, j, :) row.
    double* row(std::size_t i, std::size_t j) { return v.data() + (i * d1 + j) * d2; }
    const double* row(std::size_t i, std::size_t j) const { return v.data() + (i * d1 + j) * d2; }
    std::size_t size() const { return v.size(); }
};

/// Integer count tables; counts stay exact integers so sufficient statistics
/// can be compared bit-exactly against a rebuild from the tuple list.
struct ITable2 {
    std::size_t rows = 0, cols = 0;
    std::vector<std::int64_t> v;

    ITable2() = default;
    ITable2(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0) {}

    std::int64_t& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    std::int64_t operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }

    bool operator==(const ITable2&) const = default;
};

struct ITable3 {
    std::size_t d0 = 0, d1 = 0, d2 = 0;
    std::vector<std::int64_t> v;

    ITable3() = default;
    ITable3(std::size_t a, std::size_t b, std::size_t c) : d0(a), d1(b), d2(c), v(a * b * c, 0) {}

    std::int64_t& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return v[(i * d1 + j) * d2 + k];
    }
    std::int64_t operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return v[(i * d1 + j) * d2 + k];
    }

    bool operator==(const ITable3&) const = default;
};

} // namespace merpo
