#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace pm2 {

/// Dense row-major array of doubles. A scalar has an empty shape.
struct Array {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Array() = default;
    Array(std::vector<std::size_t> shape_, double fill = 0.0)
        : shape(std::move(shape_)), data(element_count(shape), fill) {}
    Array(std::vector<std::size_t> shape_, std::vector<double> values);

    static Array scalar(double v) { return Array({}, std::vector<double>{v}); }
    static Array matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Array({rows, cols}, fill);
    }
    static Array vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return Array({n}, std::move(values));
    }

    static std::size_t element_count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    bool is_scalar() const noexcept { return data.size() == 1; }

    /// Rows for a matrix, 1 for a vector or scalar.
    std::size_t rows() const noexcept { return shape.size() == 2 ? shape[0] : 1; }
    /// Trailing dimension (1 for scalars).
    std::size_t cols() const noexcept { return shape.empty() ? 1 : shape.back(); }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
    double item() const;

    bool all_finite() const noexcept;
    friend bool operator==(const Array&, const Array&) = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace pm2
