#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "pm2/array.hpp"
#include "pm2/random.hpp"

namespace pm2::testing {

inline Array random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Array a = Array::matrix(rows, cols);
    for (double& v : a.data) v = scale * rng.normal();
    return a;
}

inline Array random_probs(Rng& rng, std::size_t rows, std::size_t cols) {
    Array a = Array::matrix(rows, cols);
    for (double& v : a.data) v = rng.uniform(0.02, 0.98);
    return a;
}

inline Array random_labels(Rng& rng, std::size_t rows, std::size_t cols, double p = 0.4) {
    Array a = Array::matrix(rows, cols);
    for (double& v : a.data) v = rng.bernoulli(p) ? 1.0 : 0.0;
    return a;
}

/// Central difference of f with respect to every entry of x.
inline Array numeric_gradient(Array& x, const std::function<double()>& f, double h = 1e-6) {
    Array out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = f();
        x.data[i] = keep - h;
        const double down = f();
        x.data[i] = keep;
        out.data[i] = (up - down) / (2.0 * h);
    }
    return out;
}

/// Largest |a - b| / max(|a| + |b|, floor) over all entries.
inline double max_relative_error(const Array& a, const Array& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max(std::abs(a.data[i]) + std::abs(b.data[i]), floor);
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / scale);
    }
    return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("pm2_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace pm2::testing
