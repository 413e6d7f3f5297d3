#include "pm2/array.hpp"

#include <cmath>
#include <stdexcept>

namespace pm2 {

Array::Array(std::vector<std::size_t> shape_, std::vector<double> values)
    : shape(std::move(shape_)), data(std::move(values)) {
    if (element_count(shape) != data.size()) {
        throw std::invalid_argument("Array: shape " + shape_string(shape) + " does not hold " +
                                    std::to_string(data.size()) + " values");
    }
}

double Array::item() const {
    if (data.size() != 1) {
        throw std::invalid_argument("Array::item on non-scalar of shape " + shape_string(shape));
    }
    return data[0];
}

bool Array::all_finite() const noexcept {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace pm2
