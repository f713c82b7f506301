#include "llmops/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace llmops::nn {

Tensor::Tensor(std::vector<std::size_t> shape_, double fill_value)
    : shape(std::move(shape_)), data(element_count(shape), fill_value) {
    if (std::find(shape.begin(), shape.end(), std::size_t{0}) != shape.end())
        throw std::invalid_argument("tensor dimensions must be positive");
}

std::size_t Tensor::element_count(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace llmops::nn
