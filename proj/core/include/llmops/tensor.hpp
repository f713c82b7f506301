#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace llmops::nn {

/// Row-major dense array of doubles.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);

    static std::size_t element_count(std::span<const std::size_t> shape);

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    void fill(double v);
    bool all_finite() const;
    std::string shape_string() const;

    bool operator==(const Tensor&) const = default;
};

}  // namespace llmops::nn
