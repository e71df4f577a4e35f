#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "aerogen/nn/rng.hpp"

namespace aerogen::nn {

// Dense row-major double tensor. Small and value-semantic; every neural
// component in this project runs in double precision on CPU.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s, double fill = 0.0);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i < 0 ? rank() + i : i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // row-major indexed access (rank checked by assert-level logic only)
    double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double& at(int64_t i, int64_t j, int64_t k) {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    double at(int64_t i, int64_t j, int64_t k) const {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    double& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }
    double at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }

    Tensor reshaped(std::vector<int64_t> new_shape) const;

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s), 0.0); }
    static Tensor full(std::vector<int64_t> s, double v) { return Tensor(std::move(s), v); }
    static Tensor randn(std::vector<int64_t> s, Rng& rng, double stddev = 1.0);
    static Tensor from(std::vector<int64_t> s, std::vector<double> values);

    bool all_finite() const;
    double min() const;
    double max() const;
    double mean() const;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

}  // namespace aerogen::nn
