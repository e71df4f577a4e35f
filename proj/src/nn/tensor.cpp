#include "aerogen/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aerogen::nn {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor::Tensor(std::vector<int64_t> s, double fill)
    : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw std::invalid_argument("reshape: numel mismatch " + shape_str(shape) + " -> " +
                                    shape_str(new_shape));
    }
    Tensor out = *this;
    out.shape = std::move(new_shape);
    return out;
}

Tensor Tensor::randn(std::vector<int64_t> s, Rng& rng, double stddev) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.normal() * stddev;
    return t;
}

Tensor Tensor::from(std::vector<int64_t> s, std::vector<double> values) {
    if (shape_numel(s) != static_cast<int64_t>(values.size())) {
        throw std::invalid_argument("Tensor::from: value count mismatch");
    }
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    return t;
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::min() const {
    return *std::min_element(data.begin(), data.end());
}

double Tensor::max() const {
    return *std::max_element(data.begin(), data.end());
}

double Tensor::mean() const {
    if (data.empty()) return 0.0;
    return std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
}

}  // namespace aerogen::nn
