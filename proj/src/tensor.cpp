#include "resquant/tensor.hpp"

#include <cmath>
#include <string>

#include "resquant/errors.hpp"

namespace resquant {

std::size_t shape_volume(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (std::size_t d : shape_) {
        if (d == 0) throw InvalidInputError("tensor shape has a zero dimension");
    }
    if (shape_volume(shape_) != data_.size()) {
        throw InvalidInputError("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_to_string(shape_));
    }
    for (double v : data_) {
        if (!std::isfinite(v)) throw InvalidInputError("tensor contains a non-finite entry");
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::vector<double> data(shape_volume(shape), 0.0);
    return Tensor(std::move(shape), std::move(data));
}

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.data()) m = std::max(m, std::fabs(v));
    return m;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw InvalidInputError("tensor shape mismatch in subtract");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return Tensor(a.shape(), std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw InvalidInputError("tensor shape mismatch in add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return Tensor(a.shape(), std::move(out));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw InvalidInputError("tensor shape mismatch in max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

double l2_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

} // namespace resquant
