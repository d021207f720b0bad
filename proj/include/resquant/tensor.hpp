#ifndef RESQUANT_TENSOR_HPP
#define RESQUANT_TENSOR_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace resquant {

/// Dense row-major tensor of 64-bit reals. Immutable after construction;
/// the constructor rejects NaN/Inf entries and shape/data size mismatches.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    const std::vector<double>& data() const noexcept { return data_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rank() const noexcept { return shape_.size(); }
    double operator[](std::size_t flat_index) const { return data_[flat_index]; }

    std::size_t dim(std::size_t axis) const { return shape_[axis]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_volume(const std::vector<std::size_t>& shape);

/// Largest absolute entry; 0 for an empty tensor.
double max_abs(const Tensor& t);

/// Elementwise a - b. Shapes must match.
Tensor subtract(const Tensor& a, const Tensor& b);

/// Elementwise a + b. Shapes must match.
Tensor add(const Tensor& a, const Tensor& b);

/// max over elements of |a - b|. Shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

double l2_norm(const Tensor& t);

std::string shape_to_string(const std::vector<std::size_t>& shape);

} // namespace resquant

#endif
