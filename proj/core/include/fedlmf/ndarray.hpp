#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace fedlmf {

/// Dense row-major array of 64-bit floats. The invariant data.size() ==
/// product(shape) holds after every constructor and factory.
struct NDArray {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    NDArray() = default;
    NDArray(std::vector<std::size_t> s, std::vector<double> d);

    static NDArray zeros(std::vector<std::size_t> shape);
    static NDArray full(std::vector<std::size_t> shape, double value);
    static NDArray scalar(double value);
    static NDArray row(std::vector<double> values);                   // 1 x n
    static NDArray matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static NDArray identity(std::size_t n);

    std::size_t numel() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }
    bool is_scalar() const { return numel() == 1; }

    /// Rows/cols of a 1-D or 2-D array (1-D counts as a single row).
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool same_shape(const NDArray& other) const { return shape == other.shape; }
    bool all_finite() const;

    std::string shape_str() const;
};

NDArray matmul(const NDArray& a, const NDArray& b);
NDArray transpose(const NDArray& a);

/// Sinusoidal positional encoding table, length x dim, PE[p, 2i] = sin(p / 10000^{2i/dim}),
/// PE[p, 2i+1] = cos of the same argument.
NDArray positional_encoding_table(std::size_t length, std::size_t dim);

}  // namespace fedlmf
