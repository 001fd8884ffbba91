#include "fedlmf/ndarray.hpp"

#include <cmath>

#include "fedlmf/errors.hpp"

namespace fedlmf {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (const std::size_t s : shape) n *= s;
    return n;
}
}  // namespace

NDArray::NDArray(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != product(shape)) {
        throw ShapeError("NDArray data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str());
    }
}

NDArray NDArray::zeros(std::vector<std::size_t> shape) {
    const std::size_t n = product(shape);
    return NDArray(std::move(shape), std::vector<double>(n, 0.0));
}

NDArray NDArray::full(std::vector<std::size_t> shape, double value) {
    const std::size_t n = product(shape);
    return NDArray(std::move(shape), std::vector<double>(n, value));
}

NDArray NDArray::scalar(double value) { return NDArray({1, 1}, {value}); }

NDArray NDArray::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return NDArray({1, n}, std::move(values));
}

NDArray NDArray::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return NDArray({rows, cols}, std::move(values));
}

NDArray NDArray::identity(std::size_t n) {
    NDArray out = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) out.data[i * n + i] = 1.0;
    return out;
}

std::size_t NDArray::rows() const {
    if (shape.size() == 2) return shape[0];
    if (shape.size() == 1) return 1;
    throw ShapeError("rows() on array of rank " + std::to_string(shape.size()));
}

std::size_t NDArray::cols() const {
    if (shape.size() == 2) return shape[1];
    if (shape.size() == 1) return shape[0];
    throw ShapeError("cols() on array of rank " + std::to_string(shape.size()));
}

double& NDArray::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double NDArray::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

bool NDArray::all_finite() const {
    for (const double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string NDArray::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

NDArray matmul(const NDArray& a, const NDArray& b) {
    const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2) throw ShapeError("matmul " + a.shape_str() + " x " + b.shape_str());
    NDArray c = NDArray::zeros({m, n});
    // i,k,j loop order: fixed left-to-right accumulation over k and contiguous
    // inner traversal of b and c.
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data.data() + i * k;
        double* crow = c.data.data() + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

NDArray transpose(const NDArray& a) {
    const std::size_t m = a.rows(), n = a.cols();
    NDArray out = NDArray::zeros({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = a.data[i * n + j];
    return out;
}

NDArray positional_encoding_table(std::size_t length, std::size_t dim) {
    NDArray pe = NDArray::zeros({length, dim});
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < dim; i += 2) {
            const double freq = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
            const double arg = static_cast<double>(pos) / freq;
            pe.data[pos * dim + i] = std::sin(arg);
            if (i + 1 < dim) pe.data[pos * dim + i + 1] = std::cos(arg);
        }
    }
    return pe;
}

}  // namespace fedlmf
