#include "ihan/tensor.hpp"

#include <cmath>

#include "ihan/errors.hpp"

namespace ihan {

Tensor::Tensor(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0 || (rows == 0) != (cols == 0)) {
        throw DimensionError("invalid tensor shape " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    int r = static_cast<int>(rows.size());
    int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
    Tensor t(r, c);
    int i = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c) {
            throw DimensionError("ragged initializer: row " + std::to_string(i) + " has " +
                                 std::to_string(row.size()) + " entries, expected " + std::to_string(c));
        }
        int j = 0;
        for (double v : row) t(i, j++) = v;
        ++i;
    }
    return t;
}

std::string Tensor::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

void Tensor::add_scaled(const Tensor& other, double s) {
    require_same_shape(*this, other, "add_scaled");
    const double* o = other.data();
    double* d = data();
    const std::size_t n = data_.size();
    for (std::size_t i = 0; i < n; ++i) d[i] += s * o[i];
}

void Tensor::scale_inplace(double s) {
    for (double& x : data_) x *= s;
}

double Tensor::squared_norm() const {
    double acc = 0.0;
    for (double v : data_) acc += v * v;
    return acc;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() + " differ");
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: cannot multiply " + a.shape_str() + " by " + b.shape_str());
    }
    Tensor out(a.rows(), b.cols());
    matmul_acc(a, b, out);
    return out;
}

void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data() + static_cast<std::size_t>(i) * k;
        double* orow = out.data() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

Tensor onehot(int index, int size) {
    Tensor t(size, 1);
    t(index, 0) = 1.0;
    return t;
}

} // namespace ihan
