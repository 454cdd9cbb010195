#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace ihan {

// Dense 2-D array of doubles, row-major. The one numeric carrier used for
// model parameters, activations and gradients.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols, double fill = 0.0);

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor scalar(double v) { return Tensor(1, 1, v); }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int size() const { return rows_ * cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const;

    bool all_finite() const;

    void fill(double v);
    void add_scaled(const Tensor& other, double s); // this += s * other
    void scale_inplace(double s);
    double squared_norm() const;

    bool operator==(const Tensor& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// Standard matrix product; throws DimensionError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);

// out += a * b (shapes must already agree)
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out);

// column vector with a single 1 at `index`
Tensor onehot(int index, int size);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

} // namespace ihan
