#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace paint {

// Dense row-major matrix of 64-bit floats. Rank is fixed at 2: scalars are
// 1x1, row vectors 1xN. All differentiable state in the project lives in
// these.
struct Tensor {
    int n_rows = 0;
    int n_cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int rows, int cols, double fill = 0.0)
        : n_rows(rows), n_cols(cols), data(static_cast<std::size_t>(rows) * cols, fill) {}

    static Tensor scalar(double v);
    static Tensor row(std::vector<double> v);
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);

    int rows() const { return n_rows; }
    int cols() const { return n_cols; }
    std::size_t numel() const { return data.size(); }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * n_cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * n_cols + c]; }

    std::span<double> row_span(int r) { return {data.data() + static_cast<std::size_t>(r) * n_cols, static_cast<std::size_t>(n_cols)}; }
    std::span<const double> row_span(int r) const { return {data.data() + static_cast<std::size_t>(r) * n_cols, static_cast<std::size_t>(n_cols)}; }

    bool same_shape(const Tensor& o) const { return n_rows == o.n_rows && n_cols == o.n_cols; }
    std::string shape_str() const;

    bool all_finite() const;
    double item() const;  // requires 1x1
};

// Forward kernels shared by the graph and by gradient-check replay. Each
// throws std::invalid_argument on shape mismatch, naming the op and shapes.
namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor add(const Tensor& a, const Tensor& b);        // same shape, or either side 1x1
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise, same broadcast rule as add
Tensor scale(const Tensor& a, double s);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor gelu(const Tensor& a);
Tensor log_strict(const Tensor& a);  // rejects non-positive entries
Tensor clamp_min(const Tensor& a, double floor);
Tensor sum_axis(const Tensor& a, int axis);   // axis 0 -> 1xC, axis 1 -> Rx1
Tensor mean_axis(const Tensor& a, int axis);
Tensor concat_rows(const std::vector<const Tensor*>& parts);
Tensor slice_rows(const Tensor& a, int begin, int end);

}  // namespace kernels

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
int argmax_row(const Tensor& t, int row);  // ties -> lowest index

}  // namespace paint
