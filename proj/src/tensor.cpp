#include "paint/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace paint {

Tensor Tensor::scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
}

Tensor Tensor::row(std::vector<double> v) {
    Tensor t;
    t.n_rows = 1;
    t.n_cols = static_cast<int>(v.size());
    t.data = std::move(v);
    return t;
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("Tensor::from_rows: no rows");
    Tensor t(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int r = 0; r < t.n_rows; ++r) {
        if (static_cast<int>(rows[r].size()) != t.n_cols)
            throw std::invalid_argument("Tensor::from_rows: ragged rows");
        for (int c = 0; c < t.n_cols; ++c) t.at(r, c) = rows[r][c];
    }
    return t;
}

std::string Tensor::shape_str() const {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "[%d, %d]", n_rows, n_cols);
    return buf;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::item: tensor is " + shape_str() + ", expected 1x1");
    return data[0];
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

int argmax_row(const Tensor& t, int row) {
    if (row < 0 || row >= t.n_rows || t.n_cols < 1)
        throw std::invalid_argument("argmax_row: row " + std::to_string(row) + " out of range for " + t.shape_str());
    int best = 0;
    for (int c = 1; c < t.n_cols; ++c)
        if (t.at(row, c) > t.at(row, best)) best = c;  // strict: ties keep the lowest index
    return best;
}

namespace kernels {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

void check_finite(const char* op, const Tensor& t) {
    if (!t.all_finite()) throw std::runtime_error(std::string(op) + ": non-finite value in output");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.n_cols != b.n_rows) shape_error("matmul", a, b);
    Tensor out(a.n_rows, b.n_cols);
    const int m = a.n_rows, k = a.n_cols, n = b.n_cols;
    for (int i = 0; i < m; ++i) {
        double* __restrict orow = out.data.data() + static_cast<std::size_t>(i) * n;
        const double* __restrict arow = a.data.data() + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* __restrict brow = b.data.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    check_finite("matmul", out);
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.n_cols != b.n_cols) shape_error("matmul_nt", a, b);
    Tensor out(a.n_rows, b.n_rows);
    const int k = a.n_cols;
    for (int i = 0; i < a.n_rows; ++i) {
        const double* __restrict arow = a.data.data() + static_cast<std::size_t>(i) * k;
        double* __restrict orow = out.data.data() + static_cast<std::size_t>(i) * b.n_rows;
        for (int j = 0; j < b.n_rows; ++j) {
            const double* __restrict brow = b.data.data() + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            orow[j] = s;
        }
    }
    check_finite("matmul_nt", out);
    return out;
}

namespace {

template <class F>
Tensor broadcast_binary(const char* op, const Tensor& a, const Tensor& b, F f) {
    if (a.same_shape(b)) {
        Tensor out(a.n_rows, a.n_cols);
        for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
        return out;
    }
    if (b.numel() == 1) {
        Tensor out(a.n_rows, a.n_cols);
        const double bv = b.data[0];
        for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = f(a.data[i], bv);
        return out;
    }
    if (a.numel() == 1) {
        Tensor out(b.n_rows, b.n_cols);
        const double av = a.data[0];
        for (std::size_t i = 0; i < b.data.size(); ++i) out.data[i] = f(av, b.data[i]);
        return out;
    }
    shape_error(op, a, b);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = broadcast_binary("add", a, b, [](double x, double y) { return x + y; });
    check_finite("add", out);
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Tensor out = broadcast_binary("mul", a, b, [](double x, double y) { return x * y; });
    check_finite("mul", out);
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.n_rows, a.n_cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * s;
    check_finite("scale", out);
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    Tensor out(a.n_rows, a.n_cols);
    for (int r = 0; r < a.n_rows; ++r) {
        auto in = a.row_span(r);
        auto o = out.row_span(r);
        double mx = in[0];
        for (double v : in) mx = std::max(mx, v);
        double sum = 0.0;
        for (int c = 0; c < a.n_cols; ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (int c = 0; c < a.n_cols; ++c) o[c] /= sum;
    }
    check_finite("softmax", out);
    return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (gain.n_rows != 1 || gain.n_cols != x.n_cols) shape_error("layer_norm", x, gain);
    if (bias.n_rows != 1 || bias.n_cols != x.n_cols) shape_error("layer_norm", x, bias);
    Tensor out(x.n_rows, x.n_cols);
    const int d = x.n_cols;
    for (int r = 0; r < x.n_rows; ++r) {
        auto in = x.row_span(r);
        auto o = out.row_span(r);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= d;
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int c = 0; c < d; ++c) o[c] = (in[c] - mean) * inv * gain.data[c] + bias.data[c];
    }
    check_finite("layer_norm", out);
    return out;
}

Tensor gelu(const Tensor& a) {
    Tensor out(a.n_rows, a.n_cols);
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double x = a.data[i];
        out.data[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    check_finite("gelu", out);
    return out;
}

Tensor log_strict(const Tensor& a) {
    Tensor out(a.n_rows, a.n_cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        if (a.data[i] <= 0.0)
            throw std::invalid_argument("log: non-positive input " + std::to_string(a.data[i]) + "; clamp before taking logs");
        out.data[i] = std::log(a.data[i]);
    }
    check_finite("log", out);
    return out;
}

Tensor clamp_min(const Tensor& a, double floor) {
    Tensor out(a.n_rows, a.n_cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = std::max(a.data[i], floor);
    return out;
}

Tensor sum_axis(const Tensor& a, int axis) {
    if (axis == 0) {
        Tensor out(1, a.n_cols);
        for (int r = 0; r < a.n_rows; ++r)
            for (int c = 0; c < a.n_cols; ++c) out.data[c] += a.at(r, c);
        check_finite("sum", out);
        return out;
    }
    if (axis == 1) {
        Tensor out(a.n_rows, 1);
        for (int r = 0; r < a.n_rows; ++r) {
            double s = 0.0;
            for (int c = 0; c < a.n_cols; ++c) s += a.at(r, c);
            out.data[r] = s;
        }
        check_finite("sum", out);
        return out;
    }
    throw std::invalid_argument("sum: axis must be 0 or 1");
}

Tensor mean_axis(const Tensor& a, int axis) {
    Tensor s = sum_axis(a, axis);
    const double n = axis == 0 ? a.n_rows : a.n_cols;
    return scale(s, 1.0 / n);
}

Tensor concat_rows(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    int total = 0;
    const int cols = parts[0]->n_cols;
    for (const Tensor* p : parts) {
        if (p->n_cols != cols) shape_error("concat", *parts[0], *p);
        total += p->n_rows;
    }
    Tensor out(total, cols);
    int r0 = 0;
    for (const Tensor* p : parts) {
        for (int r = 0; r < p->n_rows; ++r)
            for (int c = 0; c < cols; ++c) out.at(r0 + r, c) = p->at(r, c);
        r0 += p->n_rows;
    }
    return out;
}

Tensor slice_rows(const Tensor& a, int begin, int end) {
    if (begin < 0 || end > a.n_rows || begin > end)
        throw std::invalid_argument("slice: rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                                    ") out of range for " + a.shape_str());
    Tensor out(end - begin, a.n_cols);
    for (int r = begin; r < end; ++r)
        for (int c = 0; c < a.n_cols; ++c) out.at(r - begin, c) = a.at(r, c);
    return out;
}

}  // namespace kernels

}  // namespace paint
