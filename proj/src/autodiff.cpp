#include "paint/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace paint {

namespace {

// A^T * B, used only by backward kernels.
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.n_rows != b.n_rows)
        throw std::invalid_argument("matmul_tn: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out(a.n_cols, b.n_cols);
    for (int p = 0; p < a.n_rows; ++p) {
        const double* __restrict arow = a.data.data() + static_cast<std::size_t>(p) * a.n_cols;
        const double* __restrict brow = b.data.data() + static_cast<std::size_t>(p) * b.n_cols;
        for (int i = 0; i < a.n_cols; ++i) {
            double* __restrict orow = out.data.data() + static_cast<std::size_t>(i) * b.n_cols;
            const double av = arow[i];
            for (int j = 0; j < b.n_cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

}  // namespace

Var Graph::push(Node n) {
    if (n.kind != OpKind::leaf) {
        for (int in : n.inputs)
            if (nodes_[in].requires_grad) n.requires_grad = true;
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Graph::Node& Graph::node(Var v) {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw std::invalid_argument("Graph: invalid var");
    return nodes_[v.id];
}

const Graph::Node& Graph::node(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw std::invalid_argument("Graph: invalid var");
    return nodes_[v.id];
}

Var Graph::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.kind = OpKind::leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Tensor Graph::eval(const Node& n) const {
    auto in = [&](int i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
    switch (n.kind) {
        case OpKind::leaf: return n.value;
        case OpKind::matmul: return kernels::matmul(in(0), in(1));
        case OpKind::matmul_nt: return kernels::matmul_nt(in(0), in(1));
        case OpKind::add: return kernels::add(in(0), in(1));
        case OpKind::mul: return kernels::mul(in(0), in(1));
        case OpKind::scale: return kernels::scale(in(0), n.scalar);
        case OpKind::softmax: return kernels::softmax_rows(in(0));
        case OpKind::layer_norm: return kernels::layer_norm_rows(in(0), in(1), in(2), n.scalar);
        case OpKind::gelu: return kernels::gelu(in(0));
        case OpKind::log: return kernels::log_strict(in(0));
        case OpKind::clamp_min: return kernels::clamp_min(in(0), n.scalar);
        case OpKind::sum0: return kernels::sum_axis(in(0), 0);
        case OpKind::sum1: return kernels::sum_axis(in(0), 1);
        case OpKind::mean0: return kernels::mean_axis(in(0), 0);
        case OpKind::mean1: return kernels::mean_axis(in(0), 1);
        case OpKind::concat: {
            std::vector<const Tensor*> parts;
            parts.reserve(n.inputs.size());
            for (int i : n.inputs) parts.push_back(&nodes_[i].value);
            return kernels::concat_rows(parts);
        }
        case OpKind::slice: return kernels::slice_rows(in(0), n.i0, n.i1);
    }
    throw std::logic_error("Graph::eval: unknown op");
}

Var Graph::matmul(Var a, Var b) {
    Node n;
    n.kind = OpKind::matmul;
    n.inputs = {a.id, b.id};
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::matmul_nt(Var a, Var b) {
    Node n;
    n.kind = OpKind::matmul_nt;
    n.inputs = {a.id, b.id};
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
    Node n;
    n.kind = OpKind::add;
    n.inputs = {a.id, b.id};
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
    Node n;
    n.kind = OpKind::mul;
    n.inputs = {a.id, b.id};
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::scale(Var a, double s) {
    Node n;
    n.kind = OpKind::scale;
    n.inputs = {a.id};
    n.scalar = s;
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::softmax(Var a) {
    Node n;
    n.kind = OpKind::softmax;
    n.inputs = {a.id};
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps) {
    Node n;
    n.kind = OpKind::layer_norm;
    n.inputs = {x.id, gain.id, bias.id};
    n.scalar = eps;
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::gelu(Var a) {
    Node n;
    n.kind = OpKind::gelu;
    n.inputs = {a.id};
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::log(Var a) {
    Node n;
    n.kind = OpKind::log;
    n.inputs = {a.id};
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::clamp_min(Var a, double floor) {
    Node n;
    n.kind = OpKind::clamp_min;
    n.inputs = {a.id};
    n.scalar = floor;
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::sum(Var a, int axis) {
    if (axis != 0 && axis != 1) throw std::invalid_argument("sum: axis must be 0 or 1");
    Node n;
    n.kind = axis == 0 ? OpKind::sum0 : OpKind::sum1;
    n.inputs = {a.id};
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::mean(Var a, int axis) {
    if (axis != 0 && axis != 1) throw std::invalid_argument("mean: axis must be 0 or 1");
    Node n;
    n.kind = axis == 0 ? OpKind::mean0 : OpKind::mean1;
    n.inputs = {a.id};
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::concat(const std::vector<Var>& parts) {
    Node n;
    n.kind = OpKind::concat;
    for (Var v : parts) n.inputs.push_back(v.id);
    n.value = eval(n);
    return push(std::move(n));
}

Var Graph::slice(Var a, int row_begin, int row_end) {
    Node n;
    n.kind = OpKind::slice;
    n.inputs = {a.id};
    n.i0 = row_begin;
    n.i1 = row_end;
    n.value = eval(n);
    return push(std::move(n));
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

Tensor& Graph::leaf_value(Var v) {
    Node& n = node(v);
    if (n.kind != OpKind::leaf) throw std::invalid_argument("leaf_value: node is not a leaf");
    return n.value;
}

Tensor Graph::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad_ready) return n.grad;
    return Tensor(n.value.n_rows, n.value.n_cols);
}

const Tensor* Graph::grad_if_any(Var v) const {
    const Node& n = node(v);
    return n.grad_ready ? &n.grad : nullptr;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

void Graph::zero_grads() {
    for (Node& n : nodes_) {
        n.grad_ready = false;
        n.grad = Tensor();
    }
}

void Graph::accumulate(int id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.grad_ready) {
        n.grad = Tensor(n.value.n_rows, n.value.n_cols);
        n.grad_ready = true;
    }
    if (g.same_shape(n.grad)) {
        for (std::size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
    } else if (n.grad.numel() == 1) {
        double s = 0.0;
        for (double v : g.data) s += v;
        n.grad.data[0] += s;
    } else {
        throw std::logic_error("accumulate: gradient shape mismatch");
    }
}

void Graph::backward(Var loss) {
    const Node& l = node(loss);
    if (l.value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + l.value.shape_str());
    zero_grads();
    Node& ln = nodes_[loss.id];
    ln.grad = Tensor::scalar(1.0);
    ln.grad_ready = true;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.grad_ready || !n.requires_grad || n.kind == OpKind::leaf) continue;
        backward_node(id);
    }
}

void Graph::backward_node(int id) {
    Node& n = nodes_[id];
    const Tensor& g = n.grad;
    auto inv = [&](int i) -> const Tensor& { return nodes_[n.inputs[i]].value; };

    switch (n.kind) {
        case OpKind::leaf:
            break;
        case OpKind::matmul: {
            // C = A B
            if (nodes_[n.inputs[0]].requires_grad) accumulate(n.inputs[0], kernels::matmul_nt(g, inv(1)));
            if (nodes_[n.inputs[1]].requires_grad) accumulate(n.inputs[1], matmul_tn(inv(0), g));
            break;
        }
        case OpKind::matmul_nt: {
            // C = A B^T
            if (nodes_[n.inputs[0]].requires_grad) accumulate(n.inputs[0], kernels::matmul(g, inv(1)));
            if (nodes_[n.inputs[1]].requires_grad) accumulate(n.inputs[1], matmul_tn(g, inv(0)));
            break;
        }
        case OpKind::add: {
            accumulate(n.inputs[0], g);
            accumulate(n.inputs[1], g);
            break;
        }
        case OpKind::mul: {
            if (nodes_[n.inputs[0]].requires_grad) accumulate(n.inputs[0], kernels::mul(g, inv(1)));
            if (nodes_[n.inputs[1]].requires_grad) accumulate(n.inputs[1], kernels::mul(g, inv(0)));
            break;
        }
        case OpKind::scale: {
            accumulate(n.inputs[0], kernels::scale(g, n.scalar));
            break;
        }
        case OpKind::softmax: {
            const Tensor& y = n.value;
            Tensor dx(y.n_rows, y.n_cols);
            for (int r = 0; r < y.n_rows; ++r) {
                double gy = 0.0;
                for (int c = 0; c < y.n_cols; ++c) gy += g.at(r, c) * y.at(r, c);
                for (int c = 0; c < y.n_cols; ++c) dx.at(r, c) = y.at(r, c) * (g.at(r, c) - gy);
            }
            accumulate(n.inputs[0], dx);
            break;
        }
        case OpKind::layer_norm: {
            const Tensor& x = inv(0);
            const Tensor& w = inv(1);
            const int d = x.n_cols;
            Tensor dx(x.n_rows, d), dw(1, d), db(1, d);
            for (int r = 0; r < x.n_rows; ++r) {
                double mean = 0.0;
                for (int c = 0; c < d; ++c) mean += x.at(r, c);
                mean /= d;
                double var = 0.0;
                for (int c = 0; c < d; ++c) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
                var /= d;
                const double inv_std = 1.0 / std::sqrt(var + n.scalar);
                double m1 = 0.0, m2 = 0.0;
                for (int c = 0; c < d; ++c) {
                    const double xhat = (x.at(r, c) - mean) * inv_std;
                    const double dxhat = g.at(r, c) * w.data[c];
                    db.data[c] += g.at(r, c);
                    dw.data[c] += g.at(r, c) * xhat;
                    m1 += dxhat;
                    m2 += dxhat * xhat;
                }
                m1 /= d;
                m2 /= d;
                for (int c = 0; c < d; ++c) {
                    const double xhat = (x.at(r, c) - mean) * inv_std;
                    const double dxhat = g.at(r, c) * w.data[c];
                    dx.at(r, c) = (dxhat - m1 - xhat * m2) * inv_std;
                }
            }
            if (nodes_[n.inputs[0]].requires_grad) accumulate(n.inputs[0], dx);
            if (nodes_[n.inputs[1]].requires_grad) accumulate(n.inputs[1], dw);
            if (nodes_[n.inputs[2]].requires_grad) accumulate(n.inputs[2], db);
            break;
        }
        case OpKind::gelu: {
            const Tensor& x = inv(0);
            constexpr double inv_sqrt2 = 0.70710678118654752440;
            constexpr double inv_sqrt2pi = 0.39894228040143267794;
            Tensor dx(x.n_rows, x.n_cols);
            for (std::size_t i = 0; i < x.data.size(); ++i) {
                const double v = x.data[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                dx.data[i] = g.data[i] * (cdf + v * pdf);
            }
            accumulate(n.inputs[0], dx);
            break;
        }
        case OpKind::log: {
            const Tensor& x = inv(0);
            Tensor dx(x.n_rows, x.n_cols);
            for (std::size_t i = 0; i < x.data.size(); ++i) dx.data[i] = g.data[i] / x.data[i];
            accumulate(n.inputs[0], dx);
            break;
        }
        case OpKind::clamp_min: {
            const Tensor& x = inv(0);
            Tensor dx(x.n_rows, x.n_cols);
            for (std::size_t i = 0; i < x.data.size(); ++i) dx.data[i] = x.data[i] > n.scalar ? g.data[i] : 0.0;
            accumulate(n.inputs[0], dx);
            break;
        }
        case OpKind::sum0:
        case OpKind::mean0: {
            const Tensor& x = inv(0);
            const double f = n.kind == OpKind::mean0 ? 1.0 / x.n_rows : 1.0;
            Tensor dx(x.n_rows, x.n_cols);
            for (int r = 0; r < x.n_rows; ++r)
                for (int c = 0; c < x.n_cols; ++c) dx.at(r, c) = g.data[c] * f;
            accumulate(n.inputs[0], dx);
            break;
        }
        case OpKind::sum1:
        case OpKind::mean1: {
            const Tensor& x = inv(0);
            const double f = n.kind == OpKind::mean1 ? 1.0 / x.n_cols : 1.0;
            Tensor dx(x.n_rows, x.n_cols);
            for (int r = 0; r < x.n_rows; ++r)
                for (int c = 0; c < x.n_cols; ++c) dx.at(r, c) = g.data[r] * f;
            accumulate(n.inputs[0], dx);
            break;
        }
        case OpKind::concat: {
            int r0 = 0;
            for (int in_id : n.inputs) {
                const Tensor& x = nodes_[in_id].value;
                if (nodes_[in_id].requires_grad) {
                    Tensor dx(x.n_rows, x.n_cols);
                    for (int r = 0; r < x.n_rows; ++r)
                        for (int c = 0; c < x.n_cols; ++c) dx.at(r, c) = g.at(r0 + r, c);
                    accumulate(in_id, dx);
                }
                r0 += x.n_rows;
            }
            break;
        }
        case OpKind::slice: {
            const Tensor& x = inv(0);
            Tensor dx(x.n_rows, x.n_cols);
            for (int r = n.i0; r < n.i1; ++r)
                for (int c = 0; c < x.n_cols; ++c) dx.at(r, c) = g.at(r - n.i0, c);
            accumulate(n.inputs[0], dx);
            break;
        }
    }
}

void Graph::replay() {
    for (Node& n : nodes_) {
        if (n.kind == OpKind::leaf) continue;
        n.value = eval(n);
    }
}

double finite_diff_check(Graph& graph, Var loss, Var param, double epsilon,
                         std::span<const int> entries) {
    if (epsilon <= 0.0) throw std::invalid_argument("finite_diff_check: epsilon must be positive");
    graph.backward(loss);
    const Tensor analytic = graph.grad(param);
    Tensor& theta = graph.leaf_value(param);
    double max_err = 0.0;
    auto check_entry = [&](std::size_t i) {
        const double saved = theta.data[i];
        theta.data[i] = saved + epsilon;
        graph.replay();
        const double f_plus = graph.value(loss).item();
        theta.data[i] = saved - epsilon;
        graph.replay();
        const double f_minus = graph.value(loss).item();
        theta.data[i] = saved;
        const double fd = (f_plus - f_minus) / (2.0 * epsilon);
        const double err = std::abs(analytic.data[i] - fd) / std::max(1.0, std::abs(analytic.data[i]));
        max_err = std::max(max_err, err);
    };
    if (entries.empty()) {
        for (std::size_t i = 0; i < theta.data.size(); ++i) check_entry(i);
    } else {
        for (int e : entries) {
            if (e < 0 || static_cast<std::size_t>(e) >= theta.data.size())
                throw std::invalid_argument("finite_diff_check: entry index out of range");
            check_entry(static_cast<std::size_t>(e));
        }
    }
    graph.replay();
    return max_err;
}

double finite_diff_check(Graph& graph, Var loss, Var param, double epsilon) {
    return finite_diff_check(graph, loss, param, epsilon, {});
}

}  // namespace paint
