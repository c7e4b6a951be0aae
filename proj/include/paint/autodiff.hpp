#pragma once

#include "paint/tensor.hpp"

#include <vector>

namespace paint {

// Handle to a node in a Graph.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Operations evaluate eagerly and append a node; backward
// walks the tape once in reverse creation order (a topological order, since
// inputs always precede outputs). Leaf values may be perturbed and the whole
// tape re-executed with replay(), which is what the finite-difference check
// relies on.
class Graph {
  public:
    enum class OpKind {
        leaf,
        matmul,
        matmul_nt,
        add,
        mul,
        scale,
        softmax,
        layer_norm,
        gelu,
        log,
        clamp_min,
        sum0,
        sum1,
        mean0,
        mean1,
        concat,
        slice,
    };

    Var leaf(Tensor value, bool requires_grad = false);

    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var softmax(Var a);
    Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
    Var gelu(Var a);
    Var log(Var a);
    Var clamp_min(Var a, double floor);
    Var sum(Var a, int axis);
    Var mean(Var a, int axis);
    Var concat(const std::vector<Var>& parts);
    Var slice(Var a, int row_begin, int row_end);

    const Tensor& value(Var v) const;
    Tensor& leaf_value(Var v);  // leaves only; mutate then replay()

    // Gradient after backward(); zero tensor for nodes the loss never reached.
    Tensor grad(Var v) const;
    const Tensor* grad_if_any(Var v) const;
    bool requires_grad(Var v) const;

    void backward(Var loss);
    void zero_grads();
    void replay();

    std::size_t size() const { return nodes_.size(); }

    static constexpr double kLayerNormEps = 1e-12;
    static constexpr double kLogClampFloor = 1e-12;

  private:
    struct Node {
        OpKind kind;
        std::vector<int> inputs;
        double scalar = 0.0;  // scale factor / clamp floor / layer-norm eps
        int i0 = 0, i1 = 0;   // slice bounds
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_ready = false;
    };

    Var push(Node n);
    Node& node(Var v);
    const Node& node(Var v) const;
    void accumulate(int id, const Tensor& g);
    void backward_node(int id);
    Tensor eval(const Node& n) const;

    std::vector<Node> nodes_;
};

// Max over parameter entries of |analytic - central difference| / max(1, |analytic|),
// evaluated by perturbing each entry of `param` and replaying the tape.  The
// span variant restricts the check to the given entries (flat indices), which
// keeps large-tensor checks affordable; empty span = all entries.
double finite_diff_check(Graph& graph, Var loss, Var param, double epsilon);
double finite_diff_check(Graph& graph, Var loss, Var param, double epsilon,
                         std::span<const int> entries);

}  // namespace paint
