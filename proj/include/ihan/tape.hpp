#pragma once

#include <functional>
#include <vector>

#include "ihan/tensor.hpp"

namespace ihan {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid for the tape that
// created it.
struct Var {
    int idx = -1;
    int rows = 0;
    int cols = 0;
};

// Define-by-run reverse-mode differentiation. A tape is built fresh for every
// forward pass; nodes are recorded in topological order, so backward() is a
// single reverse sweep. Single-threaded per instance.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Trainable leaf: receives a gradient after backward().
    Var leaf(const Tensor& value);
    // Non-trainable input; never receives a gradient.
    Var constant(const Tensor& value);
    Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double s);
    Var sigmoid(Var a);
    Var tanh_op(Var a);
    Var one_minus(Var a); // 1 - x elementwise

    // Softmax over a 1xn row. Entries where mask is false are exactly 0 in the
    // output; entries where it is true are positive and sum to 1. Stabilised by
    // max subtraction. Throws DegenerateInputError if the mask is all false.
    Var masked_softmax(Var scores, const std::vector<bool>& mask);

    // Assemble a 1xn row from n scalar (1x1) vars.
    Var concat_row(const std::vector<Var>& scalars);
    // Assemble a dxn matrix from n column (dx1) vars.
    Var concat_cols(const std::vector<Var>& columns);
    Var transpose(Var a);
    // Column `col` of a matrix as a dx1 vector; gradient scatters back into
    // that column only.
    Var pick_col(Var matrix, int col);

    // Binary cross entropy of a scalar prediction against label y in {0,1}.
    // The prediction is clamped to [1e-12, 1 - 1e-12] before the logs.
    Var bce(Var y_hat, double y);

    // Reverse sweep from a scalar loss. May be called once per tape.
    void backward(Var loss);

    const Tensor& value(Var v) const { return values_[v.idx]; }
    double scalar_value(Var v) const { return values_[v.idx](0, 0); }
    // Gradient of the loss w.r.t. this node; zero tensor if the node was never
    // reached by backward().
    const Tensor& grad(Var v) const;

    std::size_t node_count() const { return values_.size(); }

private:
    struct Node {
        std::function<void(Tape&, int)> backprop; // empty for leaves/constants
        bool needs_grad = false;
    };

    Var record(Tensor value, bool needs_grad, std::function<void(Tape&, int)> backprop);
    Tensor& grad_buf(int idx);
    bool any_needs_grad(std::initializer_list<Var> vs) const;
    void check_compatible(Var a, Var b, const char* op) const;

    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

} // namespace ihan
