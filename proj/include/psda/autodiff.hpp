#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "psda/matrix.hpp"

// Minimal reverse-mode automatic differentiation over dense 2-D tensors.
//
// A Tensor is a shared handle to a node holding a value and an optional
// gradient buffer. Operations take the Tape explicitly; an operation whose
// inputs all have requires_grad == false produces a constant and records
// nothing. Tape::backward replays the recorded backward rules in reverse
// order and then clears the tape.
namespace psda::ad {

inline constexpr double kLogFloor = 1e-12;

struct Node {
    Matrix value;
    Matrix grad;  // empty until first accumulation
    bool requires_grad = false;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor leaf(Matrix value, bool requires_grad);
    static Tensor constant(Matrix value) { return leaf(std::move(value), false); }

    bool defined() const { return static_cast<bool>(node_); }
    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }

    const Matrix& value() const { return node_->value; }
    // Direct mutation is for optimizers and initializers; never mutate a
    // tensor that is referenced by a live tape.
    Matrix& mutable_value() { return node_->value; }

    // Value of a (1 x 1) tensor.
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return !node_->grad.empty(); }
    const Matrix& grad() const { return node_->grad; }
    void clear_grad() { node_->grad = Matrix(); }

    // Deep copy of the value; the copy carries no gradient.
    Tensor clone() const;

    // True when both handles refer to the same node.
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    std::shared_ptr<Node> node_;

    friend class Tape;
};

// Receives d(loss)/d(output) and accumulates into input gradients.
using BackwardRule = std::function<void(const Matrix& out_grad)>;

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Builds the output tensor. When any input requires a gradient the
    // output does too and `rule` is appended to the tape. The primitive name
    // is used in non-finite diagnostics.
    Tensor record(const char* primitive, Matrix value, std::initializer_list<Tensor> inputs,
                  BackwardRule rule);
    Tensor record(const char* primitive, Matrix value, const std::vector<Tensor>& inputs,
                  BackwardRule rule);

    // Seeds d(loss)/d(loss) = 1, replays the tape in reverse, then clears it.
    void backward(const Tensor& loss);

    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    // Adds `g` into the gradient buffer of `t` when it requires a gradient.
    static void accumulate(const Tensor& t, const Matrix& g);

private:
    struct Entry {
        std::shared_ptr<Node> output;
        BackwardRule rule;
    };
    std::vector<Entry> entries_;
};

// Primitives. Binary elementwise operations broadcast `b` when it has shape
// (1 x c), (r x 1) or (1 x 1) against `a` of shape (r x c).
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor neg(Tape& tape, const Tensor& a);
Tensor scale(Tape& tape, const Tensor& a, double s);
// s * a + shift
Tensor affine(Tape& tape, const Tensor& a, double s, double shift);
Tensor relu(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor exp(Tape& tape, const Tensor& a);
// log(max(a, kLogFloor)); the gradient is zero where the floor is active.
Tensor log(Tape& tape, const Tensor& a);
Tensor clamp(Tape& tape, const Tensor& a, double lo, double hi);
Tensor softmax_rows(Tape& tape, const Tensor& a);
Tensor log_softmax_rows(Tape& tape, const Tensor& a);
Tensor sum_rows(Tape& tape, const Tensor& a);  // (r x c) -> (r x 1)
Tensor sum(Tape& tape, const Tensor& a);       // -> (1 x 1)
Tensor mean(Tape& tape, const Tensor& a);      // -> (1 x 1)
Tensor mean_cols(Tape& tape, const Tensor& a); // (r x c) -> (1 x c)
Tensor l2_normalize_rows(Tape& tape, const Tensor& a);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
// Identity forward; backward multiplies the incoming gradient by -coefficient.
Tensor grl(Tape& tape, const Tensor& a, double coefficient);
// Constant copy of the value; cuts the graph.
Tensor detach(const Tensor& a);

// Plain (non-recording) helpers shared with oracles and metrics.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix softmax_rows(const Matrix& logits);
std::vector<std::size_t> argmax_rows(const Matrix& m);

}  // namespace psda::ad
