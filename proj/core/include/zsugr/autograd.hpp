#pragma once

#include "zsugr/matrix.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace zsugr::ag {

using zsugr::Mat;

enum class Activation { Gelu, Elu, Relu, Sigmoid, Silu, LeakyRelu };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

// Scalar activation value and first/second derivatives. The second derivative
// is what makes gradient-of-gradient terms (gradient penalty) exact.
double act_value(Activation a, double x);
double act_deriv(Activation a, double x);
double act_deriv2(Activation a, double x);

struct Node {
    Mat value;
    Mat grad; // empty until touched by backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    }
};

// Value-semantics handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Mat value, bool requires_grad = false);

    static Var param(Mat value) { return Var(std::move(value), true); }
    static Var constant(Mat value) { return Var(std::move(value), false); }

    bool defined() const { return node_ != nullptr; }
    const Mat& value() const { return node_->value; }
    // Mutators are const: a Var is a handle, the node is shared state.
    Mat& value_mut() const { return node_->value; }
    const Mat& grad() const;
    void zero_grad() const;
    bool requires_grad() const { return node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }

    // A grad-less copy of the value; cuts the graph.
    Var detach() const { return Var(node_->value, false); }

    std::shared_ptr<Node> node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Runs reverse-mode accumulation from a scalar (1x1) root. Gradients
// accumulate into every reachable node with requires_grad set, so parameter
// leaves must be zeroed between optimizer steps, not between samples.
void backward(const Var& root);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);
Var cdiv(const Var& a, const Var& b);
Var add_rowvec(const Var& a, const Var& row);
Var cmul_rowvec(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double c);
Var transpose(const Var& a);
Var hstack(const Var& a, const Var& b);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index len);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index len);
Var activation(const Var& a, Activation kind);
// phi'(a) as a value. Differentiable: its backward uses phi''.
Var activation_prime(const Var& a, Activation kind);
Var softmax_rows(const Var& a);
Var layernorm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
Var mean_all(const Var& a);
Var sum_all(const Var& a);
Var mean_over_rows(const Var& a);
Var rows_l2norm(const Var& a);
Var rows_l1norm(const Var& a);
Var square(const Var& a);
// Mean over rows of (logsumexp(row) - row[target]).
Var cross_entropy_with_logits(const Var& logits, const std::vector<int>& targets);

} // namespace zsugr::ag
