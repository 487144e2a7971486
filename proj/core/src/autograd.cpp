#include "zsugr/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace zsugr::ag {

namespace {

constexpr double kLeakySlope = 0.2;
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

} // namespace

Activation activation_from_string(const std::string& name) {
    if (name == "gelu") return Activation::Gelu;
    if (name == "elu") return Activation::Elu;
    if (name == "relu") return Activation::Relu;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "silu") return Activation::Silu;
    if (name == "leaky_relu") return Activation::LeakyRelu;
    throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Gelu: return "gelu";
        case Activation::Elu: return "elu";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Silu: return "silu";
        case Activation::LeakyRelu: return "leaky_relu";
    }
    return "?";
}

double act_value(Activation a, double x) {
    switch (a) {
        case Activation::Gelu: return x * norm_cdf(x);
        case Activation::Elu: return x > 0 ? x : std::expm1(x);
        case Activation::Relu: return x > 0 ? x : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Silu: return x / (1.0 + std::exp(-x));
        case Activation::LeakyRelu: return x > 0 ? x : kLeakySlope * x;
    }
    return 0.0;
}

double act_deriv(Activation a, double x) {
    switch (a) {
        case Activation::Gelu: return norm_cdf(x) + x * norm_pdf(x);
        case Activation::Elu: return x > 0 ? 1.0 : std::exp(x);
        case Activation::Relu: return x > 0 ? 1.0 : 0.0;
        case Activation::Sigmoid: {
            double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
        case Activation::Silu: {
            double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        }
        case Activation::LeakyRelu: return x > 0 ? 1.0 : kLeakySlope;
    }
    return 0.0;
}

double act_deriv2(Activation a, double x) {
    switch (a) {
        case Activation::Gelu: return (2.0 - x * x) * norm_pdf(x);
        case Activation::Elu: return x > 0 ? 0.0 : std::exp(x);
        case Activation::Relu: return 0.0;
        case Activation::Sigmoid: {
            double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s) * (1.0 - 2.0 * s);
        }
        case Activation::Silu: {
            double s = 1.0 / (1.0 + std::exp(-x));
            double sp = s * (1.0 - s);
            double spp = sp * (1.0 - 2.0 * s);
            return 2.0 * sp + x * spp;
        }
        case Activation::LeakyRelu: return 0.0;
    }
    return 0.0;
}

Var::Var(Mat value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

const Mat& Var::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Var::zero_grad() const {
    node_->grad = Mat::Zero(node_->value.rows(), node_->value.cols());
}

namespace {

Var make_node(Mat value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    Var out(std::move(value), needs);
    if (needs) {
        auto n = out.node();
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return out;
}

void accum(Node& n, const Mat& g) {
    if (!n.requires_grad && n.parents.empty() && !n.backward_fn) {
        // constants do not need storage, but keeping it is harmless; skip.
        return;
    }
    n.ensure_grad();
    n.grad += g;
}

} // namespace

void backward(const Var& root) {
    if (root.rows() != 1 || root.cols() != 1) {
        throw std::invalid_argument("backward: root must be a 1x1 scalar");
    }
    // Iterative post-order DFS gives a topological order of the DAG.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad();
    root.node()->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims mismatch");
    Mat v = a.value() * b.value();
    return make_node(std::move(v), {a, b}, [ap = a.node(), bp = b.node()](Node& self) {
        if (ap->requires_grad) accum(*ap, self.grad * bp->value.transpose());
        if (bp->requires_grad) accum(*bp, ap->value.transpose() * self.grad);
    });
}

Var add(const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("add: shape mismatch");
    return make_node(a.value() + b.value(), {a, b}, [ap = a.node(), bp = b.node()](Node& self) {
        if (ap->requires_grad) accum(*ap, self.grad);
        if (bp->requires_grad) accum(*bp, self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("sub: shape mismatch");
    return make_node(a.value() - b.value(), {a, b}, [ap = a.node(), bp = b.node()](Node& self) {
        if (ap->requires_grad) accum(*ap, self.grad);
        if (bp->requires_grad) accum(*bp, -self.grad);
    });
}

Var cmul(const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("cmul: shape mismatch");
    return make_node(a.value().cwiseProduct(b.value()), {a, b},
                     [ap = a.node(), bp = b.node()](Node& self) {
                         if (ap->requires_grad) accum(*ap, self.grad.cwiseProduct(bp->value));
                         if (bp->requires_grad) accum(*bp, self.grad.cwiseProduct(ap->value));
                     });
}

Var cdiv(const Var& a, const Var& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("cdiv: shape mismatch");
    return make_node(a.value().cwiseQuotient(b.value()), {a, b},
                     [ap = a.node(), bp = b.node()](Node& self) {
                         if (ap->requires_grad) accum(*ap, self.grad.cwiseQuotient(bp->value));
                         if (bp->requires_grad) {
                             Mat g = -self.grad.cwiseProduct(ap->value)
                                          .cwiseQuotient(bp->value.cwiseProduct(bp->value));
                             accum(*bp, g);
                         }
                     });
}

Var add_rowvec(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_rowvec: shape mismatch");
    Mat v = a.value().rowwise() + Eigen::RowVectorXd(row.value().row(0));
    return make_node(std::move(v), {a, row}, [ap = a.node(), rp = row.node()](Node& self) {
        if (ap->requires_grad) accum(*ap, self.grad);
        if (rp->requires_grad) accum(*rp, self.grad.colwise().sum());
    });
}

Var cmul_rowvec(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("cmul_rowvec: shape mismatch");
    Mat v = a.value().array().rowwise() * row.value().row(0).array();
    return make_node(std::move(v), {a, row}, [ap = a.node(), rp = row.node()](Node& self) {
        if (ap->requires_grad) {
            Mat g = self.grad.array().rowwise() * rp->value.row(0).array();
            accum(*ap, g);
        }
        if (rp->requires_grad) accum(*rp, self.grad.cwiseProduct(ap->value).colwise().sum());
    });
}

Var scale(const Var& a, double s) {
    return make_node(a.value() * s, {a}, [ap = a.node(), s](Node& self) {
        accum(*ap, self.grad * s);
    });
}

Var add_scalar(const Var& a, double c) {
    return make_node(a.value().array() + c, {a}, [ap = a.node()](Node& self) {
        accum(*ap, self.grad);
    });
}

Var transpose(const Var& a) {
    return make_node(a.value().transpose(), {a}, [ap = a.node()](Node& self) {
        accum(*ap, self.grad.transpose());
    });
}

Var hstack(const Var& a, const Var& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("hstack: row mismatch");
    Mat v(a.rows(), a.cols() + b.cols());
    v << a.value(), b.value();
    return make_node(std::move(v), {a, b},
                     [ap = a.node(), bp = b.node(), ac = a.cols(), bc = b.cols()](Node& self) {
                         if (ap->requires_grad) accum(*ap, self.grad.leftCols(ac));
                         if (bp->requires_grad) accum(*bp, self.grad.rightCols(bc));
                     });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index len) {
    if (start < 0 || start + len > a.cols()) throw std::invalid_argument("slice_cols: out of range");
    return make_node(a.value().middleCols(start, len), {a},
                     [ap = a.node(), start, len](Node& self) {
                         Mat g = Mat::Zero(ap->value.rows(), ap->value.cols());
                         g.middleCols(start, len) = self.grad;
                         accum(*ap, g);
                     });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index len) {
    if (start < 0 || start + len > a.rows()) throw std::invalid_argument("slice_rows: out of range");
    return make_node(a.value().middleRows(start, len), {a},
                     [ap = a.node(), start, len](Node& self) {
                         Mat g = Mat::Zero(ap->value.rows(), ap->value.cols());
                         g.middleRows(start, len) = self.grad;
                         accum(*ap, g);
                     });
}

Var activation(const Var& a, Activation kind) {
    Mat v = a.value().unaryExpr([kind](double x) { return act_value(kind, x); });
    return make_node(std::move(v), {a}, [ap = a.node(), kind](Node& self) {
        Mat d = ap->value.unaryExpr([kind](double x) { return act_deriv(kind, x); });
        accum(*ap, self.grad.cwiseProduct(d));
    });
}

Var activation_prime(const Var& a, Activation kind) {
    Mat v = a.value().unaryExpr([kind](double x) { return act_deriv(kind, x); });
    return make_node(std::move(v), {a}, [ap = a.node(), kind](Node& self) {
        Mat d2 = ap->value.unaryExpr([kind](double x) { return act_deriv2(kind, x); });
        accum(*ap, self.grad.cwiseProduct(d2));
    });
}

Var softmax_rows(const Var& a) {
    Mat v(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        double m = a.value().row(r).maxCoeff();
        Eigen::RowVectorXd e = (a.value().row(r).array() - m).exp();
        v.row(r) = e / e.sum();
    }
    return make_node(std::move(v), {a}, [ap = a.node()](Node& self) {
        Mat g(self.value.rows(), self.value.cols());
        for (Eigen::Index r = 0; r < self.value.rows(); ++r) {
            const auto p = self.value.row(r);
            const auto gr = self.grad.row(r);
            double dot = gr.dot(p);
            g.row(r) = p.cwiseProduct((gr.array() - dot).matrix());
        }
        accum(*ap, g);
    });
}

Var layernorm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
    const Eigen::Index n = a.cols();
    if (gain.cols() != n || bias.cols() != n || gain.rows() != 1 || bias.rows() != 1)
        throw std::invalid_argument("layernorm_rows: affine shape mismatch");
    Mat v(a.rows(), n);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        double mu = a.value().row(r).mean();
        double var = (a.value().row(r).array() - mu).square().mean();
        double s = std::sqrt(var + eps);
        v.row(r) = (((a.value().row(r).array() - mu) / s) * gain.value().row(0).array()) +
                   bias.value().row(0).array();
    }
    return make_node(std::move(v), {a, gain, bias},
                     [ap = a.node(), gp = gain.node(), bp = bias.node(), eps](Node& self) {
                         const Eigen::Index n = ap->value.cols();
                         Mat ga = Mat::Zero(ap->value.rows(), n);
                         Mat ggain = Mat::Zero(1, n);
                         Mat gbias = Mat::Zero(1, n);
                         for (Eigen::Index r = 0; r < ap->value.rows(); ++r) {
                             double mu = ap->value.row(r).mean();
                             double var = (ap->value.row(r).array() - mu).square().mean();
                             double s = std::sqrt(var + eps);
                             Eigen::RowVectorXd xhat = (ap->value.row(r).array() - mu) / s;
                             Eigen::RowVectorXd h =
                                 self.grad.row(r).cwiseProduct(gp->value.row(0));
                             double mh = h.mean();
                             double mhx = h.cwiseProduct(xhat).mean();
                             ga.row(r) = (h.array() - mh - xhat.array() * mhx) / s;
                             ggain.row(0) += self.grad.row(r).cwiseProduct(xhat);
                             gbias.row(0) += self.grad.row(r);
                         }
                         if (ap->requires_grad) accum(*ap, ga);
                         if (gp->requires_grad) accum(*gp, ggain);
                         if (bp->requires_grad) accum(*bp, gbias);
                     });
}

Var mean_all(const Var& a) {
    Mat v(1, 1);
    v(0, 0) = a.value().mean();
    return make_node(std::move(v), {a}, [ap = a.node()](Node& self) {
        double g = self.grad(0, 0) / static_cast<double>(ap->value.size());
        accum(*ap, Mat::Constant(ap->value.rows(), ap->value.cols(), g));
    });
}

Var sum_all(const Var& a) {
    Mat v(1, 1);
    v(0, 0) = a.value().sum();
    return make_node(std::move(v), {a}, [ap = a.node()](Node& self) {
        accum(*ap, Mat::Constant(ap->value.rows(), ap->value.cols(), self.grad(0, 0)));
    });
}

Var mean_over_rows(const Var& a) {
    Mat v = a.value().colwise().mean();
    return make_node(std::move(v), {a}, [ap = a.node()](Node& self) {
        double inv = 1.0 / static_cast<double>(ap->value.rows());
        Mat g = (self.grad * inv).replicate(ap->value.rows(), 1);
        accum(*ap, g);
    });
}

Var rows_l2norm(const Var& a) {
    Mat v(a.rows(), 1);
    for (Eigen::Index r = 0; r < a.rows(); ++r) v(r, 0) = a.value().row(r).norm();
    return make_node(std::move(v), {a}, [ap = a.node()](Node& self) {
        Mat g = Mat::Zero(ap->value.rows(), ap->value.cols());
        for (Eigen::Index r = 0; r < ap->value.rows(); ++r) {
            double nrm = self.value(r, 0);
            if (nrm > 0) g.row(r) = (self.grad(r, 0) / nrm) * ap->value.row(r);
        }
        accum(*ap, g);
    });
}

Var rows_l1norm(const Var& a) {
    Mat v(a.rows(), 1);
    for (Eigen::Index r = 0; r < a.rows(); ++r) v(r, 0) = a.value().row(r).cwiseAbs().sum();
    return make_node(std::move(v), {a}, [ap = a.node()](Node& self) {
        Mat g(ap->value.rows(), ap->value.cols());
        for (Eigen::Index r = 0; r < ap->value.rows(); ++r) {
            g.row(r) = self.grad(r, 0) *
                       ap->value.row(r).unaryExpr([](double x) {
                           return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
                       });
        }
        accum(*ap, g);
    });
}

Var square(const Var& a) {
    return make_node(a.value().cwiseProduct(a.value()), {a}, [ap = a.node()](Node& self) {
        accum(*ap, 2.0 * self.grad.cwiseProduct(ap->value));
    });
}

Var cross_entropy_with_logits(const Var& logits, const std::vector<int>& targets) {
    const Eigen::Index B = logits.rows();
    if (static_cast<Eigen::Index>(targets.size()) != B)
        throw std::invalid_argument("cross_entropy_with_logits: target count mismatch");
    double total = 0.0;
    for (Eigen::Index r = 0; r < B; ++r) {
        double m = logits.value().row(r).maxCoeff();
        double lse = m + std::log((logits.value().row(r).array() - m).exp().sum());
        total += lse - logits.value()(r, targets[static_cast<std::size_t>(r)]);
    }
    Mat v(1, 1);
    v(0, 0) = total / static_cast<double>(B);
    return make_node(std::move(v), {logits}, [lp = logits.node(), targets](Node& self) {
        const Eigen::Index B = lp->value.rows();
        Mat g(B, lp->value.cols());
        for (Eigen::Index r = 0; r < B; ++r) {
            double m = lp->value.row(r).maxCoeff();
            Eigen::RowVectorXd e = (lp->value.row(r).array() - m).exp();
            g.row(r) = e / e.sum();
            g(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
        }
        g *= self.grad(0, 0) / static_cast<double>(B);
        accum(*lp, g);
    });
}

} // namespace zsugr::ag
