#pragma once

#include "zsugr/autograd.hpp"
#include "zsugr/rng.hpp"

#include <map>
#include <string>
#include <vector>

namespace zsugr::nn {

using ag::Var;

// Named parameter registry. Registration order is fixed by construction order,
// which makes seeded initialization and checkpoint layout deterministic.
class ParamStore {
public:
    Var add(const std::string& name, Mat init);
    Var& at(const std::string& name);
    const Var& at(const std::string& name) const;
    bool contains(const std::string& name) const;
    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
    void zero_grads();
    std::size_t parameter_count() const;

private:
    std::vector<std::pair<std::string, Var>> items_;
    std::map<std::string, std::size_t> index_;
};

Mat xavier_uniform(Eigen::Index in, Eigen::Index out, Rng& rng);

class Linear {
public:
    Linear() = default;
    Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);
    Var forward(const Var& x) const;
    Var weight() const { return w_; }
    Var bias() const { return b_; }

private:
    Var w_, b_;
};

class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim);
    Var forward(const Var& x) const;

private:
    Var gain_, bias_;
};

struct AttentionOut {
    Var out;
    std::vector<Var> head_attn; // row-stochastic weights, one (n_q x n_k) per head
};

class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore& store, const std::string& name, Eigen::Index dim,
                       int heads, Rng& rng);
    // q_in: (n_q x dim), kv_in: (n_k x dim)
    AttentionOut forward(const Var& q_in, const Var& kv_in) const;

private:
    Linear wq_, wk_, wv_, wo_;
    Eigen::Index dim_ = 0;
    int heads_ = 0;
};

// Two-layer position-wise feedforward with residual connection handled by the caller.
class FeedForward {
public:
    FeedForward() = default;
    FeedForward(ParamStore& store, const std::string& name, Eigen::Index dim,
                Eigen::Index hidden, Eigen::Index out, Rng& rng,
                ag::Activation act = ag::Activation::Gelu);
    Var forward(const Var& x) const;

private:
    Linear fc1_, fc2_;
    ag::Activation act_ = ag::Activation::Gelu;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; // decoupled (AdamW) when nonzero
};

class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
    void step(ParamStore& params);
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    AdamConfig cfg_;
    std::map<std::string, std::pair<Mat, Mat>> moments_;
    long t_ = 0;
};

} // namespace zsugr::nn
