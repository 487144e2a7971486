#include "zsugr/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace zsugr::nn {

Var ParamStore::add(const std::string& name, Mat init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Var v = Var::param(std::move(init));
    v.zero_grad();
    index_[name] = items_.size();
    items_.emplace_back(name, v);
    return v;
}

Var& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return items_[it->second].second;
}

const Var& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return items_[it->second].second;
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) > 0; }

void ParamStore::zero_grads() {
    for (auto& [name, v] : items_) v.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : items_) n += static_cast<std::size_t>(v.value().size());
    return n;
}

Mat xavier_uniform(Eigen::Index in, Eigen::Index out, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Mat m(in, out);
    for (Eigen::Index i = 0; i < in; ++i)
        for (Eigen::Index j = 0; j < out; ++j) m(i, j) = rng.uniform(-limit, limit);
    return m;
}

Linear::Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
               Rng& rng) {
    w_ = store.add(name + ".w", xavier_uniform(in, out, rng));
    b_ = store.add(name + ".b", Mat::Zero(1, out));
}

Var Linear::forward(const Var& x) const { return ag::add_rowvec(ag::matmul(x, w_), b_); }

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim) {
    gain_ = store.add(name + ".gain", Mat::Ones(1, dim));
    bias_ = store.add(name + ".bias", Mat::Zero(1, dim));
}

Var LayerNorm::forward(const Var& x) const { return ag::layernorm_rows(x, gain_, bias_); }

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name,
                                       Eigen::Index dim, int heads, Rng& rng)
    : dim_(dim), heads_(heads) {
    if (heads <= 0 || dim % heads != 0)
        throw std::invalid_argument(name + ": head count must divide model dim");
    wq_ = Linear(store, name + ".q", dim, dim, rng);
    wk_ = Linear(store, name + ".k", dim, dim, rng);
    wv_ = Linear(store, name + ".v", dim, dim, rng);
    wo_ = Linear(store, name + ".o", dim, dim, rng);
}

AttentionOut MultiHeadAttention::forward(const Var& q_in, const Var& kv_in) const {
    Var q = wq_.forward(q_in);
    Var k = wk_.forward(kv_in);
    Var v = wv_.forward(kv_in);
    const Eigen::Index dh = dim_ / heads_;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    AttentionOut result;
    Var ctx;
    for (int h = 0; h < heads_; ++h) {
        Var qh = ag::slice_cols(q, h * dh, dh);
        Var kh = ag::slice_cols(k, h * dh, dh);
        Var vh = ag::slice_cols(v, h * dh, dh);
        Var scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt_dh);
        Var attn = ag::softmax_rows(scores);
        result.head_attn.push_back(attn);
        Var ctx_h = ag::matmul(attn, vh);
        ctx = (h == 0) ? ctx_h : ag::hstack(ctx, ctx_h);
    }
    result.out = wo_.forward(ctx);
    return result;
}

FeedForward::FeedForward(ParamStore& store, const std::string& name, Eigen::Index dim,
                         Eigen::Index hidden, Eigen::Index out, Rng& rng, ag::Activation act)
    : act_(act) {
    fc1_ = Linear(store, name + ".fc1", dim, hidden, rng);
    fc2_ = Linear(store, name + ".fc2", hidden, out, rng);
}

Var FeedForward::forward(const Var& x) const {
    return fc2_.forward(ag::activation(fc1_.forward(x), act_));
}

void Adam::step(ParamStore& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, p] : params.items()) {
        auto& [m, v] = moments_[name];
        const Mat& g = p.grad();
        if (m.size() == 0) {
            m = Mat::Zero(g.rows(), g.cols());
            v = Mat::Zero(g.rows(), g.cols());
        }
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        Mat mhat = m / bc1;
        Mat vhat = v / bc2;
        Mat update = mhat.array() / (vhat.array().sqrt() + cfg_.eps);
        if (cfg_.weight_decay > 0.0) update += cfg_.weight_decay * p.value();
        p.value_mut() -= cfg_.lr * update;
    }
}

} // namespace zsugr::nn
