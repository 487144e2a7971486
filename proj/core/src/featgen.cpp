#include "zsugr/featgen.hpp"

#include "zsugr/rng.hpp"
#include "zsugr/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zsugr::featgen {

using json = nlohmann::json;

namespace {
constexpr ag::Activation kHiddenAct = ag::Activation::LeakyRelu;
}

Mlp::Mlp(nn::ParamStore& store, const std::string& prefix, int in, const std::vector<int>& hidden,
         int out, Rng& rng)
    : in_(in), out_(out) {
    int prev = in;
    int idx = 0;
    for (int h : hidden) {
        layers_.emplace_back(store, prefix + ".fc" + std::to_string(idx++), prev, h, rng);
        prev = h;
    }
    layers_.emplace_back(store, prefix + ".fc" + std::to_string(idx), prev, out, rng);
}

Var Mlp::forward(const Var& x) const {
    Var h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].forward(h);
        if (i + 1 < layers_.size()) h = ag::activation(h, kHiddenAct);
    }
    return h;
}

Var Mlp::input_gradient(const Var& x, Eigen::Index lead_cols) const {
    if (out_ != 1) throw std::logic_error("input_gradient requires a scalar-output network");
    // Forward pass, keeping pre-activations of every hidden layer.
    std::vector<Var> preacts;
    Var h = x;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
        Var z = layers_[i].forward(h);
        preacts.push_back(z);
        h = ag::activation(z, kHiddenAct);
    }
    // Reverse sweep expressed with forward ops: starting from d out / d h_last
    // = W_last^T, alternate the activation Jacobian (diagonal) and the weight
    // transpose down to the input.
    const auto batch = x.rows();
    Var ones = Var::constant(Mat::Ones(batch, 1));
    Var g = ag::matmul(ones, ag::transpose(layers_.back().weight()));
    for (std::size_t i = layers_.size() - 1; i-- > 0;) {
        g = ag::cmul(g, ag::activation_prime(preacts[i], kHiddenAct));
        g = ag::matmul(g, ag::transpose(layers_[i].weight()));
    }
    if (!g.value().allFinite()) throw std::runtime_error("non-finite critic input gradient");
    return ag::slice_cols(g, 0, lead_cols);
}

void GanConfig::validate() const {
    if (lambda_gp < 0) throw std::invalid_argument("lambda_gp must be >= 0");
    if (alpha_ms < 0) throw std::invalid_argument("alpha_ms must be >= 0");
    if (critic_steps < 1) throw std::invalid_argument("critic_steps must be >= 1");
    if (d_z < 1 || n_syn_per_class < 1 || batch_size < 1 || iters < 0)
        throw std::invalid_argument("gan sizes must be positive");
}

GanBundle make_gan(const GanConfig& cfg, int feature_dim, int d_sem) {
    cfg.validate();
    GanBundle b;
    b.cfg = cfg;
    b.feature_dim = feature_dim;
    b.d_sem = d_sem;
    Rng gen_rng(derive_seed(cfg.seed, "gan-gen-init"));
    Rng critic_rng(derive_seed(cfg.seed, "gan-critic-init"));
    b.generator = Mlp(b.gen_params, "gen", cfg.d_z + d_sem, cfg.hidden, feature_dim, gen_rng);
    b.critic = Mlp(b.critic_params, "critic", feature_dim + d_sem, cfg.hidden, 1, critic_rng);
    return b;
}

namespace {

Mat interpolate_rows(const Mat& real, const Mat& fake, Rng& rho_rng) {
    Mat out(real.rows(), real.cols());
    for (Eigen::Index r = 0; r < real.rows(); ++r) {
        double rho = rho_rng.uniform();
        out.row(r) = rho * real.row(r) + (1.0 - rho) * fake.row(r);
    }
    return out;
}

} // namespace

Var gradient_penalty(const Mlp& critic, const Mat& real, const Mat& fake, const Mat& semantics,
                     Rng& rho_rng) {
    if (real.rows() != fake.rows() || real.rows() != semantics.rows())
        throw std::invalid_argument("gradient_penalty: batch sizes must match");
    Mat interp = interpolate_rows(real, fake, rho_rng);
    Var input = ag::hstack(Var::constant(interp), Var::constant(semantics));
    Var grad = critic.input_gradient(input, real.cols());
    Var norms = ag::rows_l2norm(grad);
    return ag::mean_all(ag::square(ag::add_scalar(norms, -1.0)));
}

Var critic_loss(const Mlp& critic, const Mat& real, const Mat& fake, const Mat& semantics,
                double lambda_gp, Rng& rho_rng) {
    Var s_real = ag::mean_all(critic.forward(ag::hstack(Var::constant(real), Var::constant(semantics))));
    Var s_fake = ag::mean_all(critic.forward(ag::hstack(Var::constant(fake), Var::constant(semantics))));
    Var loss = ag::sub(s_fake, s_real);
    if (lambda_gp != 0.0) {
        Var gp = gradient_penalty(critic, real, fake, semantics, rho_rng);
        loss = ag::add(loss, ag::scale(gp, lambda_gp));
    }
    return loss;
}

Var mode_seeking_ratio(const Mlp& generator, const Mat& z1, const Mat& z2, const Mat& semantics) {
    for (Eigen::Index r = 0; r < z1.rows(); ++r)
        if ((z1.row(r) - z2.row(r)).cwiseAbs().sum() < 1e-8)
            throw std::invalid_argument("mode-seeking: noise pair too close at row " +
                                        std::to_string(r));
    Var f1 = generator.forward(ag::hstack(Var::constant(z1), Var::constant(semantics)));
    Var f2 = generator.forward(ag::hstack(Var::constant(z2), Var::constant(semantics)));
    Var num = ag::rows_l1norm(ag::sub(f1, f2));
    Mat den(z1.rows(), 1);
    for (Eigen::Index r = 0; r < z1.rows(); ++r) den(r, 0) = (z1.row(r) - z2.row(r)).cwiseAbs().sum();
    return ag::mean_all(ag::cdiv(num, Var::constant(den)));
}

Var generator_loss(const Mlp& generator, const Mlp& critic, const Mat& z1, const Mat& z2,
                   const Mat& semantics, double alpha_ms) {
    Var f1 = generator.forward(ag::hstack(Var::constant(z1), Var::constant(semantics)));
    Var adv = ag::scale(
        ag::mean_all(critic.forward(ag::hstack(f1, Var::constant(semantics)))), -1.0);
    if (alpha_ms == 0.0) return adv;
    Var ms = mode_seeking_ratio(generator, z1, z2, semantics);
    return ag::sub(adv, ag::scale(ms, alpha_ms));
}

std::pair<Mat, Mat> sample_noise_pair(Eigen::Index batch, int d_z, Rng& rng) {
    Mat z1(batch, d_z), z2(batch, d_z);
    for (Eigen::Index r = 0; r < batch; ++r) {
        for (int c = 0; c < d_z; ++c) z1(r, c) = rng.normal();
        do {
            for (int c = 0; c < d_z; ++c) z2(r, c) = rng.normal();
        } while ((z1.row(r) - z2.row(r)).cwiseAbs().sum() < 1e-8);
    }
    return {z1, z2};
}

GanTrainLog train_gan(GanBundle& bundle, const std::vector<GestureFeature>& seen_features,
                      const std::map<int, RowVec>& class_semantics) {
    const auto& cfg = bundle.cfg;
    cfg.validate();
    if (seen_features.empty()) throw std::invalid_argument("train_gan: no seen features");
    for (const auto& f : seen_features)
        if (!class_semantics.count(f.class_id))
            throw std::invalid_argument("train_gan: missing semantics for class " +
                                        std::to_string(f.class_id));

    Rng batch_rng(derive_seed(cfg.seed, "gan-batch"));
    Rng noise_rng(derive_seed(cfg.seed, "gan-noise"));
    Rng rho_rng(derive_seed(cfg.seed, "gan-interp"));

    const auto n = seen_features.size();
    const auto batch = static_cast<Eigen::Index>(std::min<std::size_t>(
        static_cast<std::size_t>(cfg.batch_size), n));

    auto sample_real = [&](Mat& real, Mat& sem) {
        real.resize(batch, bundle.feature_dim);
        sem.resize(batch, bundle.d_sem);
        for (Eigen::Index r = 0; r < batch; ++r) {
            const auto& f = seen_features[batch_rng.index(n)];
            real.row(r) = f.data;
            sem.row(r) = class_semantics.at(f.class_id);
        }
    };

    nn::Adam adam_gen({cfg.lr, cfg.beta1, cfg.beta2, 1e-8, 0.0});
    nn::Adam adam_critic({cfg.lr, cfg.beta1, cfg.beta2, 1e-8, 0.0});
    GanTrainLog log;

    for (int iter = 0; iter < cfg.iters; ++iter) {
        for (int k = 0; k < cfg.critic_steps; ++k) {
            Mat real, sem;
            sample_real(real, sem);
            Mat z(batch, cfg.d_z);
            for (Eigen::Index r = 0; r < batch; ++r)
                for (int c = 0; c < cfg.d_z; ++c) z(r, c) = noise_rng.normal();
            // The generator is frozen during critic updates; its output enters
            // the loss as data.
            Mat fake = bundle.generator
                           .forward(ag::hstack(Var::constant(z), Var::constant(sem)))
                           .value();
            Var loss = critic_loss(bundle.critic, real, fake, sem, cfg.lambda_gp, rho_rng);
            const double lv = loss.value()(0, 0);
            if (!std::isfinite(lv) || std::abs(lv) > cfg.divergence_guard)
                throw std::runtime_error("critic loss diverged (|" + std::to_string(lv) +
                                         "| exceeds guard)");
            log.critic_losses.push_back(lv);
            bundle.critic_params.zero_grads();
            ag::backward(loss);
            adam_critic.step(bundle.critic_params);
        }

        auto [z1, z2] = sample_noise_pair(batch, cfg.d_z, noise_rng);
        Mat sem(batch, bundle.d_sem);
        {
            Mat real_unused;
            sample_real(real_unused, sem);
        }
        Var gloss = generator_loss(bundle.generator, bundle.critic, z1, z2, sem, cfg.alpha_ms);
        log.generator_losses.push_back(gloss.value()(0, 0));
        bundle.gen_params.zero_grads();
        bundle.critic_params.zero_grads(); // discard critic grads from this pass
        ag::backward(gloss);
        adam_gen.step(bundle.gen_params);
    }
    return log;
}

std::vector<GestureFeature> synthesize(const GanBundle& bundle,
                                       const std::map<int, RowVec>& class_semantics,
                                       const std::vector<int>& class_ids, int n_per_class,
                                       std::uint64_t seed) {
    std::vector<GestureFeature> out;
    out.reserve(class_ids.size() * static_cast<std::size_t>(n_per_class));
    for (int cid : class_ids) {
        auto it = class_semantics.find(cid);
        if (it == class_semantics.end())
            throw std::invalid_argument("synthesize: missing semantics for class " +
                                        std::to_string(cid));
        Rng rng(derive_seed(seed, "synthesize", static_cast<std::uint64_t>(cid)));
        Mat z(n_per_class, bundle.cfg.d_z);
        Mat sem(n_per_class, bundle.d_sem);
        for (int r = 0; r < n_per_class; ++r) {
            for (int c = 0; c < bundle.cfg.d_z; ++c) z(r, c) = rng.normal();
            sem.row(r) = it->second;
        }
        Mat feats = bundle.generator
                        .forward(ag::hstack(Var::constant(z), Var::constant(sem)))
                        .value();
        for (int r = 0; r < n_per_class; ++r) {
            GestureFeature f;
            f.data = feats.row(r);
            f.class_id = cid;
            f.sample_id = "syn_c" + std::to_string(cid) + "_" + std::to_string(r);
            out.push_back(std::move(f));
        }
    }
    return out;
}

namespace {

json gan_config_to_json(const GanConfig& c) {
    json j;
    j["lambda_gp"] = c.lambda_gp;
    j["alpha_ms"] = c.alpha_ms;
    j["lr"] = c.lr;
    j["critic_steps"] = c.critic_steps;
    j["d_z"] = c.d_z;
    j["n_syn_per_class"] = c.n_syn_per_class;
    j["hidden"] = c.hidden;
    j["batch_size"] = c.batch_size;
    j["iters"] = c.iters;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["divergence_guard"] = c.divergence_guard;
    j["seed"] = c.seed;
    return j;
}

GanConfig gan_config_from_json(const json& j) {
    GanConfig c;
    c.lambda_gp = j.at("lambda_gp").get<double>();
    c.alpha_ms = j.at("alpha_ms").get<double>();
    c.lr = j.at("lr").get<double>();
    c.critic_steps = j.at("critic_steps").get<int>();
    c.d_z = j.at("d_z").get<int>();
    c.n_syn_per_class = j.at("n_syn_per_class").get<int>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.batch_size = j.at("batch_size").get<int>();
    c.iters = j.at("iters").get<int>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.divergence_guard = j.at("divergence_guard").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

} // namespace

void GanBundle::save(const std::filesystem::path& path, const std::string& extra_meta_json) const {
    TensorArchive archive;
    archive.kind = "gan-checkpoint";
    json meta;
    meta["version"] = 1;
    meta["config"] = gan_config_to_json(cfg);
    meta["feature_dim"] = feature_dim;
    meta["d_sem"] = d_sem;
    meta["extra"] = json::parse(extra_meta_json);
    archive.meta_json = meta.dump();
    for (const auto& [name, p] : gen_params.items()) archive.tensors.push_back({name, p.value()});
    for (const auto& [name, p] : critic_params.items()) archive.tensors.push_back({name, p.value()});
    write_archive(path, archive);
}

GanBundle GanBundle::load(const std::filesystem::path& path) {
    TensorArchive archive = read_archive(path);
    if (archive.kind != "gan-checkpoint")
        throw std::runtime_error("not a gan checkpoint: " + path.string());
    json meta = json::parse(archive.meta_json);
    GanBundle b = make_gan(gan_config_from_json(meta.at("config")),
                           meta.at("feature_dim").get<int>(), meta.at("d_sem").get<int>());
    auto restore = [&](nn::ParamStore& store) {
        for (auto& [name, p] : store.items()) {
            const Mat* t = archive.find(name);
            if (!t) throw std::runtime_error("checkpoint missing tensor " + name);
            if (t->rows() != p.value().rows() || t->cols() != p.value().cols())
                throw std::runtime_error("checkpoint shape mismatch for " + name);
            p.value_mut() = *t;
        }
    };
    restore(b.gen_params);
    restore(b.critic_params);
    return b;
}

} // namespace zsugr::featgen
