#include "zsugr/gcat.hpp"

#include "zsugr/rng.hpp"
#include "zsugr/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <thread>

namespace zsugr::gcat {

using json = nlohmann::json;

Variant variant_from_string(const std::string& name) {
    if (name == "full") return Variant::Full;
    if (name == "encoder_only") return Variant::EncoderOnly;
    if (name == "backbone_only") return Variant::BackboneOnly;
    throw std::invalid_argument("unknown gcat variant: " + name);
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::EncoderOnly: return "encoder_only";
        case Variant::BackboneOnly: return "backbone_only";
    }
    return "?";
}

void GcatConfig::validate() const {
    if (c_backbone <= 0 || c_clip <= 0 || d_out <= 0 || grid_h <= 0 || grid_w <= 0)
        throw std::invalid_argument("gcat dims must be positive");
    if (clip_tokens - 1 != tokens())
        throw std::invalid_argument("clip patch tokens (" + std::to_string(clip_tokens - 1) +
                                    ") must match the backbone grid (" + std::to_string(tokens()) + ")");
    if (c_backbone % heads != 0 || c_clip % heads != 0)
        throw std::invalid_argument("head count must divide c_backbone and c_clip");
    if (c_clip % 2 != 0)
        throw std::invalid_argument("c_clip must be even (gates halve the channel dim)");
    if (c_backbone % 2 != 0)
        throw std::invalid_argument("c_backbone must be even (2-D sinusoidal embedding)");
    if (enc_blocks < 1 || dec_blocks < 1 || heads < 1 || ffn_mult < 1)
        throw std::invalid_argument("block, head and ffn-mult counts must be >= 1");
}

Mat positional_embedding(int grid_h, int grid_w, int channels) {
    if (channels % 2 != 0) throw std::invalid_argument("positional embedding needs even channels");
    const int half = channels / 2;
    Mat pos(grid_h * grid_w, channels);
    auto fill_axis = [&](int offset, int coord_max, bool is_y) {
        for (int y = 0; y < grid_h; ++y) {
            for (int x = 0; x < grid_w; ++x) {
                const int t = y * grid_w + x;
                const double coord = is_y ? y : x;
                (void)coord_max;
                for (int c = 0; c < half; ++c) {
                    double freq = std::pow(10000.0, 2.0 * (c / 2) / static_cast<double>(half));
                    double angle = coord / freq;
                    pos(t, offset + c) = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
                }
            }
        }
    };
    fill_axis(0, grid_h, true);
    fill_axis(half, grid_w, false);
    return pos;
}

Gcat::Gcat(GcatConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    pos_ = positional_embedding(cfg_.grid_h, cfg_.grid_w, cfg_.c_backbone);
    Rng rng(derive_seed(cfg_.seed, "gcat-init"));

    for (int b = 0; b < cfg_.enc_blocks; ++b) {
        std::string p = "enc." + std::to_string(b);
        EncoderBlock blk;
        blk.attn = nn::MultiHeadAttention(params_, p + ".attn", cfg_.c_backbone, cfg_.heads, rng);
        blk.ln1 = nn::LayerNorm(params_, p + ".ln1", cfg_.c_backbone);
        blk.ffn = nn::FeedForward(params_, p + ".ffn", cfg_.c_backbone,
                                  cfg_.ffn_mult * cfg_.c_backbone, cfg_.c_backbone, rng);
        blk.ln2 = nn::LayerNorm(params_, p + ".ln2", cfg_.c_backbone);
        encoder_.push_back(std::move(blk));
    }
    clip_projection_ = nn::Linear(params_, "proj", cfg_.c_backbone, cfg_.c_clip, rng);
    for (int b = 0; b < cfg_.dec_blocks; ++b) {
        std::string p = "dec." + std::to_string(b);
        DecoderBlock blk;
        blk.attn_left = nn::MultiHeadAttention(params_, p + ".attn_l", cfg_.c_clip, cfg_.heads, rng);
        blk.ln_left = nn::LayerNorm(params_, p + ".ln_l", cfg_.c_clip);
        blk.attn_right = nn::MultiHeadAttention(params_, p + ".attn_r", cfg_.c_clip, cfg_.heads, rng);
        blk.ln_right = nn::LayerNorm(params_, p + ".ln_r", cfg_.c_clip);
        blk.gate_left = nn::Linear(params_, p + ".gate_l", cfg_.c_clip, cfg_.c_clip / 2, rng);
        blk.gate_right = nn::Linear(params_, p + ".gate_r", cfg_.c_clip, cfg_.c_clip / 2, rng);
        blk.has_ffn = (b + 1 < cfg_.dec_blocks);
        if (blk.has_ffn) {
            blk.ffn = nn::FeedForward(params_, p + ".ffn", cfg_.c_clip, cfg_.ffn_mult * cfg_.c_clip,
                                      cfg_.c_clip, rng);
            blk.ln_ffn = nn::LayerNorm(params_, p + ".ln_ffn", cfg_.c_clip);
        }
        decoder_.push_back(std::move(blk));
    }
    output_head_ = nn::Linear(params_, "head", cfg_.c_clip, cfg_.d_out, rng);
}

int Gcat::feature_dim() const {
    switch (cfg_.variant) {
        case Variant::Full: return cfg_.d_out;
        case Variant::EncoderOnly: return cfg_.c_clip;
        case Variant::BackboneOnly: return cfg_.c_backbone;
    }
    return cfg_.d_out;
}

Var Gcat::encode_with_pos(const Var& vb_tokens, const Mat& pos) const {
    require_shape(vb_tokens.value(), cfg_.tokens(), cfg_.c_backbone, "encoder input");
    Var x = ag::add(vb_tokens, Var::constant(pos));
    int b = 0;
    for (const auto& blk : encoder_) {
        Var attended = ag::add(x, blk.attn.forward(x, x).out);
        Var a = blk.ln1.forward(attended);
        x = blk.ln2.forward(ag::add(a, blk.ffn.forward(a)));
        if (!x.value().allFinite())
            throw std::runtime_error("non-finite value at encoder block " + std::to_string(b));
        ++b;
    }
    return x;
}

Var Gcat::encode(const Var& vb_tokens) const { return encode_with_pos(vb_tokens, pos_); }

DecodeResult Gcat::decode(const Var& encoder_out, const Var& clip_patch_tokens) const {
    require_shape(clip_patch_tokens.value(), cfg_.tokens(), cfg_.c_clip, "decoder clip tokens");
    DecodeResult result;
    Var o = clip_projection_.forward(encoder_out);
    const Var& vc = clip_patch_tokens;
    int b = 0;
    for (const auto& blk : decoder_) {
        auto ca_l = blk.attn_left.forward(o, vc);
        Var a_l = blk.ln_left.forward(ag::add(o, ca_l.out));
        auto ca_r = blk.attn_right.forward(vc, o);
        Var a_r = blk.ln_right.forward(ag::add(vc, ca_r.out));
        result.left_attn.push_back(std::move(ca_l.head_attn));
        result.right_attn.push_back(std::move(ca_r.head_attn));
        result.branch_left.push_back(a_l);
        result.branch_right.push_back(a_r);

        Var multiplier;
        if (cfg_.gated_fusion) {
            Var g_l = ag::activation(blk.gate_left.forward(a_l), cfg_.gate_activation);
            Var g_r = ag::activation(blk.gate_right.forward(a_r), cfg_.gate_activation);
            result.gate_left.push_back(g_l);
            result.gate_right.push_back(g_r);
            multiplier = ag::hstack(g_l, g_r);
        } else {
            multiplier = ag::add(a_l, a_r);
        }
        o = ag::cmul(o, multiplier);
        if (blk.has_ffn) o = blk.ln_ffn.forward(ag::add(o, blk.ffn.forward(o)));
        if (!o.value().allFinite())
            throw std::runtime_error("non-finite value at decoder block " + std::to_string(b));
        ++b;
    }
    result.feature = ag::mean_over_rows(output_head_.forward(o));
    return result;
}

DecodeResult Gcat::forward(const FeatureMap& vb, const ClipTokenGrid& vc) const {
    require_shape(vb.tokens, cfg_.tokens(), cfg_.c_backbone, "backbone feature map");
    Var vb_tokens = Var::constant(vb.tokens);
    DecodeResult result;
    switch (cfg_.variant) {
        case Variant::BackboneOnly:
            result.feature = ag::mean_over_rows(vb_tokens);
            return result;
        case Variant::EncoderOnly: {
            Var o_e = encode(vb_tokens);
            result.feature = ag::mean_over_rows(clip_projection_.forward(o_e));
            return result;
        }
        case Variant::Full: {
            Var o_e = encode(vb_tokens);
            Var patches = Var::constant(providers::strip_summary_token(vc));
            return decode(o_e, patches);
        }
    }
    return result;
}

std::string Gcat::fingerprint() const {
    json j;
    j["kind"] = "gcat";
    j["cfg"] = {cfg_.c_backbone, cfg_.grid_h,    cfg_.grid_w,
                cfg_.clip_tokens, cfg_.c_clip,   cfg_.d_out,
                cfg_.enc_blocks,  cfg_.dec_blocks, cfg_.heads,
                cfg_.ffn_mult};
    j["gate"] = ag::to_string(cfg_.gate_activation);
    j["fusion"] = cfg_.gated_fusion;
    j["variant"] = to_string(cfg_.variant);
    j["seed"] = cfg_.seed;
    // Parameters change during training; hash them so caches invalidate.
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, p] : params_.items()) {
        h ^= fnv1a64(name);
        const Mat& m = p.value();
        h ^= fnv1a64(std::string_view(reinterpret_cast<const char*>(m.data()),
                                      static_cast<std::size_t>(m.size()) * sizeof(double)));
        h *= 0x100000001b3ull;
    }
    j["params"] = h;
    return j.dump();
}

namespace {

json config_to_json(const GcatConfig& c) {
    json j;
    j["c_backbone"] = c.c_backbone;
    j["grid_h"] = c.grid_h;
    j["grid_w"] = c.grid_w;
    j["clip_tokens"] = c.clip_tokens;
    j["c_clip"] = c.c_clip;
    j["d_out"] = c.d_out;
    j["enc_blocks"] = c.enc_blocks;
    j["dec_blocks"] = c.dec_blocks;
    j["heads"] = c.heads;
    j["ffn_mult"] = c.ffn_mult;
    j["gate_activation"] = ag::to_string(c.gate_activation);
    j["gated_fusion"] = c.gated_fusion;
    j["variant"] = to_string(c.variant);
    j["seed"] = c.seed;
    return j;
}

GcatConfig config_from_json(const json& j) {
    GcatConfig c;
    c.c_backbone = j.at("c_backbone").get<int>();
    c.grid_h = j.at("grid_h").get<int>();
    c.grid_w = j.at("grid_w").get<int>();
    c.clip_tokens = j.at("clip_tokens").get<int>();
    c.c_clip = j.at("c_clip").get<int>();
    c.d_out = j.at("d_out").get<int>();
    c.enc_blocks = j.at("enc_blocks").get<int>();
    c.dec_blocks = j.at("dec_blocks").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ffn_mult = j.at("ffn_mult").get<int>();
    c.gate_activation = ag::activation_from_string(j.at("gate_activation").get<std::string>());
    c.gated_fusion = j.at("gated_fusion").get<bool>();
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

} // namespace

void Gcat::save(const std::filesystem::path& path, const std::string& extra_meta_json) const {
    TensorArchive archive;
    archive.kind = "gcat-checkpoint";
    json meta;
    meta["version"] = 1;
    meta["config"] = config_to_json(cfg_);
    meta["extra"] = json::parse(extra_meta_json);
    archive.meta_json = meta.dump();
    for (const auto& [name, p] : params_.items()) archive.tensors.push_back({name, p.value()});
    write_archive(path, archive);
}

Gcat Gcat::load(const std::filesystem::path& path) {
    TensorArchive archive = read_archive(path);
    if (archive.kind != "gcat-checkpoint")
        throw std::runtime_error("not a gcat checkpoint: " + path.string());
    json meta = json::parse(archive.meta_json);
    Gcat model(config_from_json(meta.at("config")));
    for (auto& [name, p] : model.params_.items()) {
        const Mat* t = archive.find(name);
        if (!t) throw std::runtime_error("checkpoint missing tensor " + name);
        if (t->rows() != p.value().rows() || t->cols() != p.value().cols())
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        p.value_mut() = *t;
    }
    return model;
}

Var Stage1Head::logits(const Var& feature) const {
    return ag::add_rowvec(ag::matmul(feature, weight), bias);
}

int Stage1Head::head_index(int class_id) const {
    for (std::size_t i = 0; i < seen_class_ids.size(); ++i)
        if (seen_class_ids[i] == class_id) return static_cast<int>(i);
    throw std::out_of_range("class id " + std::to_string(class_id) + " is not a seen class");
}

Stage1Head make_stage1_head(const std::vector<providers::SemanticVector>& seen_semantics,
                            const std::vector<int>& seen_class_ids, int feature_dim) {
    if (seen_semantics.size() != seen_class_ids.size() || seen_semantics.empty())
        throw std::invalid_argument("need one semantic vector per seen class");
    const auto n = static_cast<Eigen::Index>(seen_semantics.size());
    Mat w(feature_dim, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const RowVec& a = seen_semantics[static_cast<std::size_t>(i)].data;
        if (a.size() == feature_dim) {
            w.col(i) = a.transpose();
        } else {
            // Feature dim differs from the semantic dim (ablation variants):
            // tile/truncate deterministically so the init is still semantic.
            for (Eigen::Index r = 0; r < feature_dim; ++r) w(r, i) = a(r % a.size());
            w.col(i) /= w.col(i).norm();
        }
    }
    Stage1Head head;
    head.weight = head.store.add("head.w", std::move(w));
    head.bias = head.store.add("head.b", Mat::Zero(1, n));
    head.seen_class_ids = seen_class_ids;
    return head;
}

namespace {

struct TrainSample {
    const dataset::SampleRecord* record;
    int head_index;
};

} // namespace

Stage1Result stage1_train(Gcat& model, Stage1Head& head, const dataset::SplitSpec& split,
                          const dataset::Manifest& manifest, const providers::Provider& provider,
                          const Stage1Config& cfg) {
    std::map<std::string, const dataset::SampleRecord*> by_id;
    for (const auto& r : manifest.records) by_id[r.sample_id] = &r;

    std::vector<TrainSample> samples;
    samples.reserve(split.seen_train_ids.size());
    for (const auto& id : split.seen_train_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw std::runtime_error("seen_train id not in manifest: " + id);
        samples.push_back({it->second, head.head_index(it->second->class_id)});
    }
    if (samples.empty()) throw std::runtime_error("stage-1 training set is empty");

    nn::AdamConfig model_opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
    nn::Adam adam_model(model_opt);
    nn::Adam adam_head(model_opt);

    Stage1Result result;
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "stage1-epoch", static_cast<std::uint64_t>(epoch)));
        shuffle_in_place(order, rng);
        double epoch_loss = 0.0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const std::size_t batch_n =
                std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                      order.size() - cursor);
            model.params().zero_grads();
            head.store.zero_grads();
            for (std::size_t i = 0; i < batch_n; ++i) {
                const auto& s = samples[order[cursor + i]];
                auto fm = provider.backbone_features(s.record->image_ref);
                auto grid = provider.clip_image_tokens(s.record->image_ref);
                auto decoded = model.forward(fm, grid);
                Var ce = ag::cross_entropy_with_logits(head.logits(decoded.feature),
                                                       {s.head_index});
                epoch_loss += ce.value()(0, 0);
                ag::backward(ag::scale(ce, 1.0 / static_cast<double>(batch_n)));
            }
            adam_model.step(model.params());
            adam_head.step(head.store);
            cursor += batch_n;
        }
        epoch_loss /= static_cast<double>(samples.size());
        result.epoch_losses.push_back(epoch_loss);
        if (cfg.verbose)
            std::fprintf(stderr, "[stage1] epoch %d/%d loss %.6f\n", epoch + 1, cfg.epochs,
                         epoch_loss);
    }
    result.final_epoch_loss = result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back();

    std::size_t correct = 0;
    for (const auto& s : samples) {
        auto fm = provider.backbone_features(s.record->image_ref);
        auto grid = provider.clip_image_tokens(s.record->image_ref);
        auto decoded = model.forward(fm, grid);
        Mat logits = head.logits(decoded.feature).value();
        Eigen::Index arg;
        logits.row(0).maxCoeff(&arg);
        if (static_cast<int>(arg) == s.head_index) ++correct;
    }
    result.train_top1 = 100.0 * static_cast<double>(correct) / static_cast<double>(samples.size());
    return result;
}

std::vector<GestureFeature> extract_features(const Gcat& model,
                                             const std::vector<dataset::SampleRecord>& samples,
                                             const providers::Provider& provider, int workers) {
    std::vector<GestureFeature> out(samples.size());
    auto run = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto fm = provider.backbone_features(samples[i].image_ref);
            auto grid = provider.clip_image_tokens(samples[i].image_ref);
            auto decoded = model.forward(fm, grid);
            out[i].data = decoded.feature.value().row(0);
            out[i].sample_id = samples[i].sample_id;
            out[i].class_id = samples[i].class_id;
        }
    };
    if (workers <= 1 || samples.size() < 2) {
        run(0, samples.size());
    } else {
        const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers),
                                                            samples.size());
        std::vector<std::thread> pool;
        const std::size_t chunk = (samples.size() + n_threads - 1) / n_threads;
        for (std::size_t t = 0; t < n_threads; ++t) {
            std::size_t b = t * chunk;
            std::size_t e = std::min(samples.size(), b + chunk);
            if (b < e) pool.emplace_back(run, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

AttentionMaps attention_maps(const Gcat& model, const dataset::SampleRecord& sample,
                             const providers::Provider& provider) {
    if (model.config().variant != Variant::Full)
        throw std::runtime_error("attention maps require the full model (decoder active)");
    auto fm = provider.backbone_features(sample.image_ref);
    auto grid = provider.clip_image_tokens(sample.image_ref);
    auto decoded = model.forward(fm, grid);
    AttentionMaps maps;
    const int h = model.config().grid_h, w = model.config().grid_w;
    for (const auto& heads : decoded.left_attn) {
        Mat map = Mat::Zero(h, w);
        std::vector<Mat> raw_block;
        for (const auto& attn : heads) {
            const Mat& a = attn.value();
            raw_block.push_back(a);
            for (Eigen::Index q = 0; q < a.rows(); ++q) {
                // Saliency per query cell: peak attention strength, averaged
                // over heads. (The mean over keys is 1/N for every row of a
                // stochastic matrix, so the peak is the informative pooling.)
                map(q / w, q % w) += a.row(q).maxCoeff() / static_cast<double>(heads.size());
            }
        }
        maps.per_block.push_back(std::move(map));
        maps.raw.push_back(std::move(raw_block));
    }
    return maps;
}

} // namespace zsugr::gcat
