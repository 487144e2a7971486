#pragma once

#include "zsugr/dataset.hpp"
#include "zsugr/nn.hpp"
#include "zsugr/providers.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace zsugr::gcat {

using ag::Var;
using providers::ClipTokenGrid;
using providers::FeatureMap;
using providers::GestureFeature;

enum class Variant { Full, EncoderOnly, BackboneOnly };
Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

struct GcatConfig {
    int c_backbone = 256;
    int grid_h = 7;
    int grid_w = 7;
    int clip_tokens = 50; // includes summary token; patch count must equal grid_h*grid_w
    int c_clip = 768;
    int d_out = 512;
    int enc_blocks = 3;
    int dec_blocks = 3;
    int heads = 8;
    int ffn_mult = 2;
    ag::Activation gate_activation = ag::Activation::Gelu;
    bool gated_fusion = true; // false: literal ungated (A_L + A_R) multiplier
    Variant variant = Variant::Full;
    std::uint64_t seed = 0;

    int tokens() const { return grid_h * grid_w; }
    void validate() const;
};

// Fixed 2-D sinusoidal embedding, token-major (row = y*w + x), values in [-1,1].
Mat positional_embedding(int grid_h, int grid_w, int channels);

struct DecodeResult {
    Var feature;                              // 1 x feature_dim
    std::vector<std::vector<Var>> left_attn;  // [block][head], each tokens x tokens
    std::vector<std::vector<Var>> right_attn; // [block][head]
    std::vector<Var> branch_left;             // A_L per block, tokens x c_clip
    std::vector<Var> branch_right;            // A_R per block
    std::vector<Var> gate_left;               // g(A_L) per block, tokens x c_clip/2
    std::vector<Var> gate_right;              // g(A_R) per block
};

class Gcat {
public:
    explicit Gcat(GcatConfig cfg);

    const GcatConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // Feature dimension produced by the active variant: d_out for the full
    // model, c_clip for the encoder-only ablation, c_backbone for raw
    // backbone pooling.
    int feature_dim() const;

    Var encode(const Var& vb_tokens) const;
    // Test hook: caller supplies the positional embedding added to the input.
    Var encode_with_pos(const Var& vb_tokens, const Mat& pos) const;
    DecodeResult decode(const Var& encoder_out, const Var& clip_patch_tokens) const;

    DecodeResult forward(const FeatureMap& vb, const ClipTokenGrid& vc) const;

    std::string fingerprint() const;

    void save(const std::filesystem::path& path, const std::string& extra_meta_json = "{}") const;
    static Gcat load(const std::filesystem::path& path);

private:
    GcatConfig cfg_;
    nn::ParamStore params_;
    Mat pos_;

    struct EncoderBlock {
        nn::MultiHeadAttention attn;
        nn::LayerNorm ln1, ln2;
        nn::FeedForward ffn;
    };
    struct DecoderBlock {
        nn::MultiHeadAttention attn_left, attn_right;
        nn::LayerNorm ln_left, ln_right;
        nn::Linear gate_left, gate_right;
        nn::LayerNorm ln_ffn;
        nn::FeedForward ffn; // absent on the last block
        bool has_ffn = true;
    };
    std::vector<EncoderBlock> encoder_;
    std::vector<DecoderBlock> decoder_;
    nn::Linear clip_projection_; // c_backbone -> c_clip, applied once
    nn::Linear output_head_;     // c_clip -> d_out, after the last block
};

struct Stage1Config {
    int epochs = 30;
    int batch_size = 64;
    double lr = 1e-5;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
    bool verbose = false;
};

// Linear softmax head over seen classes, weights initialized from class
// semantics. Stored as (feature_dim x n_seen): column i is seen class i's
// semantic vector.
struct Stage1Head {
    nn::ParamStore store;
    Var weight;
    Var bias;
    std::vector<int> seen_class_ids; // head column -> class id
    Var logits(const Var& feature) const;
    int head_index(int class_id) const;
};

Stage1Head make_stage1_head(const std::vector<providers::SemanticVector>& seen_semantics,
                            const std::vector<int>& seen_class_ids, int feature_dim);

struct Stage1Result {
    std::vector<double> epoch_losses; // mean cross-entropy per epoch
    double final_epoch_loss = 0.0;
    double train_top1 = 0.0; // accuracy on seen_train after the last epoch
};

Stage1Result stage1_train(Gcat& model, Stage1Head& head, const dataset::SplitSpec& split,
                          const dataset::Manifest& manifest, const providers::Provider& provider,
                          const Stage1Config& cfg);

// Inference-mode extraction; deterministic, one feature per sample, in input
// order regardless of worker count.
std::vector<GestureFeature> extract_features(const Gcat& model,
                                             const std::vector<dataset::SampleRecord>& samples,
                                             const providers::Provider& provider, int workers = 1);

struct AttentionMaps {
    std::vector<Mat> per_block;            // grid_h x grid_w saliency per decoder block
    std::vector<std::vector<Mat>> raw;     // [block][head] raw row-stochastic weights
};

AttentionMaps attention_maps(const Gcat& model, const dataset::SampleRecord& sample,
                             const providers::Provider& provider);

} // namespace zsugr::gcat
