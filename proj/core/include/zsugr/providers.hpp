#pragma once

#include "zsugr/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace zsugr::providers {

// Backbone spatial feature map. Stored token-major: row t is spatial position
// (y * width + x), columns are channels.
struct FeatureMap {
    int channels = 0, height = 0, width = 0;
    Mat tokens; // (height*width) x channels
    std::string source_sample;
};

// Auxiliary image-encoder tokens; token 0 is the class-summary token.
struct ClipTokenGrid {
    Mat tokens; // k x channels
    std::string source_sample;
};

// Patch tokens only (summary token removed).
Mat strip_summary_token(const ClipTokenGrid& grid);

struct SemanticVector {
    RowVec data; // unit L2 norm, dimension d_sem
    std::string class_name;
};

struct ProviderConfig {
    std::string kind = "synthetic"; // or a registered pretrained-adapter name
    int c_backbone = 256;
    int grid_h = 7;
    int grid_w = 7;
    int clip_tokens = 50; // includes the summary token
    int c_clip = 768;
    int d_sem = 512;
    std::uint64_t seed = 0;
    // Synthetic difficulty knobs: per-token noise scale around the class
    // anchors, and the rank of the subspace the class anchors span.
    double sigma = 1.0;
    double clip_sigma = 0.5;
    int semantic_rank = 8;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual const ProviderConfig& config() const = 0;
    virtual FeatureMap backbone_features(const std::string& image_ref) const = 0;
    virtual ClipTokenGrid clip_image_tokens(const std::string& image_ref) const = 0;
    virtual SemanticVector class_semantics(const std::string& class_name) const = 0;
    // Identifies the provider and its configuration in cache manifests.
    virtual std::string fingerprint() const = 0;
};

// Deterministic synthetic provider. Class semantics live in a rank-limited
// subspace; backbone and clip anchors are fixed projections of the semantics,
// so the semantic->visual relation is recoverable from seen classes alone.
// Every output is a pure function of (config, input).
class SyntheticProvider final : public Provider {
public:
    explicit SyntheticProvider(ProviderConfig cfg);
    const ProviderConfig& config() const override { return cfg_; }
    FeatureMap backbone_features(const std::string& image_ref) const override;
    ClipTokenGrid clip_image_tokens(const std::string& image_ref) const override;
    SemanticVector class_semantics(const std::string& class_name) const override;
    std::string fingerprint() const override;

    // The synthetic text encoder behind class_semantics.
    RowVec encode_text(const std::string& text) const;
    // Generator-side ground truth, used by statistical oracles in tests.
    RowVec backbone_anchor(const std::string& class_name) const;
    RowVec clip_anchor(const std::string& class_name) const;

private:
    ProviderConfig cfg_;
    Mat semantic_basis_; // d_sem x rank, orthonormal columns
    Mat backbone_proj_;  // d_sem x c_backbone
    Mat clip_proj_;      // d_sem x c_clip
};

std::string prompt_template(const std::string& class_name);

// Parses "syn:<class_name>:<index>" refs; throws on anything else.
std::string synthetic_ref_class(const std::string& image_ref);

using ProviderFactory = std::function<std::unique_ptr<Provider>(const ProviderConfig&)>;
// Optional pretrained adapters register here by kind; the core library never
// depends on them.
void register_provider(const std::string& kind, ProviderFactory factory);
std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg);

// --- feature store ------------------------------------------------------

struct GestureFeature {
    RowVec data;
    std::string sample_id;
    int class_id = -1; // -1 when unlabeled
};

struct FeatureStoreMeta {
    int dim = 0;
    std::string provider_fingerprint;
    std::string extractor_fingerprint;
    bool synthetic = false;
};

// One archive per roster under `dir`, keyed by sample_id, with a manifest of
// dims and provider fingerprint so downstream stages can trust the cache.
void write_feature_store(const std::filesystem::path& dir,
                         const std::vector<GestureFeature>& features,
                         const FeatureStoreMeta& meta);
std::pair<std::vector<GestureFeature>, FeatureStoreMeta>
read_feature_store(const std::filesystem::path& dir);
bool feature_store_exists(const std::filesystem::path& dir);

} // namespace zsugr::providers
