#include "zsugr/providers.hpp"

#include "zsugr/rng.hpp"
#include "zsugr/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace zsugr::providers {

using json = nlohmann::json;

Mat strip_summary_token(const ClipTokenGrid& grid) {
    if (grid.tokens.rows() < 2)
        throw std::invalid_argument("token grid needs at least a summary and one patch token");
    return grid.tokens.bottomRows(grid.tokens.rows() - 1);
}

std::string prompt_template(const std::string& class_name) {
    return "A photo of a diver gesturing " + class_name;
}

std::string synthetic_ref_class(const std::string& image_ref) {
    if (image_ref.rfind("syn:", 0) != 0)
        throw std::runtime_error("unreadable image ref (not synthetic): " + image_ref);
    auto rest = image_ref.substr(4);
    auto colon = rest.find(':');
    if (colon == std::string::npos || colon == 0)
        throw std::runtime_error("malformed synthetic ref: " + image_ref);
    return rest.substr(0, colon);
}

namespace {

Mat seeded_gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
    return m;
}

Mat orthonormal_columns(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Mat g = seeded_gaussian(rows, cols, seed);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(rows, cols);
    return q;
}

} // namespace

SyntheticProvider::SyntheticProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.c_backbone <= 0 || cfg_.grid_h <= 0 || cfg_.grid_w <= 0 || cfg_.clip_tokens < 2 ||
        cfg_.c_clip <= 0 || cfg_.d_sem <= 0)
        throw std::invalid_argument("provider dims must be positive (clip_tokens >= 2)");
    int rank = std::min(cfg_.semantic_rank, cfg_.d_sem);
    if (rank <= 0) throw std::invalid_argument("semantic_rank must be positive");
    semantic_basis_ = orthonormal_columns(cfg_.d_sem, rank, derive_seed(cfg_.seed, "semantic-basis"));
    backbone_proj_ = seeded_gaussian(cfg_.d_sem, cfg_.c_backbone, derive_seed(cfg_.seed, "backbone-proj")) /
                     std::sqrt(static_cast<double>(cfg_.d_sem));
    clip_proj_ = seeded_gaussian(cfg_.d_sem, cfg_.c_clip, derive_seed(cfg_.seed, "clip-proj")) /
                 std::sqrt(static_cast<double>(cfg_.d_sem));
}

RowVec SyntheticProvider::encode_text(const std::string& text) const {
    const auto rank = semantic_basis_.cols();
    Rng rng(derive_seed(cfg_.seed, "text", fnv1a64(text)));
    RowVec coeff(rank);
    for (Eigen::Index i = 0; i < rank; ++i) coeff(i) = rng.normal();
    RowVec v = coeff * semantic_basis_.transpose();
    double n = v.norm();
    if (n == 0) throw std::runtime_error("degenerate semantic vector for text: " + text);
    return v / n;
}

SemanticVector SyntheticProvider::class_semantics(const std::string& class_name) const {
    if (class_name.empty()) throw std::invalid_argument("class name must be non-empty");
    SemanticVector s;
    s.class_name = class_name;
    s.data = encode_text(prompt_template(class_name));
    return s;
}

RowVec SyntheticProvider::backbone_anchor(const std::string& class_name) const {
    RowVec a = class_semantics(class_name).data;
    RowVec mu = a * backbone_proj_;
    return mu / mu.norm();
}

RowVec SyntheticProvider::clip_anchor(const std::string& class_name) const {
    RowVec a = class_semantics(class_name).data;
    RowVec nu = a * clip_proj_;
    return nu / nu.norm();
}

FeatureMap SyntheticProvider::backbone_features(const std::string& image_ref) const {
    const std::string cls = synthetic_ref_class(image_ref);
    RowVec mu = backbone_anchor(cls);
    const int tokens = cfg_.grid_h * cfg_.grid_w;
    const double scale = cfg_.sigma / std::sqrt(static_cast<double>(cfg_.c_backbone));
    Rng rng(derive_seed(cfg_.seed, "backbone-sample", fnv1a64(image_ref)));
    FeatureMap fm;
    fm.channels = cfg_.c_backbone;
    fm.height = cfg_.grid_h;
    fm.width = cfg_.grid_w;
    fm.source_sample = image_ref;
    fm.tokens.resize(tokens, cfg_.c_backbone);
    for (int t = 0; t < tokens; ++t)
        for (int c = 0; c < cfg_.c_backbone; ++c)
            fm.tokens(t, c) = mu(c) + scale * rng.normal();
    return fm;
}

ClipTokenGrid SyntheticProvider::clip_image_tokens(const std::string& image_ref) const {
    const std::string cls = synthetic_ref_class(image_ref);
    RowVec nu = clip_anchor(cls);
    const double scale = cfg_.clip_sigma / std::sqrt(static_cast<double>(cfg_.c_clip));
    Rng rng(derive_seed(cfg_.seed, "clip-sample", fnv1a64(image_ref)));
    ClipTokenGrid grid;
    grid.source_sample = image_ref;
    grid.tokens.resize(cfg_.clip_tokens, cfg_.c_clip);
    for (int t = 0; t < cfg_.clip_tokens; ++t) {
        // The summary token carries a cleaner view of the class anchor.
        double s = (t == 0) ? scale * 0.25 : scale;
        for (int c = 0; c < cfg_.c_clip; ++c) grid.tokens(t, c) = nu(c) + s * rng.normal();
    }
    return grid;
}

std::string SyntheticProvider::fingerprint() const {
    std::ostringstream os;
    os << "synthetic/v1:cb=" << cfg_.c_backbone << ",g=" << cfg_.grid_h << "x" << cfg_.grid_w
       << ",k=" << cfg_.clip_tokens << ",cc=" << cfg_.c_clip << ",ds=" << cfg_.d_sem
       << ",rank=" << std::min(cfg_.semantic_rank, cfg_.d_sem) << ",sigma=" << cfg_.sigma
       << ",clip_sigma=" << cfg_.clip_sigma << ",seed=" << cfg_.seed;
    return os.str();
}

namespace {

std::map<std::string, ProviderFactory>& factory_registry() {
    static std::map<std::string, ProviderFactory> registry;
    return registry;
}
std::mutex registry_mutex;

} // namespace

void register_provider(const std::string& kind, ProviderFactory factory) {
    std::lock_guard<std::mutex> lock(registry_mutex);
    factory_registry()[kind] = std::move(factory);
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg) {
    if (cfg.kind == "synthetic") return std::make_unique<SyntheticProvider>(cfg);
    std::lock_guard<std::mutex> lock(registry_mutex);
    auto it = factory_registry().find(cfg.kind);
    if (it == factory_registry().end())
        throw std::runtime_error("no provider registered under kind '" + cfg.kind + "'");
    return it->second(cfg);
}

void write_feature_store(const std::filesystem::path& dir,
                         const std::vector<GestureFeature>& features,
                         const FeatureStoreMeta& meta) {
    TensorArchive archive;
    archive.kind = "features";
    json m;
    m["version"] = 1;
    m["dim"] = meta.dim;
    m["count"] = features.size();
    m["provider_fingerprint"] = meta.provider_fingerprint;
    m["extractor_fingerprint"] = meta.extractor_fingerprint;
    m["synthetic"] = meta.synthetic;
    json classes = json::object();
    for (const auto& f : features) {
        classes[f.sample_id] = f.class_id;
        if (f.data.size() != meta.dim)
            throw std::invalid_argument("feature dim mismatch for sample " + f.sample_id);
        archive.tensors.push_back({f.sample_id, Mat(f.data)});
    }
    m["class_ids"] = std::move(classes);
    archive.meta_json = m.dump();
    write_archive(dir / "features.zt", archive);
}

std::pair<std::vector<GestureFeature>, FeatureStoreMeta>
read_feature_store(const std::filesystem::path& dir) {
    TensorArchive archive = read_archive(dir / "features.zt");
    if (archive.kind != "features")
        throw std::runtime_error("not a feature store: " + dir.string());
    json m = json::parse(archive.meta_json);
    FeatureStoreMeta meta;
    meta.dim = m.at("dim").get<int>();
    meta.provider_fingerprint = m.value("provider_fingerprint", "");
    meta.extractor_fingerprint = m.value("extractor_fingerprint", "");
    meta.synthetic = m.value("synthetic", false);
    const auto& classes = m.at("class_ids");
    std::vector<GestureFeature> features;
    features.reserve(archive.tensors.size());
    for (auto& t : archive.tensors) {
        GestureFeature f;
        f.sample_id = t.name;
        f.class_id = classes.at(t.name).get<int>();
        f.data = t.data.row(0);
        features.push_back(std::move(f));
    }
    return {std::move(features), std::move(meta)};
}

bool feature_store_exists(const std::filesystem::path& dir) {
    return std::filesystem::exists(dir / "features.zt");
}

} // namespace zsugr::providers
