#include "zsugr/providers.hpp"

#include "zsugr/dataset.hpp"
#include "zsugr/rng.hpp"

#include <doctest.h>

#include <filesystem>

using namespace zsugr;
using namespace zsugr::providers;

namespace {

ProviderConfig default_cfg() {
    ProviderConfig cfg;
    cfg.seed = 42;
    return cfg;
}

ProviderConfig small_cfg() {
    ProviderConfig cfg;
    cfg.c_backbone = 16;
    cfg.grid_h = 3;
    cfg.grid_w = 3;
    cfg.clip_tokens = 10;
    cfg.c_clip = 24;
    cfg.d_sem = 12;
    cfg.semantic_rank = 4;
    cfg.seed = 7;
    return cfg;
}

} // namespace

TEST_CASE("backbone features have the paper-scale default shape") {
    SyntheticProvider p(default_cfg());
    auto fm = p.backbone_features("syn:boat:0");
    CHECK(fm.channels == 256);
    CHECK(fm.height == 7);
    CHECK(fm.width == 7);
    CHECK(fm.tokens.rows() == 49);
    CHECK(fm.tokens.cols() == 256);
    CHECK(fm.tokens.allFinite());
}

TEST_CASE("clip token grid has the paper-scale default shape") {
    SyntheticProvider p(default_cfg());
    auto grid = p.clip_image_tokens("syn:boat:3");
    CHECK(grid.tokens.rows() == 50);
    CHECK(grid.tokens.cols() == 768);
    CHECK(grid.tokens.allFinite());
    auto patches = strip_summary_token(grid);
    CHECK(patches.rows() == 49);
    CHECK(patches.cols() == 768);
}

TEST_CASE("class semantics are 512-d unit vectors from the prompt template") {
    SyntheticProvider p(default_cfg());
    auto s = p.class_semantics("boat");
    CHECK(s.data.size() == 512);
    CHECK(s.data.norm() == doctest::Approx(1.0).epsilon(1e-12));
    // the semantic vector is exactly the encoding of the templated prompt
    RowVec direct = p.encode_text("A photo of a diver gesturing boat");
    CHECK((s.data - direct).norm() == 0.0);
    CHECK_THROWS_AS(p.class_semantics(""), std::invalid_argument);
}

TEST_CASE("providers are pure: identical inputs give bitwise-identical outputs") {
    SyntheticProvider p1(small_cfg());
    SyntheticProvider p2(small_cfg());
    auto a = p1.backbone_features("syn:up:5");
    auto b = p2.backbone_features("syn:up:5");
    CHECK((a.tokens - b.tokens).norm() == 0.0);
    auto g1 = p1.clip_image_tokens("syn:up:5");
    auto g2 = p2.clip_image_tokens("syn:up:5");
    CHECK((g1.tokens - g2.tokens).norm() == 0.0);
    CHECK((p1.class_semantics("up").data - p2.class_semantics("up").data).norm() == 0.0);
    // different sample index -> different draw
    CHECK((a.tokens - p1.backbone_features("syn:up:6").tokens).norm() > 0.0);
}

TEST_CASE("unreadable refs name the sample in the error") {
    SyntheticProvider p(small_cfg());
    CHECK_THROWS_WITH_AS(p.backbone_features("/data/img_0001.png"),
                         doctest::Contains("img_0001"), std::runtime_error);
    CHECK_THROWS_AS(p.clip_image_tokens("syn:"), std::runtime_error);
}

// Monte-Carlo oracle against the generator's own parameters: the pooled
// feature over 100 draws must land within 3*sigma/sqrt(100) of the class
// anchor.
TEST_CASE("backbone features are a class-anchored gaussian cloud") {
    auto cfg = small_cfg();
    cfg.sigma = 0.8;
    SyntheticProvider p(cfg);
    RowVec anchor = p.backbone_anchor("photo");
    RowVec mean = RowVec::Zero(cfg.c_backbone);
    const int draws = 100;
    for (int i = 0; i < draws; ++i) {
        auto fm = p.backbone_features("syn:photo:" + std::to_string(i));
        RowVec pooled = fm.tokens.colwise().mean();
        mean += pooled / draws;
    }
    CHECK((mean - anchor).norm() <= 3.0 * cfg.sigma / std::sqrt(static_cast<double>(draws)));
}

TEST_CASE("semantics are injective over the 16 gesture names") {
    SyntheticProvider p(default_cfg());
    const auto& names = dataset::caddy_class_names();
    std::vector<RowVec> vecs;
    for (const auto& n : names) vecs.push_back(p.class_semantics(n).data);
    for (std::size_t i = 0; i < vecs.size(); ++i) {
        for (std::size_t j = i + 1; j < vecs.size(); ++j) {
            double cosine = vecs[i].dot(vecs[j]);
            CHECK(cosine < 0.99);
        }
    }
}

TEST_CASE("semantic anchors lie in the rank-limited subspace") {
    auto cfg = small_cfg();
    SyntheticProvider p(cfg);
    // Collect more vectors than the rank; singular values beyond the
    // configured rank must vanish.
    Mat stack(8, cfg.d_sem);
    for (int i = 0; i < 8; ++i) stack.row(i) = p.encode_text("probe text " + std::to_string(i));
    Eigen::JacobiSVD<Mat> svd(stack);
    int effective_rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-9) ++effective_rank;
    CHECK(effective_rank == cfg.semantic_rank);
}

TEST_CASE("provider outputs are finite across random configs") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto cfg = small_cfg();
        cfg.seed = seed;
        cfg.sigma = 0.1 + 0.7 * static_cast<double>(seed);
        SyntheticProvider p(cfg);
        auto fm = p.backbone_features("syn:five:1");
        auto grid = p.clip_image_tokens("syn:five:1");
        CHECK(fm.tokens.allFinite());
        CHECK(grid.tokens.allFinite());
        CHECK(p.class_semantics("five").data.allFinite());
    }
}

TEST_CASE("provider registry rejects unknown kinds and accepts plugins") {
    ProviderConfig cfg = small_cfg();
    cfg.kind = "resnet50-onnx";
    CHECK_THROWS_WITH_AS(make_provider(cfg), doctest::Contains("resnet50-onnx"),
                         std::runtime_error);
    register_provider("resnet50-onnx", [](const ProviderConfig& c) {
        auto inner = c;
        inner.kind = "synthetic";
        return std::make_unique<SyntheticProvider>(inner);
    });
    auto p = make_provider(cfg);
    CHECK(p->backbone_features("syn:boat:0").tokens.rows() == 9);
}

TEST_CASE("feature store round-trips bitwise with metadata") {
    auto dir = std::filesystem::temp_directory_path() / "zsugr_store_test";
    std::filesystem::remove_all(dir);
    std::vector<GestureFeature> feats;
    Rng rng(3);
    for (int i = 0; i < 5; ++i) {
        GestureFeature f;
        f.sample_id = "s" + std::to_string(i);
        f.class_id = i % 3;
        f.data = RowVec::NullaryExpr(17, [&](Eigen::Index) { return rng.normal(); });
        feats.push_back(f);
    }
    FeatureStoreMeta meta;
    meta.dim = 17;
    meta.provider_fingerprint = "synthetic/v1:test";
    meta.extractor_fingerprint = "gcat:test";
    meta.synthetic = true;
    write_feature_store(dir, feats, meta);
    CHECK(feature_store_exists(dir));

    auto [loaded, meta2] = read_feature_store(dir);
    REQUIRE(loaded.size() == feats.size());
    for (std::size_t i = 0; i < feats.size(); ++i) {
        CHECK(loaded[i].sample_id == feats[i].sample_id);
        CHECK(loaded[i].class_id == feats[i].class_id);
        CHECK((loaded[i].data - feats[i].data).norm() == 0.0);
    }
    CHECK(meta2.dim == 17);
    CHECK(meta2.provider_fingerprint == meta.provider_fingerprint);
    CHECK(meta2.synthetic == true);
    std::filesystem::remove_all(dir);
}

TEST_CASE("dimension mismatches are rejected at store-write time") {
    auto dir = std::filesystem::temp_directory_path() / "zsugr_store_bad";
    GestureFeature f;
    f.sample_id = "x";
    f.data = RowVec::Zero(4);
    FeatureStoreMeta meta;
    meta.dim = 5;
    CHECK_THROWS_AS(write_feature_store(dir, {f}, meta), std::invalid_argument);
    std::filesystem::remove_all(dir);
}
