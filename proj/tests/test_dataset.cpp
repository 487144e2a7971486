#include "zsugr/dataset.hpp"
#include "zsugr/rng.hpp"

#include <doctest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace zsugr;
using namespace zsugr::dataset;

namespace {

std::string small_manifest_text(int per_class) {
    std::ostringstream os;
    os << "sample_id,image_ref,class_name\n";
    for (const auto& name : caddy_class_names())
        for (int i = 0; i < per_class; ++i)
            os << name << "_" << i << ",syn:" << name << ":" << i << "," << name << "\n";
    return os.str();
}

int holdout_count(const Manifest& manifest, const SplitSpec& s, int cls) {
    std::set<std::string> test_ids(s.seen_test_ids.begin(), s.seen_test_ids.end());
    int n = 0;
    for (const auto& r : manifest.records)
        if (r.class_id == cls && test_ids.count(r.sample_id)) ++n;
    return n;
}

} // namespace

TEST_CASE("load_manifest parses a 160-row synthetic manifest") {
    auto m = load_manifest_text(small_manifest_text(10));
    CHECK(m.records.size() == 160);
    CHECK(m.classes.size() == 16);
    CHECK(m.records.front().sample_id == "start_comm_0");
    CHECK(m.records.back().class_id == 15);
    CHECK(m.class_id("boat").has_value());
    CHECK_FALSE(m.class_id("nope").has_value());
}

TEST_CASE("load_manifest rejects degenerate inputs") {
    CHECK_THROWS_WITH_AS(load_manifest_text("sample_id,image_ref,class_name\n", "f.csv"),
                         doctest::Contains("no records"), std::runtime_error);
    CHECK_THROWS_AS(load_manifest_text("id,ref,cls\na,b,c\n", "f.csv"), std::runtime_error);
    // duplicate sample id, with the row number in the message
    CHECK_THROWS_WITH_AS(
        load_manifest_text("sample_id,image_ref,class_name\nx,r,boat\nx,r,boat\n", "f.csv"),
        doctest::Contains("row 3"), std::runtime_error);
    // unknown class when a roster is pinned
    CHECK_THROWS_WITH_AS(
        load_manifest_text("sample_id,image_ref,class_name\nx,r,warp\n", "f.csv",
                           caddy_class_names()),
        doctest::Contains("unknown class name 'warp'"), std::runtime_error);
    CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.csv"), std::runtime_error);
}

TEST_CASE("manifest file round-trip preserves order") {
    auto m = load_manifest_text(small_manifest_text(3));
    auto path = std::filesystem::temp_directory_path() / "zsugr_manifest_rt.csv";
    write_manifest(path, m);
    auto m2 = load_manifest(path);
    REQUIRE(m2.records.size() == m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        CHECK(m2.records[i].sample_id == m.records[i].sample_id);
        CHECK(m2.records[i].class_id == m.records[i].class_id);
    }
    std::filesystem::remove(path);
}

TEST_CASE("generate_splits is deterministic and stratified") {
    auto manifest = make_synthetic_manifest(std::vector<int>(16, 40));
    SplitParams params;
    params.rng_seed = 99;
    auto a = generate_splits(manifest, params);
    auto b = generate_splits(manifest, params);
    REQUIRE(a.splits.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(a.splits[i].seen_classes == b.splits[i].seen_classes);
        CHECK(a.splits[i].seen_train_ids == b.splits[i].seen_train_ids);
        CHECK(a.splits[i].seen_test_ids == b.splits[i].seen_test_ids);
        CHECK(a.splits[i].unseen_test_ids == b.splits[i].unseen_test_ids);
    }
    for (const auto& s : a.splits) {
        CHECK(s.seen_classes.size() == 10);
        CHECK(s.unseen_classes.size() == 6);
        CHECK(validate_split(s, manifest).empty());
        // 40 samples per class, holdout 0.10 -> exactly 4 per seen class
        CHECK(s.seen_test_ids.size() == 40);
        CHECK(s.seen_train_ids.size() == 360);
        CHECK(s.unseen_test_ids.size() == 240);
    }
}

TEST_CASE("stratified holdout rounds half-up per class") {
    // 14 samples -> round(1.4) = 1; 15 -> round(1.5) = 2; 16 -> round(1.6) = 2
    std::vector<int> counts{14, 15, 16, 20, 20, 20, 20, 20, 20, 20, 20, 20, 20, 20, 20, 20};
    auto manifest = make_synthetic_manifest(counts);
    SplitParams params;
    params.rng_seed = 3;
    params.n_splits = 1;
    params.fixed_seen_classes = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
    auto out = generate_splits(manifest, params);
    const auto& s = out.splits[0];
    CHECK(holdout_count(manifest, s, 0) == 1);
    CHECK(holdout_count(manifest, s, 1) == 2);
    CHECK(holdout_count(manifest, s, 2) == 2);
    CHECK(holdout_count(manifest, s, 3) == 2);
}

TEST_CASE("tiny seen classes produce a warning and zero holdout") {
    std::vector<int> counts(16, 30);
    counts[0] = 3; // round(0.3) = 0
    auto manifest = make_synthetic_manifest(counts);
    SplitParams params;
    params.rng_seed = 1;
    params.n_splits = 1;
    params.fixed_seen_classes = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
    auto out = generate_splits(manifest, params);
    REQUIRE(!out.warnings.empty());
    CHECK(out.warnings.front().find("start_comm") != std::string::npos);
    CHECK(holdout_count(manifest, out.splits[0], 0) == 0);
    CHECK(validate_split(out.splits[0], manifest).empty());
}

TEST_CASE("generate_splits validates parameters") {
    auto manifest = make_synthetic_manifest(std::vector<int>(16, 10));
    SplitParams params;
    params.n_seen = 9; // 9 + 6 != 16
    CHECK_THROWS_AS(generate_splits(manifest, params), std::invalid_argument);
    params.n_seen = 10;
    params.holdout_fraction = 0.0;
    CHECK_THROWS_AS(generate_splits(manifest, params), std::invalid_argument);
}

// The CADDY-scale fixture reproduces the published split table exactly when
// the class partitions are pinned: per-split totals (12505, 1389, 4584),
// (10251, 1139, 7088), (11713, 1301, 5464), summing to 18478 with a 10%
// holdout ratio.
TEST_CASE("caddy fixture reproduces the published split arithmetic") {
    auto manifest = make_synthetic_manifest(caddy_fixture_counts());
    REQUIRE(manifest.records.size() == 18478);
    REQUIRE(manifest.classes.size() == 16);

    SplitParams params;
    params.rng_seed = 2024;
    // unseen sets: split 1 {one,down,photo,here,three,five},
    // split 2 {one,two,boat,mosaic,backwards,four},
    // split 3 {two,photo,here,backwards,carry,num_delimiter}
    params.fixed_seen_classes = {
        {0, 1, 2, 5, 6, 7, 9, 10, 12, 14},
        {0, 1, 2, 3, 4, 6, 8, 10, 13, 15},
        {0, 1, 2, 3, 7, 9, 11, 13, 14, 15},
    };
    auto out = generate_splits(manifest, params);
    REQUIRE(out.splits.size() == 3);

    const std::vector<std::array<std::size_t, 3>> expected = {
        {12505, 1389, 4584}, {10251, 1139, 7088}, {11713, 1301, 5464}};
    for (int i = 0; i < 3; ++i) {
        const auto& s = out.splits[static_cast<std::size_t>(i)];
        CHECK(s.seen_train_ids.size() == expected[static_cast<std::size_t>(i)][0]);
        CHECK(s.seen_test_ids.size() == expected[static_cast<std::size_t>(i)][1]);
        CHECK(s.unseen_test_ids.size() == expected[static_cast<std::size_t>(i)][2]);
        CHECK(s.seen_train_ids.size() + s.seen_test_ids.size() + s.unseen_test_ids.size() ==
              18478);
        double ratio = static_cast<double>(s.seen_test_ids.size()) /
                       static_cast<double>(s.seen_train_ids.size() + s.seen_test_ids.size());
        CHECK(std::abs(ratio - 0.100) < 0.002);
        CHECK(validate_split(s, manifest).empty());
    }
}

TEST_CASE("random splits on the caddy fixture keep the holdout ratio") {
    auto manifest = make_synthetic_manifest(caddy_fixture_counts());
    SplitParams params;
    params.rng_seed = 5;
    auto out = generate_splits(manifest, params);
    for (const auto& s : out.splits) {
        CHECK(s.seen_train_ids.size() + s.seen_test_ids.size() + s.unseen_test_ids.size() ==
              18478);
        double ratio = static_cast<double>(s.seen_test_ids.size()) /
                       static_cast<double>(s.seen_train_ids.size() + s.seen_test_ids.size());
        CHECK(std::abs(ratio - 0.100) < 0.002);
    }
}

TEST_CASE("validate_split reports constructed violations") {
    auto manifest = make_synthetic_manifest(std::vector<int>(16, 10));
    SplitParams params;
    params.rng_seed = 11;
    params.n_splits = 1;
    auto out = generate_splits(manifest, params);
    auto good = out.splits[0];
    CHECK(validate_split(good, manifest).empty());

    SUBCASE("class overlap") {
        auto bad = good;
        bad.unseen_classes.push_back(bad.seen_classes[1]);
        auto v = validate_split(bad, manifest);
        REQUIRE(!v.empty());
        CHECK(v.front().find("class overlap: id " + std::to_string(good.seen_classes[1])) !=
              std::string::npos);
    }
    SUBCASE("seen sample leaked into unseen_test") {
        auto bad = good;
        bad.unseen_test_ids.push_back(bad.seen_train_ids.back());
        bad.seen_train_ids.pop_back();
        auto v = validate_split(bad, manifest);
        REQUIRE(v.size() == 1);
        CHECK(v.front().find("leakage") != std::string::npos);
    }
    SUBCASE("duplicated roster entry") {
        auto bad = good;
        bad.seen_test_ids.push_back(bad.seen_train_ids.front());
        auto v = validate_split(bad, manifest);
        REQUIRE(!v.empty());
        bool found = false;
        for (const auto& msg : v)
            if (msg.find("appears in both") != std::string::npos) found = true;
        CHECK(found);
    }
    SUBCASE("incomplete coverage") {
        auto bad = good;
        bad.unseen_test_ids.pop_back();
        auto v = validate_split(bad, manifest);
        REQUIRE(!v.empty());
        CHECK(v.front().find("rosters cover") != std::string::npos);
    }
}

TEST_CASE("split JSON round-trip is lossless and stable") {
    auto manifest = make_synthetic_manifest(std::vector<int>(16, 12));
    SplitParams params;
    params.rng_seed = 17;
    params.n_splits = 1;
    auto s = generate_splits(manifest, params).splits[0];
    auto text = split_to_json(s);
    auto s2 = split_from_json(text);
    CHECK(s2.seen_classes == s.seen_classes);
    CHECK(s2.unseen_classes == s.unseen_classes);
    CHECK(s2.seen_train_ids == s.seen_train_ids);
    CHECK(s2.seen_test_ids == s.seen_test_ids);
    CHECK(s2.unseen_test_ids == s.unseen_test_ids);
    CHECK(s2.rng_seed == s.rng_seed);
    CHECK(split_to_json(s2) == text);
}

TEST_CASE("property: random manifests always yield valid splits") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        Rng rng(seed);
        std::vector<int> counts(16);
        for (auto& c : counts) c = 10 + static_cast<int>(rng.index(60));
        auto manifest = make_synthetic_manifest(counts);
        SplitParams params;
        params.rng_seed = seed * 31 + 1;
        auto out = generate_splits(manifest, params);
        for (const auto& s : out.splits) {
            CHECK(validate_split(s, manifest).empty());
            std::set<int> seen(s.seen_classes.begin(), s.seen_classes.end());
            for (int u : s.unseen_classes) CHECK(!seen.count(u));
            for (int c : s.seen_classes) {
                const auto n = static_cast<double>(counts[static_cast<std::size_t>(c)]);
                const int holdout = holdout_count(manifest, s, c);
                CHECK(std::abs(static_cast<double>(holdout) - 0.10 * n) <= 1.0);
            }
        }
    }
}
