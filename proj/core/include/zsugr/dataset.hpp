#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace zsugr::dataset {

struct GestureClass {
    int id = -1;
    std::string name;
};

struct SampleRecord {
    std::string sample_id;
    std::string image_ref;
    int class_id = -1;
};

struct Manifest {
    std::vector<GestureClass> classes;
    std::vector<SampleRecord> records; // file order preserved
    std::optional<int> class_id(const std::string& name) const;
};

// Comma-separated UTF-8 manifest with a mandatory "sample_id,image_ref,class_name"
// header. Classes are registered in first-appearance order unless a roster is
// given, in which case every class_name must be on the roster.
Manifest load_manifest(const std::filesystem::path& source,
                       const std::vector<std::string>& class_roster = {});
Manifest load_manifest_text(const std::string& text, const std::string& origin = "<memory>",
                            const std::vector<std::string>& class_roster = {});
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct SplitSpec {
    int split_index = 0;
    std::vector<int> seen_classes;
    std::vector<int> unseen_classes;
    std::vector<std::string> seen_train_ids;
    std::vector<std::string> seen_test_ids;   // seen holdout used at GZSL test time
    std::vector<std::string> unseen_test_ids;
    std::uint64_t rng_seed = 0;
};

struct SplitParams {
    int n_splits = 3;
    int n_seen = 10;
    int n_unseen = 6;
    double holdout_fraction = 0.10;
    std::uint64_t rng_seed = 0;
    // When set, entry i pins the seen-class ids of split i instead of random
    // sampling. Published splits are reproduced this way.
    std::vector<std::vector<int>> fixed_seen_classes;
};

struct SplitOutcome {
    std::vector<SplitSpec> splits;
    std::vector<std::string> warnings; // seen classes too small for a holdout
};

SplitOutcome generate_splits(const Manifest& manifest, const SplitParams& params);

// Empty result means the split satisfies every invariant against the manifest.
std::vector<std::string> validate_split(const SplitSpec& split, const Manifest& manifest);

std::string split_to_json(const SplitSpec& split);
SplitSpec split_from_json(const std::string& text);
void save_split(const std::filesystem::path& path, const SplitSpec& split);
SplitSpec load_split(const std::filesystem::path& path);

// The 16 CADDIAN gesture names.
const std::vector<std::string>& caddy_class_names();

// Per-class sample counts used by the reference CADDY-scale fixture
// (long-tail, 18,478 samples total).
const std::vector<int>& caddy_fixture_counts();

// Builds an in-memory manifest with the given per-class counts; image refs are
// synthetic-provider URIs ("syn:<class>:<index>").
Manifest make_synthetic_manifest(const std::vector<int>& per_class_counts);

} // namespace zsugr::dataset
