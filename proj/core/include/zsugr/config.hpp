#pragma once

#include "zsugr/dataset.hpp"
#include "zsugr/errors.hpp"
#include "zsugr/featgen.hpp"
#include "zsugr/gcat.hpp"
#include "zsugr/providers.hpp"
#include "zsugr/zsl.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace zsugr::config {

// Fully resolved run configuration. Single declarative JSON document,
// overridden by ZSUGR_<SECTION>_<KEY> environment variables, overridden by
// command-line "--set section.key=value" flags, in that order.
struct RunConfig {
    std::filesystem::path outdir = "out";
    std::uint64_t seed = 7;
    int workers = 1;

    std::string manifest_path; // empty: a synthetic manifest is generated
    int samples_per_class = 200;

    providers::ProviderConfig provider;
    dataset::SplitParams split;
    gcat::GcatConfig gcat_cfg;
    gcat::Stage1Config stage1;
    featgen::GanConfig gan;
    zsl::ClassifierConfig classifier;
    std::string czsl_head = "restricted"; // or "dedicated"

    // Canonical merged document (sorted keys, defaults filled in).
    std::string canonical_json;
    std::string hash; // fnv-1a of canonical_json, hex

    // Derived per-split seeds.
    std::uint64_t gcat_seed(int split_index) const;
    std::uint64_t stage1_seed(int split_index) const;
    std::uint64_t gan_seed(int split_index) const;
    std::uint64_t synth_seed(int split_index) const;
    std::uint64_t classifier_seed(int split_index) const;
};

std::string default_config_json();

// Pure merge + validation; env entries are (NAME, value) pairs.
RunConfig parse_run_config(const std::optional<std::string>& file_json,
                           const std::vector<std::pair<std::string, std::string>>& env,
                           const std::vector<std::string>& set_overrides);

// Reads the file (when given) and the process environment.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& set_overrides);

} // namespace zsugr::config
