#pragma once

#include "zsugr/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace zsugr {

struct NamedTensor {
    std::string name;
    Mat data;
};

// Single-file archive: magic "ZTA1", format version, a JSON header with the
// tensor directory plus free-form metadata, then raw little-endian float64
// payload (column-major). Used for model checkpoints, feature stores and raw
// attention dumps.
struct TensorArchive {
    std::uint32_t format_version = 1;
    std::string kind;
    std::string meta_json = "{}"; // JSON object: config echo, rng state, ...
    std::vector<NamedTensor> tensors;

    const Mat* find(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

} // namespace zsugr
