#pragma once

#include "zsugr/matrix.hpp"

#include <filesystem>

namespace zsugr {

// Binary PGM (P5), values min-max scaled to [0,255]. Lossless for display
// purposes; the raw tensor is archived separately.
void write_pgm(const std::filesystem::path& path, const Mat& image);

// Binary PPM (P6) heatmap with a blue-white-red gradient.
void write_heatmap_ppm(const std::filesystem::path& path, const Mat& image);

} // namespace zsugr
