#include "zsugr/image_io.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <vector>

namespace zsugr {

namespace {

std::vector<double> normalize01(const Mat& image) {
    double lo = image.minCoeff();
    double hi = image.maxCoeff();
    double span = hi - lo;
    std::vector<double> out(static_cast<std::size_t>(image.size()));
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < image.rows(); ++r)
        for (Eigen::Index c = 0; c < image.cols(); ++c)
            out[i++] = span > 0 ? (image(r, c) - lo) / span : 0.0;
    return out;
}

} // namespace

void write_pgm(const std::filesystem::path& path, const Mat& image) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
    for (double v : normalize01(image)) {
        auto byte = static_cast<std::uint8_t>(std::clamp(v * 255.0 + 0.5, 0.0, 255.0));
        os.put(static_cast<char>(byte));
    }
}

void write_heatmap_ppm(const std::filesystem::path& path, const Mat& image) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "P6\n" << image.cols() << " " << image.rows() << "\n255\n";
    for (double v : normalize01(image)) {
        // blue (0) -> white (0.5) -> red (1)
        double r = v <= 0.5 ? 2.0 * v : 1.0;
        double g = v <= 0.5 ? 2.0 * v : 2.0 * (1.0 - v);
        double b = v <= 0.5 ? 1.0 : 2.0 * (1.0 - v);
        for (double ch : {r, g, b}) {
            auto byte = static_cast<std::uint8_t>(std::clamp(ch * 255.0 + 0.5, 0.0, 255.0));
            os.put(static_cast<char>(byte));
        }
    }
}

} // namespace zsugr
