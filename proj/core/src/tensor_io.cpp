#include "zsugr/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace zsugr {

namespace {

constexpr char kMagic[4] = {'Z', 'T', 'A', '1'};

using json = nlohmann::json;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

} // namespace

const Mat* TensorArchive::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t.data;
    return nullptr;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
    json header;
    header["kind"] = archive.kind;
    header["meta"] = json::parse(archive.meta_json);
    json dir = json::array();
    std::uint64_t offset = 0;
    for (const auto& t : archive.tensors) {
        dir.push_back({{"name", t.name},
                       {"rows", t.data.rows()},
                       {"cols", t.data.cols()},
                       {"offset", offset}});
        offset += static_cast<std::uint64_t>(t.data.size()) * sizeof(double);
    }
    header["tensors"] = dir;
    const std::string header_str = header.dump();

    std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, archive.format_version);
    write_pod<std::uint64_t>(os, header_str.size());
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& t : archive.tensors) {
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open archive: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a tensor archive: " + path.string());
    TensorArchive archive;
    archive.format_version = read_pod<std::uint32_t>(is);
    if (archive.format_version != 1)
        throw std::runtime_error("unsupported archive version " +
                                 std::to_string(archive.format_version) + " in " + path.string());
    const auto header_len = read_pod<std::uint64_t>(is);
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw std::runtime_error("truncated archive header: " + path.string());
    json header = json::parse(header_str);
    archive.kind = header.value("kind", "");
    archive.meta_json = header.value("meta", json::object()).dump();
    for (const auto& entry : header.at("tensors")) {
        NamedTensor t;
        t.name = entry.at("name").get<std::string>();
        const auto rows = entry.at("rows").get<Eigen::Index>();
        const auto cols = entry.at("cols").get<Eigen::Index>();
        t.data.resize(rows, cols);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw std::runtime_error("truncated tensor payload: " + path.string());
        archive.tensors.push_back(std::move(t));
    }
    return archive;
}

} // namespace zsugr
