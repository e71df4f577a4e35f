#include "aerogen/io/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace aerogen {

namespace {

constexpr char kMagic[8] = {'A', 'E', 'R', 'O', 'G', 'E', 'N', '\0'};

struct FileCloser {
    FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace

void Checkpoint::save(const std::string& path) const {
    nlohmann::ordered_json header;
    header["kind"] = kind;
    header["meta"] = meta;
    auto dir = nlohmann::ordered_json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        nlohmann::ordered_json e;
        e["name"] = name;
        e["shape"] = t.shape;
        e["offset"] = offset;
        offset += static_cast<uint64_t>(t.numel()) * sizeof(double);
        dir.push_back(std::move(e));
    }
    header["tensors"] = std::move(dir);
    const std::string hs = header.dump();

    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("checkpoint save: cannot open " + path);
    FileCloser closer{f};
    std::fwrite(kMagic, 1, 8, f);
    const uint32_t version = kFormatVersion;
    std::fwrite(&version, sizeof(version), 1, f);
    const uint64_t hlen = hs.size();
    std::fwrite(&hlen, sizeof(hlen), 1, f);
    std::fwrite(hs.data(), 1, hs.size(), f);
    for (const auto& [name, t] : tensors) {
        std::fwrite(t.ptr(), sizeof(double), static_cast<size_t>(t.numel()), f);
    }
    if (std::ferror(f)) throw std::runtime_error("checkpoint save: write error for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("checkpoint load: cannot open " + path);
    FileCloser closer{f};
    char magic[8];
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint load: bad magic in " + path);
    }
    uint32_t version = 0;
    if (std::fread(&version, sizeof(version), 1, f) != 1 || version != kFormatVersion) {
        throw std::runtime_error("checkpoint load: unsupported version in " + path);
    }
    uint64_t hlen = 0;
    if (std::fread(&hlen, sizeof(hlen), 1, f) != 1) {
        throw std::runtime_error("checkpoint load: truncated header in " + path);
    }
    std::string hs(hlen, '\0');
    if (std::fread(hs.data(), 1, hlen, f) != hlen) {
        throw std::runtime_error("checkpoint load: truncated header json in " + path);
    }
    const auto header = nlohmann::ordered_json::parse(hs);
    Checkpoint ckpt;
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.meta = header.at("meta");
    for (const auto& e : header.at("tensors")) {
        const auto name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<std::vector<int64_t>>();
        nn::Tensor t(shape);
        if (std::fread(t.ptr(), sizeof(double), static_cast<size_t>(t.numel()), f) !=
            static_cast<size_t>(t.numel())) {
            throw std::runtime_error("checkpoint load: truncated tensor " + name);
        }
        ckpt.tensors.emplace(name, std::move(t));
    }
    return ckpt;
}

}  // namespace aerogen
