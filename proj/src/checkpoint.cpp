#include "paint/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace paint {

namespace {

void append_le64(std::string& out, std::uint64_t bits) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint64_t read_le64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return bits;
}

std::string encode_blob(const std::vector<NamedTensor>& tensors) {
    std::string blob;
    std::size_t total = 0;
    for (const auto& nt : tensors) total += nt.value.data.size();
    blob.reserve(total * 8);
    for (const auto& nt : tensors)
        for (double v : nt.value.data) append_le64(blob, std::bit_cast<std::uint64_t>(v));
    return blob;
}

}  // namespace

void save_tensors(const std::filesystem::path& stem, const nlohmann::json& metadata,
                  const std::vector<NamedTensor>& tensors) {
    nlohmann::json manifest;
    manifest["format"] = "paint-checkpoint-v1";
    manifest["metadata"] = metadata;
    nlohmann::json entries = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& nt : tensors) {
        entries.push_back({{"name", nt.name},
                           {"rows", nt.value.n_rows},
                           {"cols", nt.value.n_cols},
                           {"offset", offset}});
        offset += nt.value.data.size() * 8;
    }
    manifest["tensors"] = std::move(entries);

    auto json_path = stem;
    json_path += ".json";
    auto bin_path = stem;
    bin_path += ".bin";

    std::ofstream jf(json_path, std::ios::binary | std::ios::trunc);
    if (!jf) throw std::runtime_error("checkpoint: cannot write " + json_path.string());
    jf << manifest.dump(2) << '\n';
    if (!jf) throw std::runtime_error("checkpoint: write failed for " + json_path.string());

    const std::string blob = encode_blob(tensors);
    std::ofstream bf(bin_path, std::ios::binary | std::ios::trunc);
    if (!bf) throw std::runtime_error("checkpoint: cannot write " + bin_path.string());
    bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!bf) throw std::runtime_error("checkpoint: write failed for " + bin_path.string());
}

LoadedCheckpoint load_tensors(const std::filesystem::path& stem) {
    auto json_path = stem;
    json_path += ".json";
    auto bin_path = stem;
    bin_path += ".bin";

    std::ifstream jf(json_path, std::ios::binary);
    if (!jf) throw std::runtime_error("checkpoint: cannot open " + json_path.string());
    nlohmann::json manifest = nlohmann::json::parse(jf);
    if (manifest.value("format", "") != std::string("paint-checkpoint-v1"))
        throw std::runtime_error("checkpoint: unrecognized format in " + json_path.string());

    std::ifstream bf(bin_path, std::ios::binary);
    if (!bf) throw std::runtime_error("checkpoint: cannot open " + bin_path.string());
    std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    LoadedCheckpoint out;
    out.metadata = manifest.value("metadata", nlohmann::json::object());
    for (const auto& entry : manifest.at("tensors")) {
        NamedTensor nt;
        nt.name = entry.at("name").get<std::string>();
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        nt.value = Tensor(rows, cols);
        const std::size_t bytes = nt.value.data.size() * 8;
        if (offset + bytes > blob.size())
            throw std::runtime_error("checkpoint: blob too short for tensor " + nt.name);
        const auto* p = reinterpret_cast<const unsigned char*>(blob.data()) + offset;
        for (std::size_t i = 0; i < nt.value.data.size(); ++i)
            nt.value.data[i] = std::bit_cast<double>(read_le64(p + 8 * i));
        out.tensors.push_back(std::move(nt));
    }
    return out;
}

const Tensor& LoadedCheckpoint::find(const std::string& name) const {
    for (const auto& nt : tensors)
        if (nt.name == name) return nt.value;
    throw std::runtime_error("checkpoint: no tensor named " + name);
}

bool LoadedCheckpoint::contains(const std::string& name) const {
    for (const auto& nt : tensors)
        if (nt.name == name) return true;
    return false;
}

std::uint64_t fingerprint(const Tensor& t) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
    auto mix = [&h](unsigned char b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    for (double v : t.data) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
    }
    return h;
}

std::uint64_t fingerprint(const std::vector<NamedTensor>& tensors) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](unsigned char b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    for (const auto& nt : tensors) {
        for (char c : nt.name) mix(static_cast<unsigned char>(c));
        mix(0);
        const std::uint64_t sub = fingerprint(nt.value);
        for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>((sub >> (8 * i)) & 0xff));
    }
    return h;
}

}  // namespace paint
