#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "paint/tensor.hpp"

namespace paint {

// Checkpoints are a pair of files sharing a stem: <stem>.json holds the
// manifest (metadata plus per-tensor name/shape/offset) and <stem>.bin holds
// the raw values as little-endian 64-bit floats in manifest order.  Round
// trips are bit-exact.

struct NamedTensor {
    std::string name;
    Tensor value;
};

void save_tensors(const std::filesystem::path& stem, const nlohmann::json& metadata,
                  const std::vector<NamedTensor>& tensors);

struct LoadedCheckpoint {
    nlohmann::json metadata;
    std::vector<NamedTensor> tensors;  // in manifest order

    const Tensor& find(const std::string& name) const;
    bool contains(const std::string& name) const;
};

LoadedCheckpoint load_tensors(const std::filesystem::path& stem);

// FNV-1a over the little-endian byte encoding; used by tests to assert that
// frozen parameters stayed bit-identical.
std::uint64_t fingerprint(const Tensor& t);
std::uint64_t fingerprint(const std::vector<NamedTensor>& tensors);

}  // namespace paint
