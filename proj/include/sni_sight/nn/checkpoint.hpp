#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sni_sight/nn/tensor.hpp"

namespace sni_sight::nn {

inline constexpr char kCheckpointMagic[4] = {'S', 'N', 'I', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian):
///   "SNIM" | u32 version | u32 metadata length | metadata (UTF-8 JSON)
///   then until end of file, per tensor:
///   u32 name length | name | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
struct Checkpoint {
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor>> tensors;

    void put(std::string name, Tensor t);
    [[nodiscard]] const Tensor& get(const std::string& name) const;
    [[nodiscard]] bool has(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws BadMagic, VersionMismatch or CorruptTensor.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sni_sight::nn
