#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dora/tensor.hpp"

namespace dora {

/// Named float32 tensors in a fixed order; the unit of checkpoint IO.
using TensorFile = std::vector<std::pair<std::string, Tensor<float>>>;

/// Binary layout: magic "DORA", u16 version, u32 tensor count; per tensor:
/// u16 name length + UTF-8 name, u8 rank, u64 dims, little-endian float32
/// payload; trailing CRC32 over the concatenated payloads.
inline constexpr uint16_t kCheckpointVersion = 1;

void save_tensor_file(const std::string& path, const TensorFile& tensors);

/// Throws data_error on bad magic, version mismatch, truncation or CRC
/// mismatch.
TensorFile load_tensor_file(const std::string& path);

/// IEEE CRC32 (reflected, poly 0xEDB88320).
uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

}  // namespace dora
