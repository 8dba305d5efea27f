#include "dora/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "dora/errors.hpp"

namespace dora {
namespace {

const std::array<char, 4> kMagic = {'D', 'O', 'R', 'A'};

std::array<uint32_t, 256> make_crc_table() {
  std::array<uint32_t, 256> table{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int b = 0; b < 8; ++b) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  uint8_t bytes[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<uint8_t>((static_cast<uint64_t>(value) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path) {
  uint8_t bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (static_cast<size_t>(in.gcount()) != sizeof(T))
    throw data_error(path + ": corrupt checkpoint (truncated)");
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed) {
  static const auto table = make_crc_table();
  uint32_t c = seed ^ 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xff] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void save_tensor_file(const std::string& path, const TensorFile& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out.write(kMagic.data(), kMagic.size());
  write_le<uint16_t>(out, kCheckpointVersion);
  write_le<uint32_t>(out, static_cast<uint32_t>(tensors.size()));

  uint32_t crc = 0;
  for (const auto& [name, tensor] : tensors) {
    write_le<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<uint8_t>(out, static_cast<uint8_t>(tensor.rank()));
    for (int64_t dim : tensor.shape) write_le<uint64_t>(out, static_cast<uint64_t>(dim));
    for (float v : tensor.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      write_le<uint32_t>(out, bits);
    }
    crc = crc32(reinterpret_cast<const uint8_t*>(tensor.data.data()),
                tensor.data.size() * sizeof(float), crc);
  }
  write_le<uint32_t>(out, crc);
  if (!out) throw data_error(path + ": write failed");
}

TensorFile load_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(path + ": cannot open");
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (static_cast<size_t>(in.gcount()) != magic.size() || magic != kMagic)
    throw data_error(path + ": corrupt checkpoint (bad magic)");
  uint16_t version = read_le<uint16_t>(in, path);
  if (version != kCheckpointVersion)
    throw data_error(path + ": checkpoint version mismatch (got " +
                     std::to_string(version) + ", expected " +
                     std::to_string(kCheckpointVersion) + ")");
  uint32_t count = read_le<uint32_t>(in, path);

  TensorFile tensors;
  tensors.reserve(count);
  uint32_t crc = 0;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t name_len = read_le<uint16_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<size_t>(in.gcount()) != name_len)
      throw data_error(path + ": corrupt checkpoint (truncated)");
    uint8_t rank = read_le<uint8_t>(in, path);
    std::vector<int64_t> shape(rank);
    int64_t total = 1;
    for (auto& dim : shape) {
      dim = static_cast<int64_t>(read_le<uint64_t>(in, path));
      if (dim < 0 || dim > (int64_t(1) << 32))
        throw data_error(path + ": corrupt checkpoint (bad dims)");
      total *= dim;
    }
    Tensor<float> t;
    t.shape = std::move(shape);
    t.data.resize(static_cast<size_t>(total));
    for (auto& v : t.data) {
      uint32_t bits = read_le<uint32_t>(in, path);
      std::memcpy(&v, &bits, sizeof(v));
    }
    crc = crc32(reinterpret_cast<const uint8_t*>(t.data.data()),
                t.data.size() * sizeof(float), crc);
    tensors.emplace_back(std::move(name), std::move(t));
  }
  uint32_t stored = read_le<uint32_t>(in, path);
  if (stored != crc)
    throw data_error(path + ": corrupt checkpoint (CRC mismatch)");
  return tensors;
}

}  // namespace dora
