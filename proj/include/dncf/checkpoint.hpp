#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dncf {

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;

  bool operator==(const NamedTensor&) const = default;
};

// Ordered collection of named tensors.
//
// On-disk layout (all integers little-endian):
//
//   magic        8 bytes  "DNCFCKPT"
//   version      u32      kCheckpointVersion
//   count        u32      number of tensors
//   per tensor:
//     name_len   u32
//     name       name_len bytes, UTF-8
//     rank       u32
//     dims       rank x u64
//     payload    prod(dims) x IEEE-754 binary64, little-endian
//
// A rank-0 tensor carries one value.
struct Checkpoint {
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(std::string_view name) const;
  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& checkpoint);
// Throws CheckpointError on bad magic, unsupported version or truncation.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dncf
