#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "glab/tensor.hpp"

// Little-endian container of named tensors shared by weight and capture files:
//
//   magic[4] | u32 version | u32 entry count |
//   entries: u32 name length, name bytes (UTF-8), u32 rank, u64 dims[rank],
//            f64 values[product(dims)]
//
// Values are stored as their raw IEEE-754 bit patterns, so a round trip is exact.

namespace glab {

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

std::vector<char> encode_container(std::string_view magic, const std::vector<NamedTensor>& entries);
// Throws FormatError (bad magic, truncation, garbage) or VersionError.
std::vector<NamedTensor> decode_container(std::string_view magic, const std::vector<char>& bytes);

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const std::vector<NamedTensor>& entries);
std::vector<NamedTensor> read_container(const std::filesystem::path& path, std::string_view magic);

// FNV-1a over the encoded entries; used to tie captures to the model that made them.
std::uint64_t fingerprint(const std::vector<NamedTensor>& entries);

}  // namespace glab
