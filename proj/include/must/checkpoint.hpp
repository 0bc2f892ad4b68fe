#pragma once

// Flat binary parameter container:
//
//   "MUST" | version:u32
//   repeated until EOF:
//     name_len:u32 | name bytes | rank:u32 | extents:u64[rank] | payload:f64[numel]
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "must/tensor.hpp"

namespace must {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensor = std::pair<std::string, Tensor>;
using NamedParams = std::vector<NamedTensor>;

std::vector<unsigned char> encode_checkpoint(const NamedParams& params);
NamedParams decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const std::filesystem::path& path, const NamedParams& params);
NamedParams load_checkpoint(const std::filesystem::path& path);

// Copies values from `source` into the identically named tensors of `target`.
// Every target name must be present with the same shape.
void assign_parameters(NamedParams& target, const NamedParams& source);

// Git-style blob hash of the encoded parameters.
std::string parameters_hash(const NamedParams& params);

}  // namespace must
