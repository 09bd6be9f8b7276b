#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cwgen/nn/params.hpp"
#include "cwgen/nn/tensor.hpp"

namespace cwgen::nn {

inline constexpr char kCheckpointMagic[4] = {'C', 'W', 'G', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Binary layout, all integers and floats little-endian:
///   "CWGN" | u32 version | u64 tensor count |
///   per tensor: u32 name length | name bytes | u32 rank | u64 dims[rank] | f64 payload
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Serialized bytes of the layout above; write_checkpoint writes exactly these.
std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

/// Parameter values in insertion order (optimizer state is not persisted).
std::vector<NamedTensor> export_values(const NetParams& params);
/// Loads values by name; every parameter of `params` must be present with the same shape.
void import_values(NetParams& params, const std::vector<NamedTensor>& tensors);

const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace cwgen::nn
