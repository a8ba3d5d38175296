#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "piece/numerics/layers.hpp"
#include "piece/numerics/tensor.hpp"

// Flat archive of named tensors:
//   "PIEC" | version u32 | count u64 |
//   per tensor: name_len u32 | name (UTF-8) | rank u32 | extents u64 x rank | values f64 x size
// All integers and floats little-endian.
namespace piece::num {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_checkpoint(std::ostream& os, const NamedParams& params);
void save_checkpoint(const std::filesystem::path& path, const NamedParams& params);

NamedTensors read_checkpoint(std::istream& is);
NamedTensors load_checkpoint(const std::filesystem::path& path);

// Copies archived tensors into `params` by name; every parameter must be present
// with a matching shape. Extra archive entries are an error.
void assign_checkpoint(const NamedTensors& archive, const NamedParams& params);

}  // namespace piece::num
