#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sgcp/autodiff.hpp"
#include "sgcp/tensor.hpp"

namespace sgcp {

struct NamedArray {
  std::string name;
  Tensor value;
};

/// Flat binary container of named arrays:
///   magic "SGCPCKPT", u32 version, u64 count, then per array
///   u32 name length, name bytes, u8 dtype (1 = float64), u32 rank,
///   u64 dims[rank], raw little-endian values.
void write_arrays(std::ostream& out, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_arrays(std::istream& in);

void save_checkpoint(const std::string& path, const ParameterStore& params);
/// Copies values into existing parameters; names and shapes must match exactly.
void load_checkpoint(const std::string& path, ParameterStore& params);
void load_arrays(const std::vector<NamedArray>& arrays, ParameterStore& params);

}  // namespace sgcp
