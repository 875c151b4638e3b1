#include "sgcp/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "sgcp/error.hpp"

namespace sgcp {

namespace {

constexpr char kMagic[8] = {'S', 'G', 'C', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kFloat64 = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("checkpoint: truncated file");
  return v;
}

}  // namespace

void write_arrays(std::ostream& out, const std::vector<NamedArray>& arrays) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, arrays.size());
  for (const auto& a : arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put<std::uint8_t>(out, kFloat64);
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, a.value.rows());
    put<std::uint64_t>(out, a.value.cols());
    out.write(reinterpret_cast<const char*>(a.value.data().data()),
              static_cast<std::streamsize>(a.value.size() * sizeof(double)));
  }
  if (!out) throw DataError("checkpoint: write failed");
}

std::vector<NamedArray> read_arrays(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw DataError("checkpoint: bad magic header");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get<std::uint64_t>(in);
  std::vector<NamedArray> arrays;
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedArray a;
    const auto len = get<std::uint32_t>(in);
    a.name.resize(len);
    if (!in.read(a.name.data(), len)) throw DataError("checkpoint: truncated file");
    if (get<std::uint8_t>(in) != kFloat64) throw DataError("checkpoint: unsupported dtype for '" + a.name + "'");
    const auto rank = get<std::uint32_t>(in);
    if (rank != 2) throw DataError("checkpoint: unsupported rank for '" + a.name + "'");
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    a.value = Tensor(rows, cols);
    if (!in.read(reinterpret_cast<char*>(a.value.data().data()), static_cast<std::streamsize>(rows * cols * sizeof(double))))
      throw DataError("checkpoint: truncated file");
    arrays.push_back(std::move(a));
  }
  return arrays;
}

void save_checkpoint(const std::string& path, const ParameterStore& params) {
  std::vector<NamedArray> arrays;
  for (const Parameter* p : params.all()) arrays.push_back({p->name, p->value});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  write_arrays(out, arrays);
}

void load_arrays(const std::vector<NamedArray>& arrays, ParameterStore& params) {
  if (arrays.size() != params.size())
    throw DataError("checkpoint: " + std::to_string(arrays.size()) + " arrays for " + std::to_string(params.size()) +
                    " parameters");
  for (const auto& a : arrays) {
    if (!params.contains(a.name)) throw DataError("checkpoint: unexpected array '" + a.name + "'");
    Parameter& p = params.get(a.name);
    if (!p.value.same_shape(a.value))
      throw DataError("checkpoint: shape mismatch for '" + a.name + "': " + a.value.shape_string() + " vs " +
                      p.value.shape_string());
    p.value = a.value;
  }
}

void load_checkpoint(const std::string& path, ParameterStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  load_arrays(read_arrays(in), params);
}

}  // namespace sgcp
