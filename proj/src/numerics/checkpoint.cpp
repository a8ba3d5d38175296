#include "piece/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "piece/error.hpp"

namespace piece::num {

namespace {

template <class T>
void put_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = std::bit_cast<U>(value);
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, sizeof buf);
}

template <class T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof buf)) throw DataError("checkpoint: unexpected end of file");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

constexpr char kMagic[4] = {'P', 'I', 'E', 'C'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

}  // namespace

void write_checkpoint(std::ostream& os, const NamedParams& params) {
  std::set<std::string> seen;
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint64_t>(os, params.size());
  for (const auto& [name, tensor] : params) {
    if (!seen.insert(name).second) throw std::logic_error("checkpoint: duplicate tensor name " + name);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensor->rank()));
    for (auto e : tensor->shape()) put_le<std::uint64_t>(os, e);
    for (double v : tensor->data()) put_le<double>(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

void save_checkpoint(const std::filesystem::path& path, const NamedParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(os, params);
}

NamedTensors read_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw DataError("checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get_le<std::uint64_t>(is);
  NamedTensors out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = get_le<std::uint32_t>(is);
    if (len > 4096) throw DataError("checkpoint: implausible name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError("checkpoint: truncated name");
    const auto rank = get_le<std::uint32_t>(is);
    if (rank == 0 || rank > 8) throw DataError("checkpoint: bad rank for " + name);
    Shape shape;
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto e = get_le<std::uint64_t>(is);
      if (e == 0 || e > kMaxElements) throw DataError("checkpoint: bad extent for " + name);
      n *= e;
      if (n > kMaxElements) throw DataError("checkpoint: tensor too large: " + name);
      shape.push_back(static_cast<std::size_t>(e));
    }
    std::vector<double> data(static_cast<std::size_t>(n));
    for (double& v : data) v = get_le<double>(is);
    try {
      out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    } catch (const std::domain_error&) {
      throw DataError("checkpoint: non-finite values");
    }
  }
  return out;
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path.string());
  return read_checkpoint(is);
}

void assign_checkpoint(const NamedTensors& archive, const NamedParams& params) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : archive) by_name.emplace(name, &t);
  if (by_name.size() != params.size()) {
    throw DataError("checkpoint: holds " + std::to_string(by_name.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (const auto& [name, p] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint: missing tensor " + name);
    if (it->second->shape() != p->shape()) {
      throw DataError("checkpoint: shape mismatch for " + name + ": " + shape_string(it->second->shape()) +
                      " vs " + shape_string(p->shape()));
    }
    *p = *it->second;
  }
}

}  // namespace piece::num
