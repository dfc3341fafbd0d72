#include "ibc/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "ibc/errors.hpp"
#include "ibc/io_util.hpp"

namespace ibc::model {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view data, std::size_t& offset, const std::filesystem::path& path) {
  if (offset + sizeof(T) > data.size())
    throw IoError(strf("checkpoint ", path.string(), " is truncated"));
  T v;
  std::memcpy(&v, data.data() + offset, sizeof(T));
  offset += sizeof(T);
  return v;
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path, std::string_view magic,
                       std::span<const ad::Tensor> tensors) {
  if (magic.size() != 8) throw Error("checkpoint magic must be 8 bytes");
  std::string out;
  out.append(magic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const ad::Tensor& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
    const auto d = t.data();
    out.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
  }
  io::atomic_write_file(path, out);
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::string data = io::read_file(path);
  if (data.size() < 16) throw IoError(strf("checkpoint ", path.string(), " is truncated"));

  TensorFile file;
  file.magic = data.substr(0, 8);
  std::size_t offset = 8;
  file.version = take<std::uint32_t>(data, offset, path);
  if (file.version != kCheckpointVersion)
    throw IoError(strf("checkpoint ", path.string(), " has unsupported version ",
                       file.version));
  auto count = take<std::uint32_t>(data, offset, path);
  file.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto rank = take<std::uint32_t>(data, offset, path);
    ad::Shape shape(rank);
    for (auto& e : shape)
      e = static_cast<std::size_t>(take<std::uint64_t>(data, offset, path));
    std::size_t n = ad::shape_size(shape);
    if (offset + n * sizeof(double) > data.size())
      throw IoError(strf("checkpoint ", path.string(), " is truncated"));
    std::vector<double> values(n);
    std::memcpy(values.data(), data.data() + offset, n * sizeof(double));
    offset += n * sizeof(double);
    file.tensors.emplace_back(std::move(shape), std::move(values));
  }
  if (offset != data.size())
    throw IoError(strf("checkpoint ", path.string(), " has ", data.size() - offset,
                       " trailing bytes"));
  return file;
}

std::string peek_magic(const std::filesystem::path& path) {
  std::string data = io::read_file(path);
  if (data.size() < 8) throw IoError(strf("checkpoint ", path.string(), " is truncated"));
  return data.substr(0, 8);
}

void save_energy_checkpoint(const std::filesystem::path& path, const EnergyParams& p) {
  write_tensor_file(path, kEnergyMagic, p.tensors());
}

EnergyParams load_energy_checkpoint(const std::filesystem::path& path) {
  TensorFile file = read_tensor_file(path);
  if (file.magic != kEnergyMagic)
    throw IoError(strf("checkpoint ", path.string(), " is not an energy model (magic '",
                       file.magic, "')"));
  return EnergyParams::from_tensors(file.tensors);
}

}  // namespace ibc::model
