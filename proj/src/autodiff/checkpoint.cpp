#include "lingua/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lingua::ad {

namespace {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'C', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("truncated tensor file while reading " + what);
  return v;
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedArray>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (element_count(r.shape) != r.values.size()) {
      throw DimensionError("record " + r.name + ": shape " + shape_string(r.shape) + " does not match values");
    }
    put_u32(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(os, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) put_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(r.values.data()),
             static_cast<std::streamsize>(r.values.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::vector<NamedArray> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic, not an LCT1 tensor file");
  }
  const auto count = get_u32(is, "record count");
  std::vector<NamedArray> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray r;
    const auto len = get_u32(is, "name length");
    r.name.resize(len);
    if (!is.read(r.name.data(), len)) throw FormatError("truncated tensor file in record name");
    const auto rank = get_u32(is, "rank of " + r.name);
    for (std::uint32_t k = 0; k < rank; ++k) r.shape.push_back(get_u32(is, "dims of " + r.name));
    r.values.resize(element_count(r.shape));
    if (!is.read(reinterpret_cast<char*>(r.values.data()),
                 static_cast<std::streamsize>(r.values.size() * sizeof(double)))) {
      throw FormatError("truncated values for tensor " + r.name);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace lingua::ad
