#include "kfusion/kft.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "kfusion/errors.hpp"

namespace kfusion::kft {

namespace {

constexpr char kMagic[4] = {'K', 'F', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

std::size_t Array::numel() const {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

void save(const std::filesystem::path& path, const Array& a) {
  if (a.data.size() != a.numel()) {
    throw ValidationError("kft: payload size does not match dims");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("kft: cannot open for writing: " + path.string());
  os.write(kMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(a.dims.size()));
  for (std::uint32_t d : a.dims) put_u32(os, d);
  for (float f : a.data) put_u32(os, std::bit_cast<std::uint32_t>(f));
  if (!os) throw IoError("kft: write failed: " + path.string());
}

Array load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("kft: cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("kft: bad magic in " + path.string());
  }
  const std::uint32_t rank = get_u32(is);
  if (!is || rank == 0 || rank > 8) {
    throw ValidationError("kft: unsupported rank in " + path.string());
  }
  Array a;
  a.dims.resize(rank);
  for (std::uint32_t i = 0; i < rank; ++i) a.dims[i] = get_u32(is);
  if (!is) throw ValidationError("kft: truncated header in " + path.string());
  a.data.resize(a.numel());
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = std::bit_cast<float>(get_u32(is));
  }
  if (!is) throw ValidationError("kft: truncated payload in " + path.string());
  return a;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  const Shape3 s = t.shape();
  Array a;
  a.dims = {static_cast<std::uint32_t>(s.b), static_cast<std::uint32_t>(s.c),
            static_cast<std::uint32_t>(s.l)};
  a.data.reserve(t.values().size());
  for (double v : t.values()) a.data.push_back(static_cast<float>(v));
  save(path, a);
}

Tensor load_tensor(const std::filesystem::path& path, bool requires_grad) {
  Array a = load(path);
  if (a.dims.size() != 3) {
    throw ValidationError("kft: expected rank 3 tensor in " + path.string());
  }
  std::vector<double> vals(a.data.begin(), a.data.end());
  return Tensor::from_values(
      Shape3{static_cast<int>(a.dims[0]), static_cast<int>(a.dims[1]), static_cast<int>(a.dims[2])},
      std::move(vals), requires_grad);
}

}  // namespace kfusion::kft
