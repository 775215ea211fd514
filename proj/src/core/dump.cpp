#include "t4c/dump.hpp"

#include <fstream>

#include "t4c/binary_io.hpp"

namespace t4c {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::uint8_t> bytes(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("short read on " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed on " + path);
}

namespace {
constexpr char kDenseMagic[8] = {'D', 'T', 'N', 'S', 'R', 0, 0, 0};
constexpr char kSparseMagic[8] = {'S', 'P', 'T', 'N', 'S', 'R', 0, 0};
}  // namespace

std::vector<std::uint8_t> encode_dense_dump(const Tensor<float>& t) {
  ByteWriter w;
  w.magic({kDenseMagic, 8});
  w.le(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.le(static_cast<std::uint64_t>(d));
  for (float v : t.data()) w.f32(v);
  return w.take();
}

Tensor<float> decode_dense_dump(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "dense dump");
  r.expect_magic({kDenseMagic, 8});
  const auto rank = r.le<std::uint32_t>();
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = r.le<std::uint64_t>();
    if (d == 0 || d > (1ull << 40)) r.fail("invalid dimension");
    shape.push_back(static_cast<std::int64_t>(d));
  }
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  r.need(n * 4);
  std::vector<float> values(n);
  for (auto& v : values) v = r.f32();
  r.expect_end();
  return Tensor<float>(shape, std::move(values));
}

void write_dense_dump(const std::string& path, const Tensor<float>& t) {
  write_file_bytes(path, encode_dense_dump(t));
}
Tensor<float> read_dense_dump(const std::string& path) { return decode_dense_dump(read_file_bytes(path)); }

std::vector<std::uint8_t> encode_sparse_dump(const SparseTensor<float>& s) {
  ByteWriter w;
  w.magic({kSparseMagic, 8});
  w.le(static_cast<std::uint64_t>(s.rows()));
  w.le(static_cast<std::uint32_t>(s.channels));
  for (auto d : s.shape) w.le(static_cast<std::uint32_t>(d));
  for (const auto& c : s.coords) {
    for (auto v : c) w.le(static_cast<std::uint32_t>(v));
  }
  for (float v : s.feats) w.f32(v);
  return w.take();
}

SparseTensor<float> decode_sparse_dump(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "sparse dump");
  r.expect_magic({kSparseMagic, 8});
  SparseTensor<float> s;
  const auto n = r.le<std::uint64_t>();
  s.channels = static_cast<int>(r.le<std::uint32_t>());
  for (auto& d : s.shape) d = r.le<std::uint32_t>();
  r.need(n * 16);
  s.coords.resize(n);
  for (auto& c : s.coords) {
    for (auto& v : c) v = static_cast<std::int32_t>(r.le<std::uint32_t>());
  }
  r.need(n * static_cast<std::uint64_t>(s.channels) * 4);
  s.feats.resize(n * static_cast<std::size_t>(s.channels));
  for (auto& v : s.feats) v = r.f32();
  r.expect_end();
  try {
    s.validate();
  } catch (const ShapeError& e) {
    r.fail(e.what());
  }
  return s;
}

void write_sparse_dump(const std::string& path, const SparseTensor<float>& s) {
  write_file_bytes(path, encode_sparse_dump(s));
}
SparseTensor<float> read_sparse_dump(const std::string& path) {
  return decode_sparse_dump(read_file_bytes(path));
}

}  // namespace t4c
