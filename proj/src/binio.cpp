#include "mux/binio.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "mux/errors.hpp"

namespace mux {

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void ByteWriter::u32(std::uint32_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v));
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  buf_.push_back(static_cast<std::uint8_t>(v >> 16));
  buf_.push_back(static_cast<std::uint8_t>(v >> 24));
}

void ByteWriter::u64(std::uint64_t v) {
  u32(static_cast<std::uint32_t>(v));
  u32(static_cast<std::uint32_t>(v >> 32));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::bytes(const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void ByteWriter::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.rank()));
  for (int d : t.shape) u32(static_cast<std::uint32_t>(d));
  for (float v : t.data) f32(v);
}

void ByteWriter::finish_to_file(const std::string& path) const {
  const std::uint32_t crc = crc32(buf_.data(), buf_.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  const std::uint8_t tail[4] = {
      static_cast<std::uint8_t>(crc), static_cast<std::uint8_t>(crc >> 8),
      static_cast<std::uint8_t>(crc >> 16), static_cast<std::uint8_t>(crc >> 24)};
  out.write(reinterpret_cast<const char*>(tail), 4);
  if (!out) throw IoError("write failed: " + path);
}

ByteReader ByteReader::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open: " + path);
  const std::streamsize len = in.tellg();
  if (len < 4) throw IoError("truncated file (no checksum): " + path);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(len));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), len);
  if (!in) throw IoError("read failed: " + path);
  const std::size_t body = buf.size() - 4;
  const std::uint32_t stored = static_cast<std::uint32_t>(buf[body]) |
                               static_cast<std::uint32_t>(buf[body + 1]) << 8 |
                               static_cast<std::uint32_t>(buf[body + 2]) << 16 |
                               static_cast<std::uint32_t>(buf[body + 3]) << 24;
  if (crc32(buf.data(), body) != stored) throw IoError("checksum mismatch: " + path);
  return ByteReader(std::move(buf), body);
}

void ByteReader::need(std::size_t n) {
  if (pos_ + n > end_) throw IoError("truncated record: wanted " + std::to_string(n) + " more bytes");
}

std::uint32_t ByteReader::u32() {
  need(4);
  const std::uint32_t v = static_cast<std::uint32_t>(buf_[pos_]) |
                          static_cast<std::uint32_t>(buf_[pos_ + 1]) << 8 |
                          static_cast<std::uint32_t>(buf_[pos_ + 2]) << 16 |
                          static_cast<std::uint32_t>(buf_[pos_ + 3]) << 24;
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  const std::uint64_t lo = u32();
  const std::uint64_t hi = u32();
  return lo | hi << 32;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::vector<std::uint8_t> ByteReader::raw(std::size_t n) {
  need(n);
  std::vector<std::uint8_t> out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return out;
}

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

Tensor ByteReader::tensor() {
  const std::uint32_t rank = u32();
  if (rank > 8) throw IoError("implausible tensor rank " + std::to_string(rank));
  std::vector<int> shape(rank);
  std::int64_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<int>(u32());
    if (shape[i] <= 0) throw IoError("invalid tensor dimension in file");
    n *= shape[i];
  }
  std::vector<float> data(static_cast<std::size_t>(n));
  for (auto& v : data) v = f32();
  return Tensor::from(std::move(shape), std::move(data));
}

}  // namespace mux
