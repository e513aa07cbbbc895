#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mux/tensor.hpp"

namespace mux {

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320) over a byte range.
std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed = 0);

/// Little-endian byte writer backing the MUXC/MUXD file formats. Encoding is
/// explicit byte-by-byte so files are identical regardless of host order.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void bytes(const void* p, std::size_t n);
  void str(const std::string& s);  // u32 length prefix + UTF-8 bytes
  void tensor(const Tensor& t);    // u32 rank, u32 dims, f32 data

  /// Appends the CRC32 of everything written so far and flushes to a file.
  void finish_to_file(const std::string& path) const;

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Matching reader; verifies the trailing CRC up front.
class ByteReader {
 public:
  /// Loads a whole file and checks its trailing CRC32.
  static ByteReader from_file(const std::string& path);

  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::string str();
  Tensor tensor();
  std::vector<std::uint8_t> raw(std::size_t n);
  bool exhausted() const { return pos_ == end_; }

 private:
  ByteReader(std::vector<std::uint8_t> buf, std::size_t end) : buf_(std::move(buf)), end_(end) {}
  void need(std::size_t n);

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::size_t end_;
};

}  // namespace mux
