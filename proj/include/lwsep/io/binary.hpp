#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lwsep/common.hpp"

namespace lwsep::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are not supported");

/// Malformed or truncated binary input. `offset` is the byte position at
/// which decoding failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class ByteWriter {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  template <typename T, typename A>
  void put_array(const std::vector<T, A>& v) {
    if (v.empty()) return;
    const auto* p = reinterpret_cast<const char*>(v.data());
    buf_.insert(buf_.end(), p, p + v.size() * sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  template <typename T>
  T get(const char* what) {
    require(sizeof(T), what);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <typename T>
  std::vector<T> get_array(std::uint64_t count, const char* what) {
    if (count > (data_.size() - pos_) / sizeof(T)) {
      throw ParseError(std::string("truncated input while reading ") + what, pos_);
    }
    std::vector<T> v(count);
    if (count) std::memcpy(v.data(), data_.data() + pos_, count * sizeof(T));
    pos_ += count * sizeof(T);
    return v;
  }
  std::string get_string(const char* what) {
    const auto len = get<std::uint32_t>(what);
    require(len, what);
    std::string s(data_.data() + pos_, len);
    pos_ += len;
    return s;
  }
  void expect_magic(const char (&magic)[5]) {
    require(4, "magic");
    if (std::memcmp(data_.data() + pos_, magic, 4) != 0) {
      throw ParseError(std::string("bad magic, expected '") + magic + "'", pos_);
    }
    pos_ += 4;
  }
  std::uint64_t position() const { return pos_; }
  std::uint64_t remaining() const { return data_.size() - pos_; }

 private:
  void require(std::uint64_t n, const char* what) {
    if (n > data_.size() - pos_) {
      throw ParseError(std::string("truncated input while reading ") + what, pos_);
    }
  }

  std::vector<char> data_;
  std::uint64_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<char> data(size);
  if (size && !in.read(data.data(), static_cast<std::streamsize>(size))) {
    throw Error("failed reading '" + path.string() + "'");
  }
  return data;
}

/// Writes to a temporary sibling and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& data) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp + "' for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("failed writing '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace lwsep::io
