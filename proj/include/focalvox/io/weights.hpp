// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "focalvox/core/error.hpp"
#include "focalvox/io/files.hpp"
#include "focalvox/nn/params.hpp"

// Weights container, little-endian throughout:
//   "SFMW" | u32 version | u32 count
//   count x { u16 name_len | name | u8 rank | u32 dims[rank] }
//   float32 payloads, concatenated in header order.

namespace focalvox::io {

inline constexpr char kWeightsMagic[4] = {'S', 'F', 'M', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

/// One tensor as stored on disk.
struct StoredTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    out_.append(b, n);
  }
  template <typename U>
  void le(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}
  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n)
      fail(Errc::TruncatedPayload, std::string("weights file ends inside ") + what + " (offset " +
                                       std::to_string(pos_) + ")");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_weights(const std::vector<StoredTensor>& tensors) {
  detail::ByteWriter w;
  w.raw(kWeightsMagic, 4);
  w.le<std::uint32_t>(kWeightsVersion);
  require(tensors.size() <= std::numeric_limits<std::uint32_t>::max(), Errc::ShapeMismatch, "too many tensors");
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    require(t.name.size() <= std::numeric_limits<std::uint16_t>::max(), Errc::ShapeMismatch,
            "tensor name too long: " + t.name.substr(0, 32));
    require(t.dims.size() <= std::numeric_limits<std::uint8_t>::max(), Errc::ShapeMismatch, "rank too large");
    w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    std::size_t numel = 1;
    for (auto d : t.dims) {
      w.le<std::uint32_t>(d);
      numel *= d;
    }
    require(numel == t.data.size(), Errc::ShapeMismatch, "payload length mismatch for " + t.name);
  }
  for (const auto& t : tensors)
    for (float v : t.data) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  return w.take();
}

inline std::vector<StoredTensor> decode_weights(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kWeightsMagic, 4) != 0)
    fail(Errc::BadMagic, "weights file does not start with SFMW");
  r.str(4, "magic");
  const auto version = r.le<std::uint32_t>("version");
  require(version == kWeightsVersion, Errc::VersionMismatch,
          "weights version " + std::to_string(version) + ", expected " + std::to_string(kWeightsVersion));
  const auto count = r.le<std::uint32_t>("count");
  std::vector<StoredTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.str(r.le<std::uint16_t>("name length"), "name");
    const auto rank = r.le<std::uint8_t>("rank");
    for (std::uint8_t d = 0; d < rank; ++d) t.dims.push_back(r.le<std::uint32_t>("dims"));
    tensors.push_back(std::move(t));
  }
  for (auto& t : tensors) {
    std::size_t numel = 1;
    for (auto d : t.dims) numel *= d;
    if (r.remaining() / 4 < numel) fail(Errc::TruncatedPayload, "payload of " + t.name + " is cut short");
    t.data.resize(numel);
    for (auto& v : t.data) v = std::bit_cast<float>(r.le<std::uint32_t>("payload"));
  }
  require(r.remaining() == 0, Errc::TruncatedPayload,
          std::to_string(r.remaining()) + " trailing bytes after the last payload");
  return tensors;
}

/// Every tensor of the store, parameters and buffers, in declaration order.
template <typename T>
std::vector<StoredTensor> to_stored(const nn::ParamStore<T>& store) {
  std::vector<StoredTensor> out;
  for (const auto& [name, rec] : store.entries()) {
    StoredTensor t{name, {}, {}};
    for (auto d : rec.shape) {
      require(d <= std::numeric_limits<std::uint32_t>::max(), Errc::ShapeMismatch, "dimension too large in " + name);
      t.dims.push_back(static_cast<std::uint32_t>(d));
    }
    t.data.reserve(rec.data.size());
    for (const T& v : rec.data) t.data.push_back(static_cast<float>(v));
    out.push_back(std::move(t));
  }
  return out;
}

/// Rebuilds a store against the declared layout; names, order and shapes
/// must match exactly.
template <typename T>
nn::ParamStore<T> from_stored(const std::vector<StoredTensor>& tensors, const nn::ParamSpecList& expected) {
  require(tensors.size() == expected.size(), Errc::ShapeMismatch,
          "weights hold " + std::to_string(tensors.size()) + " tensors, config declares " +
              std::to_string(expected.size()));
  nn::ParamStore<T> store;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = tensors[i];
    const auto& spec = expected[i];
    require(t.name == spec.name, Errc::ShapeMismatch,
            "tensor " + std::to_string(i) + " is '" + t.name + "', config expects '" + spec.name + "'");
    std::vector<std::size_t> dims(t.dims.begin(), t.dims.end());
    require(dims == spec.shape, Errc::ShapeMismatch, "shape of " + t.name + " differs from the config");
    store.add(t.name, dims, std::vector<T>(t.data.begin(), t.data.end()), spec.kind);
  }
  return store;
}

template <typename T>
std::string encode_weights(const nn::ParamStore<T>& store) {
  return encode_weights(to_stored(store));
}

template <typename T>
void save_weights(const nn::ParamStore<T>& store, const std::string& path) {
  write_file_atomic(path, encode_weights(store));
}

template <typename T = float>
nn::ParamStore<T> load_weights(const std::string& path, const nn::ParamSpecList& expected) {
  return from_stored<T>(decode_weights(read_file(path)), expected);
}

}  // namespace focalvox::io
