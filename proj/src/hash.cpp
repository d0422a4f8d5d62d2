#include "datamarket/hash.hpp"

#include <bit>
#include <cstring>

#include <openssl/evp.h>

#include "datamarket/errors.hpp"

namespace datamarket {

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest out{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &length, EVP_sha256(), nullptr) != 1 ||
      length != out.size()) {
    throw Error("SHA-256 computation failed");
  }
  return out;
}

Digest sha256(std::string_view text) {
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string to_hex(const Digest& digest) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto byte : digest) {
    out.push_back(kDigits[byte >> 4]);
    out.push_back(kDigits[byte & 0xf]);
  }
  return out;
}

std::optional<Digest> digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  Digest out{};
  for (std::size_t i = 0; i < 32; ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

HashWriter& HashWriter::u64(std::uint64_t value) {
  for (int b = 0; b < 8; ++b) buffer_.push_back(static_cast<std::uint8_t>(value >> (8 * b)));
  return *this;
}

HashWriter& HashWriter::i64(std::int64_t value) {
  return u64(static_cast<std::uint64_t>(value));
}

HashWriter& HashWriter::f64(double value) {
  return u64(std::bit_cast<std::uint64_t>(value));
}

HashWriter& HashWriter::bytes(std::span<const std::uint8_t> data) {
  u64(data.size());
  buffer_.insert(buffer_.end(), data.begin(), data.end());
  return *this;
}

HashWriter& HashWriter::str(std::string_view text) {
  return bytes(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

HashWriter& HashWriter::digest(const Digest& d) {
  buffer_.insert(buffer_.end(), d.begin(), d.end());
  return *this;
}

}  // namespace datamarket
