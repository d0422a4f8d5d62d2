#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace datamarket {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view text);

// Lowercase hex, 64 characters.
std::string to_hex(const Digest& digest);
// Strict inverse of to_hex: exactly 64 lowercase hex digits.
std::optional<Digest> digest_from_hex(std::string_view hex);

constexpr Digest kZeroDigest{};

// Unambiguous byte encoding for hashing: every field is length- or
// width-prefixed so distinct field tuples never collide on concatenation.
class HashWriter {
 public:
  HashWriter& u64(std::uint64_t value);
  HashWriter& i64(std::int64_t value);
  HashWriter& f64(double value);  // IEEE-754 bit pattern
  HashWriter& bytes(std::span<const std::uint8_t> data);
  HashWriter& str(std::string_view text);
  HashWriter& digest(const Digest& d);

  Digest finish() const { return sha256(buffer_); }
  const std::vector<std::uint8_t>& buffer() const { return buffer_; }

 private:
  std::vector<std::uint8_t> buffer_;
};

}  // namespace datamarket
