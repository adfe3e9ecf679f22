#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace audit {

// Portable SHA-256 (FIPS 180-4). Self-contained so that digests, seeded
// shuffles and prompt hashes are bit-identical on every platform.
class Sha256 {
 public:
  using Digest = std::array<std::uint8_t, 32>;

  Sha256();

  void update(const void* data, std::size_t len);
  void update(std::string_view s) { update(s.data(), s.size()); }

  // Finalizes and returns the digest. The object must not be reused after.
  Digest finish();

  static Digest hash(std::string_view s);
  static std::string hex(std::string_view s);

 private:
  void process_block(const std::uint8_t* block);

  std::array<std::uint32_t, 8> state_;
  std::array<std::uint8_t, 64> buffer_;
  std::uint64_t total_len_ = 0;
  std::size_t buffer_len_ = 0;
};

std::string to_hex(const Sha256::Digest& digest);

}  // namespace audit
