#include "audit/permutation.hpp"

#include <algorithm>
#include <utility>

#include "audit/errors.hpp"

namespace audit {

namespace {

void reject_reserved(const std::string& value, const char* role) {
  if (value.find(':') != std::string::npos) {
    throw ReservedCharacter(std::string(role) +
                            " contains the reserved separator ':': " + value);
  }
}

std::uint64_t word_from_prefix(const std::string& prefix, std::uint64_t k) {
  Sha256 h;
  h.update(prefix);
  h.update(std::to_string(k));
  const Sha256::Digest d = h.finish();
  std::uint64_t w = 0;
  for (int i = 0; i < 8; ++i) {
    w = (w << 8) | d[i];
  }
  return w;
}

}  // namespace

RandomnessStream::RandomnessStream(std::string global_seed, std::string item_id,
                                   std::string blank_id) {
  reject_reserved(global_seed, "global_seed");
  reject_reserved(item_id, "item_id");
  reject_reserved(blank_id, "blank_id");
  prefix_ = std::move(global_seed) + ":" + std::move(item_id) + ":" +
            std::move(blank_id) + ":";
}

std::uint64_t RandomnessStream::next() {
  return word_from_prefix(prefix_, counter_++);
}

std::uint64_t RandomnessStream::word(const std::string& global_seed,
                                     const std::string& item_id,
                                     const std::string& blank_id,
                                     std::uint64_t k) {
  RandomnessStream s(global_seed, item_id, blank_id);
  return word_from_prefix(s.prefix_, k);
}

std::uint64_t RandomnessStream::next_below(std::uint64_t bound) {
  if (bound == 0) {
    throw Error("next_below: bound must be positive");
  }
  // 2^64 mod bound, computed in 64-bit arithmetic; limit = 2^64 - rem.
  const std::uint64_t rem = (std::uint64_t(0) - bound) % bound;
  for (;;) {
    const std::uint64_t w = next();
    if (rem == 0 || w < std::uint64_t(0) - rem) {
      return w % bound;
    }
  }
}

double RandomnessStream::next_unit() {
  const std::uint64_t w = next();
  return (static_cast<double>(w >> 11) + 0.5) * 0x1.0p-53;
}

std::vector<int> permute_options(const std::string& global_seed,
                                 const std::string& item_id,
                                 const std::string& blank_id, int n) {
  if (n < 1 || n > 26) {
    throw Error("permute_options: n must be in [1, 26], got " +
                std::to_string(n));
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    order[static_cast<std::size_t>(i)] = i;
  }
  RandomnessStream stream(global_seed, item_id, blank_id);
  for (int i = n - 1; i >= 1; --i) {
    const auto j = static_cast<int>(stream.next_below(std::uint64_t(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

PermutationRecord make_permutation_record(const std::string& global_seed,
                                          const std::string& item_id,
                                          const std::string& blank_id, int n) {
  return PermutationRecord{item_id, blank_id, global_seed,
                           permute_options(global_seed, item_id, blank_id, n)};
}

bool is_permutation_of_size(const std::vector<int>& order, int n) {
  if (static_cast<int>(order.size()) != n) {
    return false;
  }
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int v : order) {
    if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)]) {
      return false;
    }
    seen[static_cast<std::size_t>(v)] = true;
  }
  return true;
}

PromptHash prompt_hash(std::string_view prompt_bytes) {
  return PromptHash{Sha256::hex(prompt_bytes)};
}

}  // namespace audit
