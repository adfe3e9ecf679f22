#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "audit/sha256.hpp"

namespace audit {

// One stored option ordering for one (item, blank) under one global seed.
// order maps presented position -> original option index.
struct PermutationRecord {
  std::string item_id;
  std::string blank_id;
  std::string global_seed;
  std::vector<int> order;
};

// SHA-256 hex of the exact prompt byte sequence.
struct PromptHash {
  std::string hex;  // 64 lowercase hex chars

  friend bool operator==(const PromptHash&, const PromptHash&) = default;
};

// Deterministic stream of 64-bit words. Word k is the first 8 digest bytes,
// big-endian, of SHA-256("<seed>:<item_id>:<blank_id>:<k>") with k counting
// from 0 in base 10. Identical on every platform and in every language.
class RandomnessStream {
 public:
  // Throws ReservedCharacter if any input contains ':'.
  RandomnessStream(std::string global_seed, std::string item_id,
                   std::string blank_id);

  std::uint64_t next();

  // Word k without advancing shared state (stateless recompute).
  static std::uint64_t word(const std::string& global_seed,
                            const std::string& item_id,
                            const std::string& blank_id, std::uint64_t k);

  // Uniform draw in [0, bound) by rejection sampling: consume words w,
  // accept w mod bound iff w < floor(2^64 / bound) * bound.
  std::uint64_t next_below(std::uint64_t bound);

  // Word mapped to the open unit interval: ((w >> 11) + 0.5) * 2^-53.
  double next_unit();

 private:
  std::string prefix_;  // "<seed>:<item>:<blank>:"
  std::uint64_t counter_ = 0;
};

// Rejection-sampled Fisher-Yates over the identity array [0..n-1], iterating
// i from n-1 down to 1; requires 1 <= n <= 26.
std::vector<int> permute_options(const std::string& global_seed,
                                 const std::string& item_id,
                                 const std::string& blank_id, int n);

PermutationRecord make_permutation_record(const std::string& global_seed,
                                          const std::string& item_id,
                                          const std::string& blank_id, int n);

// True iff order is a permutation of {0..n-1}.
bool is_permutation_of_size(const std::vector<int>& order, int n);

PromptHash prompt_hash(std::string_view prompt_bytes);

}  // namespace audit
