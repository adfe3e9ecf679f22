#pragma once

// Independent oracles for the test suite. Everything here deliberately
// avoids the library's own SHA-256, shuffle and EM code paths: hashing goes
// through OpenSSL's EVP interface and the estimators are written from the
// textbook formulas.

#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

// SHA-256 hex via OpenSSL (EVP one-shot).
std::string sha256_hex(const std::string& bytes);

// Word k of the seeded stream: first 8 digest bytes, big-endian, of
// SHA-256("<seed>:<item>:<blank>:<k>").
std::uint64_t stream_word(const std::string& seed, const std::string& item,
                          const std::string& blank, std::uint64_t k);

// Rejection-sampled Fisher-Yates over [0..n-1], i from n-1 down to 1,
// swap index accepted iff w < floor(2^64 / (i+1)) * (i+1).
std::vector<int> permutation(const std::string& seed, const std::string& item,
                             const std::string& blank, int n);

// Closed-form ANOVA estimators for the balanced two-way crossed random
// model without interaction: scores[p][i][r], all cells filled with the
// same replicate count.
struct HendersonEstimates {
  double sigma2_provider = 0.0;
  double sigma2_item = 0.0;
  double sigma2_residual = 0.0;
};

HendersonEstimates henderson_balanced(
    const std::vector<std::vector<std::vector<double>>>& scores);

}  // namespace oracle
