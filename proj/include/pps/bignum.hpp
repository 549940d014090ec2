#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <string>
#include <vector>

namespace pps {

// Deterministic big-integer randomness. Every call site that needs secrets,
// masks or permutations takes one of these explicitly.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(gmp_randinit_mt) {
    state_.seed(static_cast<unsigned long>(seed));
  }

  // Uniform in [0, 2^n).
  mpz_class bits(unsigned n) { return state_.get_z_bits(n); }

  // Uniform in [0, bound).
  mpz_class below(const mpz_class& bound) { return state_.get_z_range(bound); }

  uint64_t u64() {
    mpz_class z = bits(64);
    return static_cast<uint64_t>(mpz_get_ui(z.get_mpz_t()));
  }

 private:
  gmp_randclass state_;
};

inline std::string to_hex(const mpz_class& z) { return z.get_str(16); }

inline mpz_class from_hex(const std::string& s) { return mpz_class(s, 16); }

// Big-endian, left-padded to exactly len bytes. Throws if the value does not fit.
std::vector<uint8_t> to_fixed_bytes(const mpz_class& z, size_t len);

mpz_class from_bytes(const uint8_t* data, size_t len);

}  // namespace pps
