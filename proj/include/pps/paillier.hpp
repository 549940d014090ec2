#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pps/bignum.hpp"

namespace pps {

// Additively homomorphic encryption with the generator fixed to n+1, which
// keeps g^m affordable (1 + m*n mod n^2) without changing the scheme.
struct PublicKey {
  mpz_class n;       // modulus
  mpz_class n2;      // n^2, cached
  mpz_class g;       // n + 1
  unsigned bits = 0; // modulus size

  size_t ciphertext_bytes() const { return (2 * bits) / 8; }
  bool operator==(const PublicKey& o) const { return n == o.n; }
};

struct SecretKey {
  mpz_class p, q;
  // cached decryption helpers (CRT form)
  mpz_class p2, q2;     // p^2, q^2
  mpz_class hp, hq;     // (L_p(g^{p-1} mod p^2))^-1 mod p, and the q analogue
  mpz_class q_inv_p;    // q^-1 mod p
};

struct KeyPair {
  PublicKey pk;
  std::optional<SecretKey> sk;
  unsigned modulus_bits = 0;

  bool has_secret() const { return sk.has_value(); }
};

struct Ciphertext {
  mpz_class value;
};

// Order-preserving affine disguise for plaintexts the decrypting party may
// compare but must not learn: reveal delta_mult*x + delta_add instead of x.
struct MaskPair {
  mpz_class delta_mult;  // >= 1
  mpz_class delta_add;   // >= 0
};

// Generates a fresh key. modulus_bits must be >= 256 and a multiple of 16 so
// ciphertexts serialize to whole bytes.
KeyPair keygen(unsigned modulus_bits, Rng& rng);

// m must lie in [0, n). Encryption is probabilistic.
Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, Rng& rng);

// Requires the secret key. Throws on malformed ciphertexts.
mpz_class decrypt(const KeyPair& keys, const Ciphertext& c);

// Decodes residues above n/2 as negative: returns m - n for m > n/2.
mpz_class decrypt_signed(const KeyPair& keys, const Ciphertext& c);

// E(a) (+) E(b) -> E(a+b)
Ciphertext hom_add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b);

// E(a) (*) s -> E(a*s), for plaintext scalar 0 <= s < n.
Ciphertext hom_scale(const PublicKey& pk, const Ciphertext& c, const mpz_class& s);

// Signed scalar variant; negative s multiplies by the ciphertext inverse.
Ciphertext hom_scale_signed(const PublicKey& pk, const Ciphertext& c, const mpz_class& s);

// E(a) (-) E(b) -> E(a-b)
Ciphertext hom_sub(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b);

// E(x) -> E(delta_mult*x + delta_add). w_max bounds |x| for the overflow
// guard: delta_add + delta_mult*w_max must stay below the modulus.
Ciphertext mask_affine(const PublicKey& pk, const Ciphertext& c, const MaskPair& mask,
                       const mpz_class& w_max, Rng& rng);

struct MaskConfig {
  unsigned gamma_mult = 64;   // bit length of delta_mult
  unsigned gamma_add = 768;   // bit length of delta_add
  mpz_class w_max = 0;        // largest |plaintext| the mask must cover
  bool signed_values = false; // tighten the guard to n/2 for signed decoding
};

// Draws a mask pair and validates the overflow guard up front.
MaskPair draw_mask(const PublicKey& pk, const MaskConfig& cfg, Rng& rng);

// Key serialization: {"modulus": hex, "generator": hex, "modulus_bits": int,
// "secret": {"p": hex, "q": hex}} with "secret" omitted for public-only keys.
std::string key_to_json(const KeyPair& keys, bool include_secret);
KeyPair key_from_json(const std::string& text);

// Fixed-width wire form, big-endian, 2*modulus_bits/8 bytes.
std::vector<uint8_t> ciphertext_to_bytes(const PublicKey& pk, const Ciphertext& c);
Ciphertext ciphertext_from_bytes(const PublicKey& pk, const uint8_t* data, size_t len);

}  // namespace pps
