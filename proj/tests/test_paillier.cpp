#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pps/paillier.hpp"

using namespace pps;

namespace {
KeyPair test_keys(uint64_t seed = 7, unsigned bits = 512) {
  Rng rng(seed);
  return keygen(bits, rng);
}
}  // namespace

TEST_CASE("keygen produces a modulus of the requested width") {
  KeyPair keys = test_keys();
  CHECK(mpz_sizeinbase(keys.pk.n.get_mpz_t(), 2) == 512);
  CHECK(keys.pk.g == keys.pk.n + 1);
  CHECK(keys.pk.n2 == keys.pk.n * keys.pk.n);
  CHECK(keys.has_secret());
  CHECK(keys.sk->p * keys.sk->q == keys.pk.n);

  Rng rng(11);
  KeyPair big = keygen(1024, rng);
  CHECK(mpz_sizeinbase(big.pk.n.get_mpz_t(), 2) == 1024);
}

TEST_CASE("keygen rejects unusable widths") {
  Rng rng(1);
  CHECK_THROWS_AS(keygen(128, rng), std::invalid_argument);
  CHECK_THROWS_AS(keygen(520, rng), std::invalid_argument);
}

TEST_CASE("encrypt/decrypt roundtrip including the edges of the space") {
  KeyPair keys = test_keys();
  Rng rng(21);
  for (const mpz_class& m : {mpz_class(0), mpz_class(1), mpz_class(123456789),
                             mpz_class(keys.pk.n - 1), mpz_class(keys.pk.n / 2)}) {
    Ciphertext c = encrypt(keys.pk, m, rng);
    CHECK(decrypt(keys, c) == m);
  }
  CHECK_THROWS_AS(encrypt(keys.pk, mpz_class(-1), rng), std::invalid_argument);
  CHECK_THROWS_AS(encrypt(keys.pk, keys.pk.n, rng), std::invalid_argument);
}

TEST_CASE("encryption is probabilistic") {
  KeyPair keys = test_keys();
  Rng rng(33);
  Ciphertext a = encrypt(keys.pk, 42, rng);
  Ciphertext b = encrypt(keys.pk, 42, rng);
  CHECK(a.value != b.value);
  CHECK(decrypt(keys, a) == decrypt(keys, b));
}

TEST_CASE("homomorphic addition, subtraction and scaling") {
  KeyPair keys = test_keys();
  Rng rng(5);
  Ciphertext ca = encrypt(keys.pk, 1000, rng);
  Ciphertext cb = encrypt(keys.pk, 337, rng);

  CHECK(decrypt(keys, hom_add(keys.pk, ca, cb)) == 1337);
  CHECK(decrypt(keys, hom_sub(keys.pk, ca, cb)) == 663);
  CHECK(decrypt(keys, hom_scale(keys.pk, cb, 3)) == 1011);
  CHECK(decrypt_signed(keys, hom_scale_signed(keys.pk, cb, -2)) == -674);
  CHECK_THROWS_AS(hom_scale(keys.pk, ca, mpz_class(-1)), std::invalid_argument);
}

TEST_CASE("signed decoding recovers negative differences") {
  KeyPair keys = test_keys();
  Rng rng(8);
  Ciphertext ca = encrypt(keys.pk, 10, rng);
  Ciphertext cb = encrypt(keys.pk, 250, rng);
  Ciphertext diff = hom_sub(keys.pk, ca, cb);
  CHECK(decrypt_signed(keys, diff) == -240);
  // The unsigned reading wraps to n - 240.
  CHECK(decrypt(keys, diff) == keys.pk.n - 240);
}

TEST_CASE("affine masking computes delta_mult*m + delta_add") {
  KeyPair keys = test_keys();
  Rng rng(13);
  Ciphertext c = encrypt(keys.pk, 5, rng);
  MaskPair mask{2, 3};
  Ciphertext masked = mask_affine(keys.pk, c, mask, 5, rng);
  CHECK(decrypt(keys, masked) == 13);
}

TEST_CASE("masking preserves order and equality of plaintexts") {
  KeyPair keys = test_keys();
  Rng rng(17);
  MaskConfig cfg;
  cfg.gamma_add = 256;
  cfg.w_max = 1 << 20;
  MaskPair mask = draw_mask(keys.pk, cfg, rng);

  long previous_raw = -1;
  mpz_class previous_masked = -1;
  for (long m : {0L, 3L, 3L, 7L, 500000L, (1L << 20)}) {
    Ciphertext c = encrypt(keys.pk, m, rng);
    mpz_class got = decrypt(keys, mask_affine(keys.pk, c, mask, cfg.w_max, rng));
    if (previous_raw >= 0) {
      if (m == previous_raw) CHECK(got == previous_masked);
      if (m > previous_raw) CHECK(got > previous_masked);
    }
    previous_raw = m;
    previous_masked = got;
  }
}

TEST_CASE("mask overflow guards reject oversized parameters") {
  KeyPair keys = test_keys();
  Rng rng(29);

  MaskConfig cfg;
  cfg.gamma_mult = 64;
  cfg.gamma_add = 256;
  cfg.w_max = keys.pk.n;  // delta_mult * w_max alone exceeds the space
  CHECK_THROWS_AS(draw_mask(keys.pk, cfg, rng), std::invalid_argument);

  // With delta_mult pinned to 1 and delta_add to 0, the guard reduces to
  // w_max < limit, which separates the signed and unsigned limits exactly.
  MaskConfig tight;
  tight.gamma_mult = 1;
  tight.gamma_add = 0;
  tight.w_max = keys.pk.n / 2;
  MaskPair ok = draw_mask(keys.pk, tight, rng);
  CHECK(ok.delta_mult == 1);
  tight.signed_values = true;
  CHECK_THROWS_AS(draw_mask(keys.pk, tight, rng), std::invalid_argument);

  Ciphertext c = encrypt(keys.pk, 1, rng);
  MaskPair huge{keys.pk.n - 1, keys.pk.n - 1};
  CHECK_THROWS_AS(mask_affine(keys.pk, c, huge, 100, rng), std::invalid_argument);
}

TEST_CASE("decrypt validates ciphertexts") {
  KeyPair keys = test_keys();
  CHECK_THROWS_AS(decrypt(keys, Ciphertext{0}), std::invalid_argument);
  CHECK_THROWS_AS(decrypt(keys, Ciphertext{keys.pk.n2}), std::invalid_argument);
  // A multiple of p shares a factor with n and must be rejected.
  CHECK_THROWS_AS(decrypt(keys, Ciphertext{keys.sk->p}), std::invalid_argument);

  KeyPair public_only = key_from_json(key_to_json(keys, false));
  Rng rng(3);
  Ciphertext c = encrypt(public_only.pk, 9, rng);
  CHECK_THROWS_AS(decrypt(public_only, c), std::logic_error);
  CHECK(decrypt(keys, c) == 9);
}

TEST_CASE("key serialization roundtrips") {
  KeyPair keys = test_keys(99);
  KeyPair full = key_from_json(key_to_json(keys, true));
  CHECK(full.pk == keys.pk);
  CHECK(full.has_secret());

  Rng rng(4);
  Ciphertext c = encrypt(full.pk, 777, rng);
  CHECK(decrypt(full, c) == 777);

  KeyPair pub = key_from_json(key_to_json(keys, false));
  CHECK(pub.pk == keys.pk);
  CHECK_FALSE(pub.has_secret());
  CHECK_THROWS_AS(key_to_json(pub, true), std::logic_error);
}

TEST_CASE("ciphertext wire form is fixed width and roundtrips") {
  KeyPair keys = test_keys();
  Rng rng(6);
  Ciphertext c = encrypt(keys.pk, 424242, rng);
  std::vector<uint8_t> bytes = ciphertext_to_bytes(keys.pk, c);
  CHECK(bytes.size() == 128);  // 2 * 512 bits

  Ciphertext back = ciphertext_from_bytes(keys.pk, bytes.data(), bytes.size());
  CHECK(back.value == c.value);
  CHECK(decrypt(keys, back) == 424242);
  CHECK_THROWS_AS(ciphertext_from_bytes(keys.pk, bytes.data(), bytes.size() - 1),
                  std::invalid_argument);
}

TEST_CASE("deterministic rng reproduces keys and ciphertexts") {
  KeyPair a = test_keys(1234);
  KeyPair b = test_keys(1234);
  CHECK(a.pk.n == b.pk.n);

  Rng r1(55), r2(55);
  Ciphertext c1 = encrypt(a.pk, 31337, r1);
  Ciphertext c2 = encrypt(b.pk, 31337, r2);
  CHECK(c1.value == c2.value);
}
