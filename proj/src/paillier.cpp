#include "pps/paillier.hpp"

#include <json.hpp>

#include <stdexcept>

namespace pps {

namespace {

mpz_class powm(const mpz_class& base, const mpz_class& exp, const mpz_class& mod) {
  mpz_class r;
  mpz_powm(r.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  return r;
}

mpz_class invmod(const mpz_class& a, const mpz_class& mod) {
  mpz_class r;
  if (mpz_invert(r.get_mpz_t(), a.get_mpz_t(), mod.get_mpz_t()) == 0) {
    throw std::invalid_argument("invmod: value not invertible");
  }
  return r;
}

// Uniform prime with the top two bits set, so the product of two such primes
// lands on exactly 2*half_bits bits.
mpz_class draw_prime(unsigned half_bits, Rng& rng) {
  for (;;) {
    mpz_class c = rng.bits(half_bits);
    mpz_setbit(c.get_mpz_t(), half_bits - 1);
    mpz_setbit(c.get_mpz_t(), half_bits - 2);
    mpz_setbit(c.get_mpz_t(), 0);
    if (mpz_probab_prime_p(c.get_mpz_t(), 40) != 0) return c;
  }
}

void check_ciphertext(const PublicKey& pk, const Ciphertext& c) {
  if (c.value <= 0 || c.value >= pk.n2) {
    throw std::invalid_argument("ciphertext out of range");
  }
  mpz_class g;
  mpz_gcd(g.get_mpz_t(), c.value.get_mpz_t(), pk.n.get_mpz_t());
  if (g != 1) throw std::invalid_argument("ciphertext shares a factor with the modulus");
}

PublicKey make_public(const mpz_class& n, unsigned bits) {
  PublicKey pk;
  pk.n = n;
  pk.n2 = n * n;
  pk.g = n + 1;
  pk.bits = bits;
  return pk;
}

SecretKey make_secret(const mpz_class& p, const mpz_class& q, const mpz_class& n) {
  SecretKey sk;
  sk.p = p;
  sk.q = q;
  sk.p2 = p * p;
  sk.q2 = q * q;
  // With g = n+1, g^(p-1) mod p^2 collapses to 1 + (p-1)*n mod p^2.
  mpz_class gp = (1 + (p - 1) * n) % sk.p2;
  mpz_class gq = (1 + (q - 1) * n) % sk.q2;
  sk.hp = invmod(((gp - 1) / p) % p, p);
  sk.hq = invmod(((gq - 1) / q) % q, q);
  sk.q_inv_p = invmod(q % p, p);
  return sk;
}

}  // namespace

KeyPair keygen(unsigned modulus_bits, Rng& rng) {
  if (modulus_bits < 256 || modulus_bits % 16 != 0) {
    throw std::invalid_argument("keygen: modulus_bits must be >= 256 and divisible by 16");
  }
  unsigned half = modulus_bits / 2;
  mpz_class p = draw_prime(half, rng);
  mpz_class q = draw_prime(half, rng);
  while (q == p) q = draw_prime(half, rng);

  mpz_class n = p * q;
  KeyPair keys;
  keys.pk = make_public(n, modulus_bits);
  keys.sk = make_secret(p, q, n);
  keys.modulus_bits = modulus_bits;
  return keys;
}

Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, Rng& rng) {
  if (sgn(m) < 0 || m >= pk.n) throw std::invalid_argument("encrypt: plaintext out of range");
  mpz_class r = rng.below(pk.n);
  mpz_class g;
  mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
  while (r == 0 || g != 1) {
    r = rng.below(pk.n);
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
  }
  // (n+1)^m reduces to 1 + m*n mod n^2, leaving one real exponentiation.
  mpz_class gm = (1 + m * pk.n) % pk.n2;
  return Ciphertext{(gm * powm(r, pk.n, pk.n2)) % pk.n2};
}

mpz_class decrypt(const KeyPair& keys, const Ciphertext& c) {
  if (!keys.sk) throw std::logic_error("decrypt: no secret key");
  check_ciphertext(keys.pk, c);
  const SecretKey& sk = *keys.sk;

  mpz_class cp = powm(c.value % sk.p2, sk.p - 1, sk.p2);
  mpz_class mp = (((cp - 1) / sk.p) * sk.hp) % sk.p;
  mpz_class cq = powm(c.value % sk.q2, sk.q - 1, sk.q2);
  mpz_class mq = (((cq - 1) / sk.q) * sk.hq) % sk.q;

  mpz_class t = ((mp - mq) * sk.q_inv_p) % sk.p;
  if (sgn(t) < 0) t += sk.p;
  return mq + sk.q * t;
}

mpz_class decrypt_signed(const KeyPair& keys, const Ciphertext& c) {
  mpz_class m = decrypt(keys, c);
  if (m * 2 > keys.pk.n) m -= keys.pk.n;
  return m;
}

Ciphertext hom_add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  return Ciphertext{(a.value * b.value) % pk.n2};
}

Ciphertext hom_scale(const PublicKey& pk, const Ciphertext& c, const mpz_class& s) {
  if (sgn(s) < 0 || s >= pk.n) throw std::invalid_argument("hom_scale: scalar out of range");
  return Ciphertext{powm(c.value, s, pk.n2)};
}

Ciphertext hom_scale_signed(const PublicKey& pk, const Ciphertext& c, const mpz_class& s) {
  if (sgn(s) >= 0) return hom_scale(pk, c, s);
  return Ciphertext{powm(invmod(c.value, pk.n2), mpz_class(-s), pk.n2)};
}

Ciphertext hom_sub(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  return Ciphertext{(a.value * invmod(b.value, pk.n2)) % pk.n2};
}

Ciphertext mask_affine(const PublicKey& pk, const Ciphertext& c, const MaskPair& mask,
                       const mpz_class& w_max, Rng& rng) {
  if (mask.delta_mult < 1) throw std::invalid_argument("mask_affine: delta_mult must be >= 1");
  if (sgn(mask.delta_add) < 0) throw std::invalid_argument("mask_affine: delta_add must be >= 0");
  if (mask.delta_add + mask.delta_mult * w_max >= pk.n) {
    throw std::invalid_argument("mask_affine: mask overflows the plaintext space");
  }
  Ciphertext scaled = hom_scale(pk, c, mask.delta_mult);
  return hom_add(pk, scaled, encrypt(pk, mask.delta_add, rng));
}

MaskPair draw_mask(const PublicKey& pk, const MaskConfig& cfg, Rng& rng) {
  if (cfg.gamma_mult == 0) throw std::invalid_argument("draw_mask: gamma_mult must be positive");
  MaskPair mask;
  do {
    mask.delta_mult = rng.bits(cfg.gamma_mult);
  } while (mask.delta_mult == 0);
  mask.delta_add = cfg.gamma_add == 0 ? mpz_class(0) : rng.bits(cfg.gamma_add);

  mpz_class limit = cfg.signed_values ? mpz_class(pk.n / 2) : pk.n;
  if (mask.delta_add + mask.delta_mult * cfg.w_max >= limit) {
    throw std::invalid_argument("draw_mask: gamma parameters overflow the value range");
  }
  return mask;
}

std::string key_to_json(const KeyPair& keys, bool include_secret) {
  nlohmann::json j;
  j["modulus"] = to_hex(keys.pk.n);
  j["generator"] = to_hex(keys.pk.g);
  j["modulus_bits"] = keys.modulus_bits;
  if (include_secret) {
    if (!keys.sk) throw std::logic_error("key_to_json: no secret key to include");
    j["secret"] = {{"p", to_hex(keys.sk->p)}, {"q", to_hex(keys.sk->q)}};
  }
  return j.dump(2);
}

KeyPair key_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  mpz_class n = from_hex(j.at("modulus").get<std::string>());
  unsigned bits = j.at("modulus_bits").get<unsigned>();

  KeyPair keys;
  keys.pk = make_public(n, bits);
  keys.modulus_bits = bits;
  if (from_hex(j.at("generator").get<std::string>()) != keys.pk.g) {
    throw std::invalid_argument("key_from_json: unsupported generator");
  }
  if (j.contains("secret")) {
    mpz_class p = from_hex(j["secret"].at("p").get<std::string>());
    mpz_class q = from_hex(j["secret"].at("q").get<std::string>());
    if (p * q != n) throw std::invalid_argument("key_from_json: factors do not match modulus");
    keys.sk = make_secret(p, q, n);
  }
  return keys;
}

std::vector<uint8_t> ciphertext_to_bytes(const PublicKey& pk, const Ciphertext& c) {
  return to_fixed_bytes(c.value, pk.ciphertext_bytes());
}

Ciphertext ciphertext_from_bytes(const PublicKey& pk, const uint8_t* data, size_t len) {
  if (len != pk.ciphertext_bytes()) {
    throw std::invalid_argument("ciphertext_from_bytes: wrong length");
  }
  return Ciphertext{from_bytes(data, len)};
}

}  // namespace pps
