#include "pps/bignum.hpp"

#include <stdexcept>

namespace pps {

std::vector<uint8_t> to_fixed_bytes(const mpz_class& z, size_t len) {
  if (sgn(z) < 0) throw std::invalid_argument("to_fixed_bytes: negative value");
  size_t need = (mpz_sizeinbase(z.get_mpz_t(), 2) + 7) / 8;
  if (z == 0) need = 0;
  if (need > len) throw std::invalid_argument("to_fixed_bytes: value too wide");

  std::vector<uint8_t> out(len, 0);
  size_t written = 0;
  mpz_export(out.data() + (len - need), &written, 1, 1, 1, 0, z.get_mpz_t());
  return out;
}

mpz_class from_bytes(const uint8_t* data, size_t len) {
  mpz_class z;
  mpz_import(z.get_mpz_t(), len, 1, 1, 1, 0, data);
  return z;
}

}  // namespace pps
