#include "tutorbench/util.hpp"

#include <openssl/evp.h>

#include <cassert>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace tutorbench {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: EVP_Digest failed");
  }
  static const char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool is_blank(std::string_view s) { return trim(s).empty(); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_fixed(double value, int decimals) {
  assert(decimals >= 0 && decimals <= 9);
  double scale = std::pow(10.0, decimals);
  long long scaled = std::llround(value * scale);  // llround is half-away-from-zero
  bool negative = scaled < 0;
  unsigned long long mag = negative ? -static_cast<unsigned long long>(scaled)
                                    : static_cast<unsigned long long>(scaled);
  unsigned long long ipart = mag;
  unsigned long long fpart = 0;
  if (decimals > 0) {
    unsigned long long div = 1;
    for (int i = 0; i < decimals; ++i) div *= 10;
    ipart = mag / div;
    fpart = mag % div;
  }
  std::string out;
  if (negative && mag != 0) out.push_back('-');
  out += std::to_string(ipart);
  if (decimals > 0) {
    std::string frac = std::to_string(fpart);
    out.push_back('.');
    out.append(static_cast<size_t>(decimals) - frac.size(), '0');
    out += frac;
  }
  return out;
}

}  // namespace tutorbench
