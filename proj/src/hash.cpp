#include "egcnn/hash.hpp"

#include <cstdio>
#include <cstring>

namespace egcnn {

namespace {
constexpr std::uint64_t kPrime = 1099511628211ULL;
}

void Fnv1a::update(std::string_view bytes) {
  for (unsigned char c : bytes) state_ = (state_ ^ c) * kPrime;
}

void Fnv1a::update(std::span<const double> values) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    update(bits);
  }
}

void Fnv1a::update(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    state_ = (state_ ^ (v & 0xffU)) * kPrime;
    v >>= 8;
  }
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string fnv1a_hex(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.hex();
}

}  // namespace egcnn
