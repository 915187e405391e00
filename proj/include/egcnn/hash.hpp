#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace egcnn {

// 64-bit FNV-1a, used for artifact compatibility digests (not security).
class Fnv1a {
 public:
  void update(std::string_view bytes);
  void update(std::span<const double> values);
  void update(std::uint64_t v);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 1469598103934665603ULL;
};

std::string fnv1a_hex(std::string_view bytes);

}  // namespace egcnn
