#pragma once

#include <cstdint>
#include <cstring>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

namespace uncplab {

/// 64-bit FNV-1a, stable across platforms; used for config, geometry and
/// problem content hashes.
class ContentHash {
 public:
  ContentHash& bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= p[i];
      state_ *= 1099511628211ull;
    }
    return *this;
  }
  ContentHash& add(std::string_view text) { return bytes(text.data(), text.size()); }
  ContentHash& add(double value) { return bytes(&value, sizeof value); }
  ContentHash& add(std::int64_t value) { return bytes(&value, sizeof value); }
  ContentHash& add(std::span<const double> values) {
    return bytes(values.data(), values.size_bytes());
  }

  std::uint64_t value() const { return state_; }
  std::string hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << state_;
    return os.str();
  }

 private:
  std::uint64_t state_ = 14695981039346656037ull;
};

}  // namespace uncplab
