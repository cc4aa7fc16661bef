#pragma once

// Counter-based random streams keyed by (seed, index, purpose). Any stream
// can be reconstructed independently, so results never depend on which
// thread consumed which stream.

#include <cmath>
#include <cstdint>
#include <string_view>

#include <boost/math/special_functions/erf.hpp>

namespace drdid {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, so purpose tags can be readable strings.
constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Purpose tags used across the library.
namespace stream {
inline constexpr std::string_view data = "data";
inline constexpr std::string_view bootstrap = "bootstrap";
inline constexpr std::string_view bound = "bound";
}  // namespace stream

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t index, std::string_view purpose) noexcept
      : key_(detail::splitmix64(detail::splitmix64(seed ^ detail::hash_tag(purpose)) + index)) {}

  std::uint64_t next_u64() noexcept { return detail::splitmix64(key_ + 0x632be59bd9b4e019ULL * ++counter_); }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal by inverse CDF.
  double normal() noexcept { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * uniform()); }

  /// Standard exponential.
  double exponential() noexcept { return -std::log(uniform()); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace drdid
