#include "skipmid/rng.hpp"

#include <cmath>

namespace skipmid {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t splitmix_finalize(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

std::uint64_t Rng::stream_key(std::string_view stream) const {
  return splitmix_finalize(seed_ ^ fnv1a(stream));
}

std::uint64_t Rng::at(std::uint64_t key, std::uint64_t counter) {
  return splitmix_finalize(key + counter * kGolden);
}

double Rng::uniform_at(std::uint64_t key, std::uint64_t counter) {
  return static_cast<double>(at(key, counter) >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below_at(std::uint64_t key, std::uint64_t counter, std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(at(key, counter)) * n) >> 64);
}

std::uint64_t Rng::next(std::string_view stream) {
  std::uint64_t& c = counters_[std::string(stream)];
  return at(stream_key(stream), c++);
}

double Rng::uniform(std::string_view stream) {
  return static_cast<double>(next(stream) >> 11) * 0x1.0p-53;
}

double Rng::normal(std::string_view stream) {
  // (0,1] for the log argument.
  double u1 = (static_cast<double>(next(stream) >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(next(stream) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace skipmid
