#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace skipmid {

// Counter-based generator: every output is a hash of (seed, stream, counter),
// so draws are reproducible and independent of evaluation order across
// streams. Named streams keep their own counters; stateless draws take an
// explicit counter (used by batch sampling, which is keyed on step index).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Stream key derived from the seed and the stream name.
  std::uint64_t stream_key(std::string_view stream) const;

  // Stateless draw: the value at `counter` within the keyed stream.
  static std::uint64_t at(std::uint64_t key, std::uint64_t counter);

  static double uniform_at(std::uint64_t key, std::uint64_t counter);  // [0,1)

  // Unbiased-enough integer in [0, n) (n up to 2^32 here, bias < 2^-32).
  static std::uint64_t below_at(std::uint64_t key, std::uint64_t counter, std::uint64_t n);

  // Stateful named-stream draws; each consumes that stream's counter.
  std::uint64_t next(std::string_view stream);
  double uniform(std::string_view stream);
  // Standard normal via Box-Muller; consumes two counters per call.
  double normal(std::string_view stream);

  // Counters are part of the training state so resumed runs replay exactly.
  const std::map<std::string, std::uint64_t>& counters() const { return counters_; }
  void set_counter(const std::string& stream, std::uint64_t value) { counters_[stream] = value; }

 private:
  std::uint64_t seed_ = 0;
  std::map<std::string, std::uint64_t> counters_;
};

}  // namespace skipmid
