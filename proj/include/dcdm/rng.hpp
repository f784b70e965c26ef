#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace dcdm {

// Deterministic random source. All draws are derived from mt19937_64 with
// explicit bit manipulation instead of std:: distributions, whose output is
// implementation-defined; this keeps seeded runs reproducible across
// standard libraries. State serializes to text for exact training resume.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; never returns zero (safe to pass through log()).
  double uniform_pos() { return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller. Stateless between calls (the second
  // variate is discarded) so serialization only covers the engine.
  double normal();

  // Standard Gumbel: -log(-log(u)).
  double gumbel();

  std::string serialize() const;
  void deserialize(const std::string& text);

 private:
  std::mt19937_64 eng_;
};

}  // namespace dcdm
