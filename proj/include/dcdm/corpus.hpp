#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcdm/rng.hpp"

namespace dcdm {

// Byte-level corpus: raw UTF-8 text, one token per byte (ids 0..255).
struct Corpus {
  std::vector<std::uint8_t> bytes;
  long long size() const { return static_cast<long long>(bytes.size()); }
};

Corpus load_corpus(const std::string& path);

// Random contiguous window of `length` tokens; no document packing.
std::vector<int> sample_window(const Corpus& corpus, int length, Rng& rng);

// Deterministic synthetic text (templated sentences over small word lists)
// of at least min_bytes; returns the text so callers can also write it out.
std::string synthetic_text(long long min_bytes, std::uint64_t seed);
void write_synthetic_corpus(const std::string& path, long long min_bytes,
                            std::uint64_t seed);

}  // namespace dcdm
