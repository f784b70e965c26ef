#include "dcdm/corpus.hpp"

#include <fstream>
#include <stdexcept>

namespace dcdm {

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read corpus: " + path);
  Corpus corpus;
  in.seekg(0, std::ios::end);
  const std::streamoff n = in.tellg();
  in.seekg(0, std::ios::beg);
  corpus.bytes.resize(static_cast<std::size_t>(n));
  if (n && !in.read(reinterpret_cast<char*>(corpus.bytes.data()), n))
    throw std::runtime_error("cannot read corpus: " + path);
  if (corpus.bytes.empty()) throw std::runtime_error("empty corpus: " + path);
  return corpus;
}

std::vector<int> sample_window(const Corpus& corpus, int length, Rng& rng) {
  if (length < 1) throw std::invalid_argument("sample_window: length must be positive");
  if (corpus.size() < length)
    throw std::invalid_argument("sample_window: corpus of " +
                                std::to_string(corpus.size()) +
                                " bytes is shorter than one sequence of " +
                                std::to_string(length));
  const long long start =
      static_cast<long long>(rng.below(static_cast<std::uint64_t>(corpus.size() - length + 1)));
  std::vector<int> window(length);
  for (int i = 0; i < length; ++i) window[i] = corpus.bytes[start + i];
  return window;
}

namespace {

const char* kSubjects[] = {"the river", "a cold wind", "the old clock", "her garden",
                           "the gray cat", "an open door", "the last train",
                           "his notebook", "the tide", "a paper lantern",
                           "the north road", "the baker", "a quiet engine",
                           "the harbor", "the first frost"};
const char* kVerbs[] = {"carries", "remembers", "follows", "becomes", "crosses",
                        "holds", "gathers", "refuses", "borrows", "repeats",
                        "measures", "wakes", "shelters", "divides"};
const char* kObjects[] = {"the morning light", "a forgotten name", "its own shadow",
                          "the winter grain", "every small sound", "the far shore",
                          "a thread of smoke", "the missing hour", "three green stones",
                          "the narrow stair", "an easy silence", "the map's edge"};
const char* kTails[] = {"before dawn", "without warning", "as it always has",
                        "year after year", "under the bridge", "in plain sight",
                        "until the rain stops", "for no reason at all",
                        "past the mill", "between the rows"};

}  // namespace

std::string synthetic_text(long long min_bytes, std::uint64_t seed) {
  if (min_bytes < 1) throw std::invalid_argument("synthetic_text: min_bytes must be positive");
  Rng rng(seed);
  std::string text;
  text.reserve(static_cast<std::size_t>(min_bytes) + 128);
  int sentence_in_paragraph = 0;
  while (static_cast<long long>(text.size()) < min_bytes) {
    const char* subject = kSubjects[rng.below(std::size(kSubjects))];
    const char* verb = kVerbs[rng.below(std::size(kVerbs))];
    const char* object = kObjects[rng.below(std::size(kObjects))];
    std::string sentence;
    sentence += subject;
    sentence += ' ';
    sentence += verb;
    sentence += ' ';
    sentence += object;
    if (rng.uniform() < 0.4) {
      sentence += ' ';
      sentence += kTails[rng.below(std::size(kTails))];
    }
    if (rng.uniform() < 0.12) {
      sentence += ", entry ";
      sentence += std::to_string(rng.below(1000));
    }
    sentence += rng.uniform() < 0.1 ? "?" : ".";
    sentence[0] = static_cast<char>(sentence[0] - 'a' + 'A');
    text += sentence;
    if (++sentence_in_paragraph >= 5 && rng.uniform() < 0.5) {
      text += "\n\n";
      sentence_in_paragraph = 0;
    } else {
      text += ' ';
    }
  }
  return text;
}

void write_synthetic_corpus(const std::string& path, long long min_bytes,
                            std::uint64_t seed) {
  const std::string text = synthetic_text(min_bytes, seed);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write corpus: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out.flush()) throw std::runtime_error("write failed: " + path);
}

}  // namespace dcdm
