#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rlqg/toymodel.hpp"

namespace rlqg::test {

inline std::filesystem::path source_dir() { return RLQG_SOURCE_DIR; }

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("rlqg-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Reserved symbols plus `words` single-letter tokens.
inline Vocab letter_vocab(int words) {
  std::vector<std::string> t = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (int i = 0; i < words; ++i) t.push_back(std::string(1, static_cast<char>('a' + i)));
  return Vocab(t);
}

// Random policy; `scale` stretches the weights so distributions are far from uniform.
inline Policy tiny_policy(int words, int embed, int hidden, std::uint64_t seed, double scale = 1.0) {
  Policy p = Policy::create(letter_vocab(words), embed, hidden, seed);
  p.params.scale(scale);
  return p;
}

// Every sequence the decoder can emit within `max_length` tokens: EOS-terminated
// ones and truncated ones without EOS.
inline void enumerate_sequences(int vocab, int max_length,
                                const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> seq;
  std::function<void()> rec = [&] {
    for (int v = 0; v < vocab; ++v) {
      if (v == kPad || v == kBos) continue;
      seq.push_back(v);
      if (v == kEos || static_cast<int>(seq.size()) == max_length) fn(seq);
      else rec();
      seq.pop_back();
    }
  };
  rec();
}

}  // namespace rlqg::test
