#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mgacl {

// Stream tags used to derive independent rng substreams from one master seed.
// Keeping streams separate means e.g. turning dropout on/off cannot shift the
// sampling sequence of anything else.
namespace stream {
constexpr uint64_t kInit = 0x01;
constexpr uint64_t kSample = 0x02;
constexpr uint64_t kDropout = 0x03;
constexpr uint64_t kShuffle = 0x04;
constexpr uint64_t kEval = 0x05;
constexpr uint64_t kNegatives = 0x06;
constexpr uint64_t kSplit = 0x07;
constexpr uint64_t kSynth = 0x08;
}  // namespace stream

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x6a09e667f3bcc908ULL;
  for (uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

inline std::mt19937_64 make_rng(std::initializer_list<uint64_t> parts) {
  return std::mt19937_64(mix_seed(parts));
}

}  // namespace mgacl
