#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "kalbucy/linalg.hpp"

namespace kalbucy {

// Counter-based random stream (Philox-4x32-10) keyed by a 64-bit value.
//
// Streams are never seeded from global state. Independent streams are
// obtained with derive(), which hashes the parent key with a label; the
// parent itself is left untouched, so the same (key, label) pair always
// yields the same child regardless of how many draws either has made.
class RandomStream {
 public:
  RandomStream() : RandomStream(0) {}
  explicit RandomStream(std::uint64_t key);

  [[nodiscard]] std::uint64_t key() const { return key_; }

  [[nodiscard]] RandomStream derive(std::uint64_t label) const;
  [[nodiscard]] RandomStream derive(std::string_view label) const;
  [[nodiscard]] RandomStream derive(std::string_view label, std::int64_t index) const;

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Standard normal (Box-Muller, pairs cached).
  double normal();
  // +1 or -1 with probability 1/2 each.
  int sign();

  // Fills `m` column by column with scale * N(0, 1) draws.
  void fill_normal(MatrixXd& m, double scale = 1.0);

 private:
  void refill();

  std::uint64_t key_;
  std::uint64_t block_index_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Raw Philox-4x32-10 block function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t hash_label(std::string_view label);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);

enum class StreamPurpose { signal, obsnoise, ensembleW, ensembleV, spsa };

std::string_view to_string(StreamPurpose purpose);

// Addresses one stream in an experiment: every distinct tuple maps to an
// independent stream, and the mapping is a pure function of the tuple.
struct RngStreamKey {
  std::uint64_t master_seed = 0;
  std::string experiment;
  std::int64_t repeat = 0;
  std::int64_t level = 0;
  std::int64_t block = 0;
  StreamPurpose purpose = StreamPurpose::signal;
};

RandomStream derive_stream(const RngStreamKey& key);

}  // namespace kalbucy
