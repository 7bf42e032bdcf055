#include "kalbucy/random.hpp"

#include <cmath>
#include <numbers>

namespace kalbucy {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

std::uint64_t splitmix_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return splitmix_finalize(h);
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  const std::uint64_t rotated = (seed << 23) | (seed >> 41);
  return splitmix_finalize(rotated ^ splitmix_finalize(value + 0x9E3779B97F4A7C15ull));
}

RandomStream::RandomStream(std::uint64_t key) : key_(key) {}

RandomStream RandomStream::derive(std::uint64_t label) const {
  return RandomStream(hash_combine(key_, label));
}

RandomStream RandomStream::derive(std::string_view label) const {
  return derive(hash_label(label));
}

RandomStream RandomStream::derive(std::string_view label, std::int64_t index) const {
  return derive(label).derive(static_cast<std::uint64_t>(index));
}

void RandomStream::refill() {
  const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(block_index_),
                                            static_cast<std::uint32_t>(block_index_ >> 32), 0u,
                                            0u};
  const std::array<std::uint32_t, 2> k = {static_cast<std::uint32_t>(key_),
                                          static_cast<std::uint32_t>(key_ >> 32)};
  block_ = philox4x32(ctr, k);
  ++block_index_;
  used_ = 0;
}

std::uint64_t RandomStream::next_u64() {
  if (used_ > 2) refill();
  const std::uint64_t v =
      (static_cast<std::uint64_t>(block_[used_]) << 32) | block_[used_ + 1];
  used_ += 2;
  return v;
}

double RandomStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

int RandomStream::sign() { return (next_u64() >> 63) != 0u ? 1 : -1; }

void RandomStream::fill_normal(MatrixXd& m, double scale) {
  double* data = m.data();
  const Eigen::Index n = m.size();
  for (Eigen::Index i = 0; i < n; ++i) data[i] = scale * normal();
}

std::string_view to_string(StreamPurpose purpose) {
  switch (purpose) {
    case StreamPurpose::signal: return "signal";
    case StreamPurpose::obsnoise: return "obsnoise";
    case StreamPurpose::ensembleW: return "ensembleW";
    case StreamPurpose::ensembleV: return "ensembleV";
    case StreamPurpose::spsa: return "spsa";
  }
  return "unknown";
}

RandomStream derive_stream(const RngStreamKey& key) {
  std::uint64_t h = hash_combine(key.master_seed, hash_label(key.experiment));
  h = hash_combine(h, static_cast<std::uint64_t>(key.repeat));
  h = hash_combine(h, static_cast<std::uint64_t>(key.level));
  h = hash_combine(h, static_cast<std::uint64_t>(key.block));
  h = hash_combine(h, hash_label(to_string(key.purpose)));
  return RandomStream(h);
}

}  // namespace kalbucy
