#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stylus {

// Error kinds named by the failure they report. Tests match on the code,
// messages are for humans.
enum class Errc {
  invalid_position,
  corrupt_column,
  bad_magic,
  bad_version,
  truncated,
  reserved_bits,
  unmapped_pitch,
  empty_corpus,
  empty_input,
  insufficient_data,
  invalid_token_id,
  context_overflow,
  input_contract,
  empty_sequence,
  config,
  io,
  parse,
  numeric,
  divergence,
  unsupported,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

// ---- hashing ----

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < len; i++) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(uint64_t v);

// ---- deterministic rng ----
//
// All randomness in the project flows through Rng seeded explicitly; nested
// components derive their own streams with derive_seed so results do not
// depend on call order elsewhere.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t index = 0) {
  uint64_t s = fnv1a64(tag) ^ (root * 0x9e3779b97f4a7c15ULL) ^ (index + 1);
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  uint64_t next_index(uint64_t n) { return n ? next_u64() % n : 0; }

  bool bernoulli(double p) { return next_double() < p; }

  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 1e-300);
    u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; i--) {
      size_t j = next_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// ---- small io helpers ----

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t len);
std::string read_file_text(const std::string& path);
void write_file_text(const std::string& path, const std::string& text);

// Fixed-format decimal rendering used in all text artifacts (17 significant
// digits round-trips a double, 9 round-trips a float).
std::string dtos(double v);
std::string ftos(float v);

}  // namespace stylus
