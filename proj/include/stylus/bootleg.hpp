#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "stylus/common.hpp"

namespace stylus {

// A bootleg score is a sequence of 62-bit columns, one per simultaneous
// note-onset event. Position p of a column occupies bit p of a 64-bit word;
// bits 62 and 63 are reserved and always zero.

inline constexpr int kStaffPositions = 62;

class BootlegColumn {
 public:
  BootlegColumn() = default;

  static BootlegColumn from_positions(const std::vector<int>& positions) {
    BootlegColumn c;
    for (int p : positions) c.set(p);
    return c;
  }

  void set(int position) {
    if (position < 0 || position >= kStaffPositions)
      fail(Errc::invalid_position, "staff position out of range: " + std::to_string(position));
    bits_ |= (1ULL << position);
  }

  bool test(int position) const {
    return position >= 0 && position < kStaffPositions && (bits_ >> position) & 1ULL;
  }

  uint64_t bits() const { return bits_; }
  bool empty() const { return bits_ == 0; }
  int count() const { return __builtin_popcountll(bits_); }

  std::vector<int> positions() const {
    std::vector<int> out;
    for (int p = 0; p < kStaffPositions; p++)
      if ((bits_ >> p) & 1ULL) out.push_back(p);
    return out;
  }

  friend bool operator==(const BootlegColumn&, const BootlegColumn&) = default;

  // Only read/unpack paths may set raw bits; they validate the reserved bits.
  static BootlegColumn from_raw_bits(uint64_t bits) {
    if (bits >> kStaffPositions)
      fail(Errc::corrupt_column, "reserved bits 62-63 set in packed column");
    BootlegColumn c;
    c.bits_ = bits;
    return c;
  }

 private:
  uint64_t bits_ = 0;
};

struct BootlegScore {
  std::vector<BootlegColumn> columns;

  size_t size() const { return columns.size(); }
  bool operator==(const BootlegScore&) const = default;
};

// ---- packing ----

// Column -> 8 bytes, least-significant byte first.
std::array<uint8_t, 8> pack_column(const BootlegColumn& col);
BootlegColumn unpack_column(const std::array<uint8_t, 8>& word);

// ---- score file format ----
//
// magic "BSCR", version 0x01, reserved 0x00, column count as u32 LE,
// then count * 8 packed column bytes.

std::vector<uint8_t> write_score_bytes(const BootlegScore& score);
BootlegScore read_score_bytes(const std::vector<uint8_t>& bytes);
void write_score_file(const BootlegScore& score, const std::string& path);
BootlegScore read_score_file(const std::string& path);

// ---- symbolic encoding ----

struct Rational {
  int64_t num = 0;
  int64_t den = 1;

  Rational() = default;
  Rational(int64_t n, int64_t d = 1) : num(n), den(d) { normalize(); }

  void normalize() {
    if (den == 0) fail(Errc::parse, "rational with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num == b.num && a.den == b.den;
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
  }
};

enum class Hand : uint8_t { left = 0, right = 1 };

inline constexpr int kPianoLowest = 21;   // A0
inline constexpr int kPianoHighest = 108; // C8

struct NoteEvent {
  Rational onset;
  int pitch = 60;
  Hand hand = Hand::right;
};

// Maps (hand, midi pitch) to a staff position. Left-hand positions live in
// [0, 27], right-hand positions in [28, 61]. The default map is diatonic with
// sharps folded onto their natural letter and out-of-staff pitches clamped;
// it is a deterministic stand-in, not a reproduction of any OMR extractor.
class PitchMap {
 public:
  static PitchMap default_map();
  static PitchMap load_file(const std::string& path);
  void save_file(const std::string& path) const;

  // -1 when unmapped
  int position(Hand hand, int pitch) const {
    if (pitch < 0 || pitch > 127) return -1;
    return table_[static_cast<int>(hand)][pitch];
  }

  void assign(Hand hand, int pitch, int position);

 private:
  PitchMap() {
    table_[0].fill(-1);
    table_[1].fill(-1);
  }
  void validate_disjoint() const;

  std::array<std::array<int8_t, 128>, 2> table_;
};

// One column per distinct onset, in onset order; events at the same onset
// merge into one column. Duration and spelling information is discarded.
BootlegScore encode_symbolic(std::vector<NoteEvent> events, const PitchMap& map);

// Keeps records whose n_features >= min_features, order preserved.
template <typename Rec>
std::vector<Rec> filter_filler(const std::vector<Rec>& pages, int64_t min_features) {
  std::vector<Rec> out;
  out.reserve(pages.size());
  for (const auto& r : pages)
    if (r.n_features >= min_features) out.push_back(r);
  return out;
}

}  // namespace stylus
