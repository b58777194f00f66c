#include "stylus/bootleg.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <sstream>

namespace stylus {

std::array<uint8_t, 8> pack_column(const BootlegColumn& col) {
  std::array<uint8_t, 8> out;
  uint64_t v = col.bits();
  for (int i = 0; i < 8; i++) out[i] = static_cast<uint8_t>(v >> (8 * i));
  return out;
}

BootlegColumn unpack_column(const std::array<uint8_t, 8>& word) {
  uint64_t v = 0;
  for (int i = 0; i < 8; i++) v |= static_cast<uint64_t>(word[i]) << (8 * i);
  return BootlegColumn::from_raw_bits(v);
}

static constexpr char kMagic[4] = {'B', 'S', 'C', 'R'};
static constexpr uint8_t kFormatVersion = 0x01;

std::vector<uint8_t> write_score_bytes(const BootlegScore& score) {
  std::vector<uint8_t> out;
  out.reserve(10 + 8 * score.columns.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kFormatVersion);
  out.push_back(0x00);
  auto n = static_cast<uint32_t>(score.columns.size());
  for (int i = 0; i < 4; i++) out.push_back(static_cast<uint8_t>(n >> (8 * i)));
  for (const auto& col : score.columns) {
    auto word = pack_column(col);
    out.insert(out.end(), word.begin(), word.end());
  }
  return out;
}

BootlegScore read_score_bytes(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 10) fail(Errc::truncated, "score file shorter than header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail(Errc::bad_magic, "bad magic, not a bootleg score file");
  if (bytes[4] != kFormatVersion)
    fail(Errc::bad_version, "unsupported score format version " + std::to_string(bytes[4]));
  uint32_t n = 0;
  for (int i = 0; i < 4; i++) n |= static_cast<uint32_t>(bytes[6 + i]) << (8 * i);
  if (bytes.size() != 10 + 8ull * n)
    fail(Errc::truncated, "score payload size mismatch: header says " + std::to_string(n) +
                              " columns, file has " + std::to_string((bytes.size() - 10) / 8));
  BootlegScore score;
  score.columns.reserve(n);
  for (uint32_t c = 0; c < n; c++) {
    std::array<uint8_t, 8> word;
    std::memcpy(word.data(), bytes.data() + 10 + 8ull * c, 8);
    score.columns.push_back(unpack_column(word));
  }
  return score;
}

void write_score_file(const BootlegScore& score, const std::string& path) {
  auto bytes = write_score_bytes(score);
  write_file_bytes(path, bytes.data(), bytes.size());
}

BootlegScore read_score_file(const std::string& path) {
  return read_score_bytes(read_file_bytes(path));
}

// ---- pitch map ----

// Diatonic index: 7 letter steps per octave, sharps folded down to their
// natural letter (C#->C, D#->D, F#->F, G#->G, A#->A).
static int diatonic_index(int pitch) {
  static constexpr int letter[12] = {0, 0, 1, 1, 2, 3, 3, 4, 4, 5, 5, 6};
  return (pitch / 12) * 7 + letter[pitch % 12];
}

PitchMap PitchMap::default_map() {
  PitchMap m;
  const int left_anchor = diatonic_index(kPianoLowest);   // A0
  const int right_anchor = diatonic_index(52);            // E3
  for (int pitch = kPianoLowest; pitch <= kPianoHighest; pitch++) {
    int dl = diatonic_index(pitch) - left_anchor;
    int dr = diatonic_index(pitch) - right_anchor;
    m.table_[static_cast<int>(Hand::left)][pitch] =
        static_cast<int8_t>(std::clamp(dl, 0, 27));
    m.table_[static_cast<int>(Hand::right)][pitch] =
        static_cast<int8_t>(28 + std::clamp(dr, 0, 33));
  }
  return m;
}

void PitchMap::assign(Hand hand, int pitch, int position) {
  if (pitch < 0 || pitch > 127)
    fail(Errc::parse, "midi pitch out of range: " + std::to_string(pitch));
  if (position < 0 || position >= kStaffPositions)
    fail(Errc::invalid_position, "staff position out of range: " + std::to_string(position));
  table_[static_cast<int>(hand)][pitch] = static_cast<int8_t>(position);
}

void PitchMap::validate_disjoint() const {
  int left_max = -1, right_min = kStaffPositions;
  for (int p = 0; p < 128; p++) {
    if (table_[0][p] >= 0) left_max = std::max(left_max, static_cast<int>(table_[0][p]));
    if (table_[1][p] >= 0) right_min = std::min(right_min, static_cast<int>(table_[1][p]));
  }
  if (left_max >= 0 && right_min < kStaffPositions && left_max >= right_min)
    fail(Errc::parse, "pitch map hands overlap: left max position " + std::to_string(left_max) +
                          " >= right min position " + std::to_string(right_min));
}

PitchMap PitchMap::load_file(const std::string& path) {
  PitchMap m;
  std::istringstream in(read_file_text(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string hand_s;
    int pitch = -1, pos = -1;
    if (!(ls >> hand_s >> pitch >> pos))
      fail(Errc::parse, path + ":" + std::to_string(line_no) + ": bad pitch map line");
    Hand hand;
    if (hand_s == "left")
      hand = Hand::left;
    else if (hand_s == "right")
      hand = Hand::right;
    else
      fail(Errc::parse, path + ":" + std::to_string(line_no) + ": unknown hand '" + hand_s + "'");
    m.assign(hand, pitch, pos);
  }
  m.validate_disjoint();
  return m;
}

void PitchMap::save_file(const std::string& path) const {
  std::ostringstream out;
  for (int h = 0; h < 2; h++)
    for (int p = 0; p < 128; p++)
      if (table_[h][p] >= 0)
        out << (h == 0 ? "left " : "right ") << p << ' ' << static_cast<int>(table_[h][p])
            << '\n';
  write_file_text(path, out.str());
}

BootlegScore encode_symbolic(std::vector<NoteEvent> events, const PitchMap& map) {
  std::stable_sort(events.begin(), events.end(),
                   [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
  BootlegScore score;
  size_t i = 0;
  while (i < events.size()) {
    size_t j = i;
    BootlegColumn col;
    while (j < events.size() && events[j].onset == events[i].onset) {
      const NoteEvent& e = events[j];
      int pos = map.position(e.hand, e.pitch);
      if (pos < 0)
        fail(Errc::unmapped_pitch, "pitch " + std::to_string(e.pitch) + " (" +
                                       (e.hand == Hand::left ? "left" : "right") +
                                       " hand) not in pitch map");
      col.set(pos);
      j++;
    }
    if (!col.empty()) score.columns.push_back(col);
    i = j;
  }
  return score;
}

}  // namespace stylus
