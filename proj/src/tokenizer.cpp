#include "stylus/tokenizer.hpp"

#include <algorithm>
#include <sstream>

namespace stylus {

const std::vector<std::string>& special_names() {
  static const std::vector<std::string> names = {"<pad>", "<s>", "</s>", "<unk>", "<mask>"};
  return names;
}

Vocabulary::Vocabulary() { tokens_ = special_names(); }

int Vocabulary::add_token(const std::string& bytes) {
  int id = size();
  tokens_.push_back(bytes);
  index_.emplace(bytes, id);  // first id wins on duplicates
  return id;
}

uint64_t Vocabulary::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    uint32_t n = static_cast<uint32_t>(t.size());
    h = fnv1a64(&n, sizeof(n), h);
    h = fnv1a64(t.data(), t.size(), h);
  }
  return h;
}

static const char* kHexDigits = "0123456789abcdef";

std::string to_hex(const std::string& bytes) {
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(kHexDigits[c >> 4]);
    out.push_back(kHexDigits[c & 0xf]);
  }
  return out;
}

static int hex_val(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

std::string from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) fail(Errc::parse, "odd-length hex token: " + hex);
  std::string out;
  out.reserve(hex.size() / 2);
  for (size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_val(hex[i]), lo = hex_val(hex[i + 1]);
    if (hi < 0 || lo < 0) fail(Errc::parse, "bad hex token: " + hex);
    out.push_back(static_cast<char>((hi << 4) | lo));
  }
  return out;
}

void Vocabulary::save_file(const std::string& path, const std::string& header_comment) const {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  for (int id = 0; id < size(); id++) {
    out << id << '\t';
    if (id < kNumSpecials)
      out << tokens_[id];
    else
      out << to_hex(tokens_[id]);
    out << '\n';
  }
  write_file_text(path, out.str());
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  Vocabulary v;
  std::istringstream in(read_file_text(path));
  std::string line;
  int line_no = 0, expect = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      fail(Errc::parse, path + ":" + std::to_string(line_no) + ": missing tab in vocab line");
    int id = -1;
    try {
      id = std::stoi(line.substr(0, tab));
    } catch (const std::exception&) {
      fail(Errc::parse, path + ":" + std::to_string(line_no) + ": bad vocab id");
    }
    if (id != expect)
      fail(Errc::parse, path + ":" + std::to_string(line_no) + ": vocab ids not dense, expected " +
                            std::to_string(expect) + " got " + std::to_string(id));
    std::string name = line.substr(tab + 1);
    if (id < kNumSpecials) {
      if (name != special_names()[id])
        fail(Errc::parse, path + ":" + std::to_string(line_no) + ": special id " +
                              std::to_string(id) + " must be " + special_names()[id]);
    } else {
      v.add_token(from_hex(name));
    }
    expect++;
  }
  if (expect < kNumSpecials) fail(Errc::parse, path + ": vocab file missing special tokens");
  return v;
}

void MergeTable::save_file(const std::string& path, const Vocabulary& vocab,
                           const std::string& header_comment) const {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  for (const auto& m : merges)
    out << to_hex(vocab.token(m.left)) << ' ' << to_hex(vocab.token(m.right)) << '\n';
  write_file_text(path, out.str());
}

MergeTable MergeTable::load_file(const std::string& path, const Vocabulary& vocab) {
  MergeTable t;
  std::istringstream in(read_file_text(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (line.empty() || line[0] == '#') continue;
    auto sp = line.find(' ');
    if (sp == std::string::npos)
      fail(Errc::parse, path + ":" + std::to_string(line_no) + ": missing space in merge line");
    std::string left_bytes = from_hex(line.substr(0, sp));
    std::string right_bytes = from_hex(line.substr(sp + 1));
    int left = vocab.find(left_bytes);
    int right = vocab.find(right_bytes);
    int result = vocab.find(left_bytes + right_bytes);
    if (left < 0 || right < 0 || result < 0)
      fail(Errc::parse, path + ":" + std::to_string(line_no) + ": merge references unknown token");
    t.merges.push_back({left, right, result});
  }
  return t;
}

// ---- word tokenizer ----

std::string column_to_word(const BootlegColumn& col) {
  std::string word(kStaffPositions, '0');
  for (int p = 0; p < kStaffPositions; p++)
    if (col.test(p)) word[p] = '1';
  return word;
}

BootlegColumn word_to_column(const std::string& word) {
  if (word.size() != kStaffPositions)
    fail(Errc::parse, "word length " + std::to_string(word.size()) + ", expected 62");
  BootlegColumn col;
  for (int p = 0; p < kStaffPositions; p++) {
    if (word[p] == '1')
      col.set(p);
    else if (word[p] != '0')
      fail(Errc::parse, "word character is not 0/1");
  }
  return col;
}

WordTokenizer WordTokenizer::train(const std::vector<std::string>& corpus_words, int max_size) {
  if (corpus_words.empty()) fail(Errc::empty_corpus, "word vocabulary needs a non-empty corpus");
  if (max_size <= kNumSpecials)
    fail(Errc::config, "word vocab max_size must exceed the special count");

  struct Entry {
    int64_t count = 0;
    size_t first_seen = 0;
  };
  std::unordered_map<std::string, Entry> counts;
  for (size_t i = 0; i < corpus_words.size(); i++) {
    auto [it, inserted] = counts.try_emplace(corpus_words[i]);
    if (inserted) it->second.first_seen = i;
    it->second.count++;
  }

  std::vector<const std::pair<const std::string, Entry>*> order;
  order.reserve(counts.size());
  for (const auto& kv : counts) order.push_back(&kv);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    if (a->second.count != b->second.count) return a->second.count > b->second.count;
    return a->second.first_seen < b->second.first_seen;
  });

  WordTokenizer tok;
  size_t keep = std::min(order.size(), static_cast<size_t>(max_size - kNumSpecials));
  for (size_t i = 0; i < keep; i++) tok.vocab_.add_token(order[i]->first);
  return tok;
}

WordTokenizer WordTokenizer::from_vocab(Vocabulary vocab) {
  WordTokenizer tok;
  tok.vocab_ = std::move(vocab);
  return tok;
}

int WordTokenizer::encode_word(const std::string& word) const {
  int id = vocab_.find(word);
  return id < 0 ? kUnkId : id;
}

TokenSequence WordTokenizer::encode(const BootlegScore& score) const {
  TokenSequence seq;
  seq.kind = TokKind::word;
  seq.ids.reserve(score.columns.size());
  for (const auto& col : score.columns) seq.ids.push_back(encode_word(column_to_word(col)));
  return seq;
}

// ---- byte-level BPE ----

std::string bytes_of(const BootlegScore& score) {
  std::string out;
  out.reserve(score.columns.size() * 8);
  for (const auto& col : score.columns) {
    auto word = pack_column(col);
    out.append(reinterpret_cast<const char*>(word.data()), 8);
  }
  return out;
}

static uint64_t pack_pair(int32_t a, int32_t b) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

BpeTokenizer BpeTokenizer::train(const std::vector<std::string>& corpus, int vocab_size) {
  if (vocab_size < 256 + kNumSpecials)
    fail(Errc::config, "bpe vocab_size must be at least " + std::to_string(256 + kNumSpecials));

  BpeTokenizer tok;
  for (int b = 0; b < 256; b++) tok.vocab_.add_token(std::string(1, static_cast<char>(b)));

  std::vector<std::vector<int32_t>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& page : corpus) {
    std::vector<int32_t> s;
    s.reserve(page.size());
    for (unsigned char c : page) s.push_back(byte_id(c));
    seqs.push_back(std::move(s));
  }

  // Merges whose concatenated bytes already name an existing token are banned
  // so the vocab stays bijective between ids and byte strings; the merges
  // file resolves tokens by content.
  std::unordered_map<uint64_t, bool> banned;

  while (tok.vocab_.size() < vocab_size) {
    std::unordered_map<uint64_t, int64_t> pair_counts;
    for (const auto& s : seqs)
      for (size_t i = 0; i + 1 < s.size(); i++) pair_counts[pack_pair(s[i], s[i + 1])]++;

    int32_t best_left = -1, best_right = -1;
    int64_t best_count = 0;
    for (const auto& [key, count] : pair_counts) {
      if (count < 2) continue;
      auto left = static_cast<int32_t>(key >> 32);
      auto right = static_cast<int32_t>(key & 0xffffffff);
      if (count > best_count ||
          (count == best_count &&
           (left < best_left || (left == best_left && right < best_right)))) {
        if (auto it = banned.find(key); it != banned.end()) continue;
        std::string joined = tok.vocab_.token(left) + tok.vocab_.token(right);
        if (tok.vocab_.find(joined) >= 0) {
          banned.emplace(key, true);
          continue;
        }
        best_left = left;
        best_right = right;
        best_count = count;
      }
    }
    if (best_count < 2) break;

    int32_t result =
        tok.vocab_.add_token(tok.vocab_.token(best_left) + tok.vocab_.token(best_right));
    tok.merges_.merges.push_back({best_left, best_right, result});

    for (auto& s : seqs) {
      size_t w = 0;
      for (size_t i = 0; i < s.size();) {
        if (i + 1 < s.size() && s[i] == best_left && s[i + 1] == best_right) {
          s[w++] = result;
          i += 2;
        } else {
          s[w++] = s[i++];
        }
      }
      s.resize(w);
    }
  }
  return tok;
}

BpeTokenizer BpeTokenizer::from_parts(Vocabulary vocab, MergeTable merges) {
  BpeTokenizer tok;
  tok.vocab_ = std::move(vocab);
  tok.merges_ = std::move(merges);
  if (tok.vocab_.size() < 256 + kNumSpecials)
    fail(Errc::parse, "bpe vocabulary is missing byte tokens");
  for (size_t k = 0; k < tok.merges_.merges.size(); k++) {
    const Merge& m = tok.merges_.merges[k];
    int32_t limit = static_cast<int32_t>(256 + kNumSpecials + k);
    if (m.left >= limit || m.right >= limit || m.left < kNumSpecials || m.right < kNumSpecials)
      fail(Errc::parse, "merge " + std::to_string(k) + " references a token it cannot see yet");
  }
  return tok;
}

TokenSequence BpeTokenizer::encode_with_prefix(const std::string& bytes, size_t n_merges) const {
  std::vector<int32_t> s;
  s.reserve(bytes.size());
  for (unsigned char c : bytes) s.push_back(byte_id(c));

  std::vector<uint8_t> present(static_cast<size_t>(vocab_.size()), 0);
  for (int32_t id : s) present[id] = 1;

  size_t limit = std::min(n_merges, merges_.merges.size());
  std::vector<int32_t> next;
  for (size_t k = 0; k < limit; k++) {
    const Merge& m = merges_.merges[k];
    if (!present[m.left] || !present[m.right]) continue;
    next.clear();
    next.reserve(s.size());
    bool applied = false;
    for (size_t i = 0; i < s.size();) {
      if (i + 1 < s.size() && s[i] == m.left && s[i + 1] == m.right) {
        next.push_back(m.result);
        applied = true;
        i += 2;
      } else {
        next.push_back(s[i]);
        i++;
      }
    }
    s.swap(next);
    if (applied) present[m.result] = 1;
  }

  TokenSequence seq;
  seq.kind = TokKind::bpe;
  seq.ids = std::move(s);
  return seq;
}

TokenSequence BpeTokenizer::encode(const std::string& bytes) const {
  return encode_with_prefix(bytes, merges_.merges.size());
}

std::string BpeTokenizer::decode(const TokenSequence& seq) const {
  std::string out;
  for (int32_t id : seq.ids) {
    if (id < 0 || id >= vocab_.size())
      fail(Errc::invalid_token_id, "token id out of range: " + std::to_string(id));
    if (id < kNumSpecials) continue;
    out += vocab_.token(id);
  }
  return out;
}

TokenSequence add_specials(const TokenSequence& seq) {
  TokenSequence out;
  out.kind = seq.kind;
  out.ids.reserve(seq.ids.size() + 2);
  out.ids.push_back(kBosId);
  out.ids.insert(out.ids.end(), seq.ids.begin(), seq.ids.end());
  out.ids.push_back(kEosId);
  return out;
}

}  // namespace stylus
