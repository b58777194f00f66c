#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "stylus/bootleg.hpp"
#include "stylus/common.hpp"

namespace stylus {

// Reserved special token ids, shared by both tokenizers.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;  // <s>
inline constexpr int kEosId = 2;  // </s>
inline constexpr int kUnkId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kNumSpecials = 5;

const std::vector<std::string>& special_names();

enum class TokKind : uint8_t { word = 0, bpe = 1 };

struct TokenSequence {
  std::vector<int32_t> ids;
  TokKind kind = TokKind::word;

  size_t size() const { return ids.size(); }
};

// Dense id space 0..V-1 with the five specials at ids 0-4. Non-special tokens
// are byte strings: single bytes and merge results for BPE, 62-character
// '0'/'1' words for the word tokenizer.
class Vocabulary {
 public:
  Vocabulary();  // specials only

  int add_token(const std::string& bytes);  // returns the new id
  int size() const { return static_cast<int>(tokens_.size()); }

  const std::string& token(int id) const {
    if (id < 0 || id >= size())
      fail(Errc::invalid_token_id, "token id out of range: " + std::to_string(id));
    return tokens_[id];
  }

  // id of a non-special token byte string, -1 when absent
  int find(const std::string& bytes) const {
    auto it = index_.find(bytes);
    return it == index_.end() ? -1 : it->second;
  }

  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }

  // Content hash over tokens in id order; checkpoints store it so a model is
  // never evaluated with a different tokenizer than it was trained with.
  uint64_t content_hash() const;

  // One line per token: "<id>\t<hex-or-special-name>". '#' lines are comments.
  void save_file(const std::string& path, const std::string& header_comment = "") const;
  static Vocabulary load_file(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;  // non-special tokens only, first id wins
};

struct Merge {
  int32_t left;
  int32_t right;
  int32_t result;

  bool operator==(const Merge&) const = default;
};

struct MergeTable {
  std::vector<Merge> merges;

  // One line per merge in training order: "<left-hex> <right-hex>".
  void save_file(const std::string& path, const Vocabulary& vocab,
                 const std::string& header_comment = "") const;
  static MergeTable load_file(const std::string& path, const Vocabulary& vocab);
};

std::string to_hex(const std::string& bytes);
std::string from_hex(const std::string& hex);

// ---- word tokenizer ----

// Character j of the word is '1' iff staff position j is set.
std::string column_to_word(const BootlegColumn& col);
BootlegColumn word_to_column(const std::string& word);

class WordTokenizer {
 public:
  // Keeps the (max_size - specials) most frequent words, ties broken by first
  // occurrence; everything else encodes to <unk>.
  static WordTokenizer train(const std::vector<std::string>& corpus_words,
                             int max_size = 30000);
  static WordTokenizer from_vocab(Vocabulary vocab);

  int encode_word(const std::string& word) const;
  TokenSequence encode(const BootlegScore& score) const;

  const Vocabulary& vocab() const { return vocab_; }

 private:
  WordTokenizer() = default;
  Vocabulary vocab_;
};

// ---- byte-level BPE ----

// Concatenation of pack_column over all columns; 8 bytes per column.
std::string bytes_of(const BootlegScore& score);

class BpeTokenizer {
 public:
  // Starts from the 256 byte tokens and iteratively merges the most frequent
  // adjacent pair until vocab_size is reached or no pair occurs twice. Ties
  // break toward the lexicographically smallest (left id, right id).
  static BpeTokenizer train(const std::vector<std::string>& corpus, int vocab_size = 30000);
  static BpeTokenizer from_parts(Vocabulary vocab, MergeTable merges);

  TokenSequence encode(const std::string& bytes) const;
  // Applies only the first n_merges rules; used by length-monotonicity checks.
  TokenSequence encode_with_prefix(const std::string& bytes, size_t n_merges) const;
  std::string decode(const TokenSequence& seq) const;

  TokenSequence encode(const BootlegScore& score) const { return encode(bytes_of(score)); }

  const Vocabulary& vocab() const { return vocab_; }
  const MergeTable& merges() const { return merges_; }

  static constexpr int byte_id(uint8_t b) { return kNumSpecials + b; }

 private:
  BpeTokenizer() = default;
  Vocabulary vocab_;
  MergeTable merges_;
};

// [<s>] + seq + [</s>]
TokenSequence add_specials(const TokenSequence& seq);

}  // namespace stylus
