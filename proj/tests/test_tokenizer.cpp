#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "stylus/tokenizer.hpp"

using namespace stylus;

TEST_CASE("column_to_word layout") {
  CHECK(column_to_word(BootlegColumn{}) == std::string(62, '0'));
  CHECK(column_to_word(BootlegColumn::from_positions({0})) == "1" + std::string(61, '0'));
  CHECK(column_to_word(BootlegColumn::from_positions({61})) == std::string(61, '0') + "1");
}

TEST_CASE("word_to_column inverts column_to_word") {
  Rng rng(11);
  for (int k = 0; k < 500; k++) {
    BootlegColumn c;
    int n = static_cast<int>(rng.next_index(6));
    for (int i = 0; i < n; i++) c.set(static_cast<int>(rng.next_index(62)));
    CHECK(word_to_column(column_to_word(c)) == c);
  }
  CHECK_THROWS_AS(word_to_column("0101"), Error);
  CHECK_THROWS_AS(word_to_column(std::string(62, '2')), Error);
}

TEST_CASE("word vocabulary keeps the most frequent words") {
  std::string a = column_to_word(BootlegColumn::from_positions({1}));
  std::string b = column_to_word(BootlegColumn::from_positions({2}));
  std::string c = column_to_word(BootlegColumn::from_positions({3}));
  std::vector<std::string> corpus;
  for (int i = 0; i < 5; i++) corpus.push_back(a);
  for (int i = 0; i < 3; i++) corpus.push_back(b);
  corpus.push_back(c);

  // capacity for two words beyond the specials
  WordTokenizer tok = WordTokenizer::train(corpus, kNumSpecials + 2);
  CHECK(tok.vocab().size() == kNumSpecials + 2);
  CHECK(tok.encode_word(a) == kNumSpecials);      // most frequent sits first
  CHECK(tok.encode_word(b) == kNumSpecials + 1);
  CHECK(tok.encode_word(c) == kUnkId);            // evicted word maps to <unk>
}

TEST_CASE("word vocabulary ties break by first occurrence") {
  std::string a = column_to_word(BootlegColumn::from_positions({1}));
  std::string b = column_to_word(BootlegColumn::from_positions({2}));
  std::vector<std::string> corpus = {b, a, b, a};  // equal counts, b first
  WordTokenizer tok = WordTokenizer::train(corpus, kNumSpecials + 1);
  CHECK(tok.encode_word(b) == kNumSpecials);
  CHECK(tok.encode_word(a) == kUnkId);
}

TEST_CASE("word vocabulary needs a corpus and capacity") {
  CHECK_THROWS_AS(WordTokenizer::train({}, 100), Error);
  try {
    WordTokenizer::train({}, 100);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_corpus);
  }
  CHECK_THROWS_AS(WordTokenizer::train({std::string(62, '0')}, kNumSpecials), Error);
}

TEST_CASE("word encoding never exceeds the vocabulary") {
  std::vector<std::string> corpus;
  Rng rng(3);
  for (int i = 0; i < 300; i++) {
    BootlegColumn c;
    c.set(static_cast<int>(rng.next_index(62)));
    corpus.push_back(column_to_word(c));
  }
  WordTokenizer tok = WordTokenizer::train(corpus, kNumSpecials + 10);
  for (const auto& w : corpus) {
    int id = tok.encode_word(w);
    CHECK(id >= 0);
    CHECK(id < tok.vocab().size());
  }
  BootlegColumn rare = BootlegColumn::from_positions({0, 1, 2, 3});
  CHECK(tok.encode_word(column_to_word(rare)) == kUnkId);
}

TEST_CASE("bytes_of concatenates packed columns") {
  BootlegScore empty;
  CHECK(bytes_of(empty).empty());

  BootlegScore one;
  one.columns = {BootlegColumn::from_positions({0, 5})};
  std::string b = bytes_of(one);
  REQUIRE(b.size() == 8);
  CHECK(static_cast<uint8_t>(b[0]) == 0x21);

  BootlegScore two;
  two.columns = {BootlegColumn::from_positions({0}), BootlegColumn::from_positions({1})};
  CHECK(bytes_of(two).size() == 16);
}

// hand-computed BPE oracle on "aaabdaaabac":
//   pair counts: (a,a)=4, (a,b)=2, everything else 1 -> merge 1 = (a,a)
//   "Z a b d Z a b a c": (Z,a)=2 and (a,b)=2 tie; (a,b) has the smaller id
//   pair -> merge 2 = (a,b)
//   "Z AB d Z AB a c": (Z,AB)=2 -> merge 3 joins the two new tokens
TEST_CASE("train_bpe reproduces the hand-computed merge sequence") {
  BpeTokenizer tok = BpeTokenizer::train({"aaabdaaabac"}, 256 + kNumSpecials + 10);
  const auto& merges = tok.merges().merges;
  REQUIRE(merges.size() == 3);

  int a = BpeTokenizer::byte_id('a'), b = BpeTokenizer::byte_id('b');
  int z = 256 + kNumSpecials;  // first merged id
  CHECK(merges[0].left == a);
  CHECK(merges[0].right == a);
  CHECK(merges[0].result == z);
  CHECK(merges[1].left == a);
  CHECK(merges[1].right == b);
  CHECK(merges[1].result == z + 1);
  CHECK(merges[2].left == z);
  CHECK(merges[2].right == z + 1);
  CHECK(merges[2].result == z + 2);

  CHECK(tok.vocab().token(z) == "aa");
  CHECK(tok.vocab().token(z + 1) == "ab");
  CHECK(tok.vocab().token(z + 2) == "aaab");
}

// "aaaaaaaa": (a,a)=7 -> merge (a,a); then [aa aa aa aa], (aa,aa)=3 ->
// merge (aa,aa); then [aaaa aaaa], (aaaa,aaaa)=1 < 2 -> stop
TEST_CASE("train_bpe on a repeated byte") {
  BpeTokenizer tok = BpeTokenizer::train({"aaaaaaaa"}, 256 + kNumSpecials + 10);
  const auto& merges = tok.merges().merges;
  REQUIRE(merges.size() == 2);
  int a = BpeTokenizer::byte_id('a');
  int z = 256 + kNumSpecials;
  CHECK(merges[0].left == a);
  CHECK(merges[0].right == a);
  CHECK(merges[1].left == z);
  CHECK(merges[1].right == z);
  CHECK(tok.vocab().token(merges[1].result) == "aaaa");
}

TEST_CASE("train_bpe with no repeating pair learns nothing") {
  BpeTokenizer tok = BpeTokenizer::train({"abcdefgh"}, 30000);
  CHECK(tok.merges().merges.empty());
  CHECK(tok.vocab().size() == 256 + kNumSpecials);
}

TEST_CASE("train_bpe is deterministic") {
  std::vector<std::string> corpus = {"abcabcababc", "cabcab", "aabbcc"};
  BpeTokenizer t1 = BpeTokenizer::train(corpus, 300);
  BpeTokenizer t2 = BpeTokenizer::train(corpus, 300);
  REQUIRE(t1.merges().merges.size() == t2.merges().merges.size());
  for (size_t i = 0; i < t1.merges().merges.size(); i++)
    CHECK(t1.merges().merges[i] == t2.merges().merges[i]);
  CHECK(t1.vocab().content_hash() == t2.vocab().content_hash());
}

TEST_CASE("train_bpe validates vocab_size") {
  try {
    BpeTokenizer::train({"aa"}, 100);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::config);
  }
}

TEST_CASE("bpe_encode applies merges left-to-right without overlap") {
  BpeTokenizer tok = BpeTokenizer::train({"aaaaaaaa"}, 256 + kNumSpecials + 1);  // only (a,a)
  REQUIRE(tok.merges().merges.size() == 1);
  int z = tok.merges().merges[0].result;
  int a = BpeTokenizer::byte_id('a');

  TokenSequence seq = tok.encode(std::string("aaa"));
  REQUIRE(seq.ids.size() == 2);
  CHECK(seq.ids[0] == z);
  CHECK(seq.ids[1] == a);

  CHECK(tok.encode(std::string("")).ids.empty());

  TokenSequence nomerge = tok.encode(std::string("bcd"));
  REQUIRE(nomerge.ids.size() == 3);
  CHECK(nomerge.ids[0] == BpeTokenizer::byte_id('b'));
}

TEST_CASE("bpe decode inverts encode on random byte streams") {
  std::vector<std::string> corpus;
  Rng gen(99);
  for (int i = 0; i < 20; i++) {
    std::string page;
    for (int j = 0; j < 400; j++)
      page.push_back(static_cast<char>('a' + gen.next_index(4)));
    corpus.push_back(page);
  }
  BpeTokenizer tok = BpeTokenizer::train(corpus, 256 + kNumSpecials + 40);
  CHECK(tok.merges().merges.size() > 0);

  Rng rng(17);
  for (int k = 0; k < 1000; k++) {
    std::string input;
    size_t len = rng.next_index(120);
    for (size_t i = 0; i < len; i++)
      input.push_back(static_cast<char>(rng.next_index(256)));
    CHECK(tok.decode(tok.encode(input)) == input);
  }
}

TEST_CASE("bpe decode strips specials and rejects bad ids") {
  BpeTokenizer tok = BpeTokenizer::train({"xyxyxy"}, 300);
  TokenSequence seq = tok.encode(std::string("xy"));
  TokenSequence withspecials = add_specials(seq);
  CHECK(tok.decode(withspecials) == "xy");

  TokenSequence bad;
  bad.ids = {tok.vocab().size()};
  try {
    tok.decode(bad);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_token_id);
  }
}

TEST_CASE("encoded length is monotone non-increasing in applied merges") {
  std::vector<std::string> corpus = {"ababab", "aabbaabb", "abcabcabc"};
  BpeTokenizer tok = BpeTokenizer::train(corpus, 300);
  std::string input = "aababcabababc";
  size_t prev = SIZE_MAX;
  for (size_t k = 0; k <= tok.merges().merges.size(); k++) {
    size_t len = tok.encode_with_prefix(input, k).ids.size();
    CHECK(len <= prev);
    prev = len;
  }
}

TEST_CASE("add_specials wraps any sequence") {
  TokenSequence empty;
  empty.kind = TokKind::bpe;
  TokenSequence wrapped = add_specials(empty);
  REQUIRE(wrapped.ids.size() == 2);
  CHECK(wrapped.ids[0] == kBosId);
  CHECK(wrapped.ids[1] == kEosId);

  TokenSequence one;
  one.ids = {7};
  TokenSequence w1 = add_specials(one);
  CHECK(w1.ids == std::vector<int32_t>{kBosId, 7, kEosId});

  Rng rng(2);
  for (int k = 0; k < 20; k++) {
    TokenSequence s;
    size_t n = rng.next_index(50);
    for (size_t i = 0; i < n; i++) s.ids.push_back(static_cast<int32_t>(rng.next_index(200)));
    CHECK(add_specials(s).ids.size() == s.ids.size() + 2);
  }
}

TEST_CASE("vocabulary and merges files round-trip") {
  auto tmp = std::filesystem::temp_directory_path();
  std::string vocab_path = (tmp / "stylus_test.vocab").string();
  std::string merges_path = (tmp / "stylus_test.merges").string();

  std::vector<std::string> corpus = {"aaabdaaabac",
                                     std::string("deadbeef\x00\xff\x81zz", 13)};
  BpeTokenizer tok = BpeTokenizer::train(corpus, 300);
  tok.vocab().save_file(vocab_path, "config_hash=test");
  tok.merges().save_file(merges_path, tok.vocab());

  Vocabulary vocab = Vocabulary::load_file(vocab_path);
  CHECK(vocab.content_hash() == tok.vocab().content_hash());
  MergeTable merges = MergeTable::load_file(merges_path, vocab);
  BpeTokenizer loaded = BpeTokenizer::from_parts(std::move(vocab), std::move(merges));

  std::string probe = std::string("aaabdaaabac\x00\x10zz", 15);
  CHECK(loaded.encode(probe).ids == tok.encode(probe).ids);

  std::filesystem::remove(vocab_path);
  std::filesystem::remove(merges_path);
}

TEST_CASE("word vocabulary file round-trip") {
  auto tmp = std::filesystem::temp_directory_path();
  std::string path = (tmp / "stylus_word.vocab").string();
  std::vector<std::string> corpus = {column_to_word(BootlegColumn::from_positions({3})),
                                     column_to_word(BootlegColumn::from_positions({3})),
                                     column_to_word(BootlegColumn::from_positions({4, 9}))};
  WordTokenizer tok = WordTokenizer::train(corpus, 1000);
  tok.vocab().save_file(path);
  WordTokenizer loaded = WordTokenizer::from_vocab(Vocabulary::load_file(path));
  CHECK(loaded.vocab().content_hash() == tok.vocab().content_hash());
  for (const auto& w : corpus) CHECK(loaded.encode_word(w) == tok.encode_word(w));
  std::filesystem::remove(path);
}

TEST_CASE("hex helpers") {
  CHECK(to_hex(std::string("\x00\xff\x21", 3)) == "00ff21");
  CHECK(from_hex("00ff21") == std::string("\x00\xff\x21", 3));
  CHECK_THROWS_AS(from_hex("0g"), Error);
  CHECK_THROWS_AS(from_hex("012"), Error);
}
