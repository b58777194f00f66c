#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "stylus/corpus.hpp"

using namespace stylus;

namespace {

Manifest toy_manifest(int pieces, int pages_per_piece) {
  Manifest m;
  for (int p = 0; p < pieces; p++)
    for (int g = 0; g < pages_per_piece; g++)
      m.records.push_back({"piece" + std::to_string(p), "composer_" + std::to_string(p % 3), g,
                           "/nonexistent", 100});
  return m;
}

}  // namespace

TEST_CASE("manifest save/load round-trip") {
  auto path = (std::filesystem::temp_directory_path() / "stylus_manifest.tsv").string();
  Manifest m = toy_manifest(4, 3);
  m.save_file(path, "config_hash=deadbeef");
  Manifest loaded = Manifest::load_file(path);
  REQUIRE(loaded.size() == m.size());
  for (size_t i = 0; i < m.size(); i++) CHECK(loaded.records[i] == m.records[i]);
  std::filesystem::remove(path);
}

TEST_CASE("manifest rejects duplicate (piece, page) pairs") {
  Manifest m;
  m.records.push_back({"p", "c", 0, "/x", 10});
  m.records.push_back({"p", "c", 0, "/y", 11});
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("split_by_piece matches ratios by piece count") {
  Manifest m = toy_manifest(10, 2);
  auto splits = split_by_piece(m, {0.6, 0.2, 0.2}, 42);
  CHECK(splits[0].piece_ids_in_order().size() == 6);
  CHECK(splits[1].piece_ids_in_order().size() == 2);
  CHECK(splits[2].piece_ids_in_order().size() == 2);
  CHECK(splits[0].size() + splits[1].size() + splits[2].size() == m.size());

  auto lm = split_by_piece(m, {0.9, 0.1, 0.0}, 42);
  CHECK(lm[0].piece_ids_in_order().size() == 9);
  CHECK(lm[1].piece_ids_in_order().size() == 1);
  CHECK(lm[2].size() == 0);
}

TEST_CASE("splits are piece-disjoint") {
  Manifest m = toy_manifest(23, 4);
  auto splits = split_by_piece(m, {0.6, 0.2, 0.2}, 7);
  std::set<std::string> a, b, c;
  for (const auto& r : splits[0].records) a.insert(r.piece_id);
  for (const auto& r : splits[1].records) b.insert(r.piece_id);
  for (const auto& r : splits[2].records) c.insert(r.piece_id);
  for (const auto& p : a) {
    CHECK(b.count(p) == 0);
    CHECK(c.count(p) == 0);
  }
  for (const auto& p : b) CHECK(c.count(p) == 0);

  // pages of one piece always land together
  auto again = split_by_piece(m, {0.6, 0.2, 0.2}, 7);
  CHECK(again[0].size() == splits[0].size());
}

TEST_CASE("split_by_piece validates input") {
  Manifest empty;
  CHECK_THROWS_AS(split_by_piece(empty, {0.6, 0.2, 0.2}, 1), Error);
  Manifest m = toy_manifest(4, 1);
  CHECK_THROWS_AS(split_by_piece(m, {0.5, 0.2, 0.2}, 1), Error);
}

TEST_CASE("sample_fragments draws balanced complete windows") {
  Manifest m;
  std::vector<std::vector<int32_t>> tokens;
  // composer a: two pages of 40 and 10 tokens; composer b: one page of 12
  m.records.push_back({"p0", "a", 0, "", 40});
  tokens.push_back(std::vector<int32_t>(40, 7));
  m.records.push_back({"p1", "a", 0, "", 10});
  tokens.push_back(std::vector<int32_t>(10, 8));
  m.records.push_back({"p2", "b", 0, "", 12});
  std::vector<int32_t> page(12);
  for (int i = 0; i < 12; i++) page[static_cast<size_t>(i)] = i + 10;
  tokens.push_back(page);

  LabelMap labels = LabelMap::from_manifest(m);
  auto frags = sample_fragments(m, tokens, labels, 12, 50, 99);
  REQUIRE(frags.size() == 100);
  int per_class[2] = {0, 0};
  for (const auto& f : frags) {
    CHECK(f.ids.size() == 12);
    per_class[f.label]++;
  }
  CHECK(per_class[0] == 50);
  CHECK(per_class[1] == 50);

  // the 12-token page admits exactly one window: offset 0
  for (const auto& f : frags)
    if (f.label == labels.id_of("b")) CHECK(f.ids == page);

  // reproducible from the seed
  auto again = sample_fragments(m, tokens, labels, 12, 50, 99);
  for (size_t i = 0; i < frags.size(); i++) {
    CHECK(again[i].ids == frags[i].ids);
    CHECK(again[i].label == frags[i].label);
  }
}

TEST_CASE("sample_fragments names the class with no eligible page") {
  Manifest m;
  m.records.push_back({"p0", "tiny", 0, "", 4});
  std::vector<std::vector<int32_t>> tokens = {std::vector<int32_t>(4, 1)};
  LabelMap labels = LabelMap::from_manifest(m);
  try {
    sample_fragments(m, tokens, labels, 64, 10, 1);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::insufficient_data);
    CHECK(std::string(e.what()).find("tiny") != std::string::npos);
  }
}

TEST_CASE("build_lm_stream chunks the concatenated corpus") {
  // 1100 tokens total including separators, context 512 -> 2 windows
  std::vector<std::vector<int32_t>> pages = {std::vector<int32_t>(600, 9),
                                             std::vector<int32_t>(499, 8)};
  auto windows = build_lm_stream(pages, 512);
  REQUIRE(windows.size() == 2);  // 600 + 1 + 499 = 1100, 76 dropped
  CHECK(windows[0].size() == 512);
  CHECK(windows[1].size() == 512);
  CHECK(windows[0][600] == kEosId);  // separator inserted between pages

  // a single page shorter than the context yields nothing
  CHECK(build_lm_stream({std::vector<int32_t>(100, 3)}, 512).empty());

  // window boundaries never reorder tokens
  std::vector<std::vector<int32_t>> seq_pages = {{}, {}};
  for (int i = 0; i < 20; i++) seq_pages[0].push_back(i);
  for (int i = 0; i < 15; i++) seq_pages[1].push_back(100 + i);
  auto small = build_lm_stream(seq_pages, 6);
  std::vector<int32_t> flat;
  for (const auto& w : small) flat.insert(flat.end(), w.begin(), w.end());
  std::vector<int32_t> expect;
  for (int i = 0; i < 20; i++) expect.push_back(i);
  expect.push_back(kEosId);
  for (int i = 0; i < 15; i++) expect.push_back(100 + i);
  expect.resize(flat.size());
  CHECK(flat == expect);
}

TEST_CASE("synthetic corpus is deterministic and well-formed") {
  auto tmp = std::filesystem::temp_directory_path();
  std::string dir_a = (tmp / "stylus_synth_a").string();
  std::string dir_b = (tmp / "stylus_synth_b").string();
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);

  SynthConfig cfg;
  cfg.n_classes = 2;
  cfg.pieces_per_class = 2;
  cfg.pages_per_piece = 2;
  cfg.columns_per_page = 50;
  cfg.states_per_class = 6;
  cfg.seed = 31;

  Manifest a = generate_synthetic_corpus(cfg, dir_a);
  Manifest b = generate_synthetic_corpus(cfg, dir_b);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() == 8);
  for (size_t i = 0; i < a.size(); i++) {
    CHECK(a.records[i].n_features == cfg.columns_per_page);
    auto bytes_a = read_file_bytes(a.records[i].path);
    auto bytes_b = read_file_bytes(b.records[i].path);
    CHECK(bytes_a == bytes_b);  // same seed, byte-identical corpus
  }

  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST_CASE("synthetic transition matrices are row-stochastic") {
  SynthConfig cfg;
  cfg.n_classes = 3;
  cfg.states_per_class = 12;
  cfg.seed = 4;
  for (int c = 0; c < cfg.n_classes; c++) {
    MarkovModel m = synth_class_model(cfg, c);
    REQUIRE(m.transitions.size() == 12);
    for (const auto& row : m.transitions) {
      double sum = 0.0;
      for (double p : row) {
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("disjoint alphabets occupy disjoint staff ranges") {
  SynthConfig cfg;
  cfg.n_classes = 2;
  cfg.states_per_class = 6;
  cfg.shared_alphabet = false;
  cfg.seed = 8;
  MarkovModel m0 = synth_class_model(cfg, 0);
  MarkovModel m1 = synth_class_model(cfg, 1);
  uint64_t bits0 = 0, bits1 = 0;
  for (const auto& s : m0.states) bits0 |= s.bits();
  for (const auto& s : m1.states) bits1 |= s.bits();
  CHECK((bits0 & bits1) == 0);  // orthogonal column alphabets
}

TEST_CASE("label map orders composers deterministically") {
  Manifest m;
  m.records.push_back({"p0", "zeta", 0, "", 1});
  m.records.push_back({"p1", "alpha", 0, "", 1});
  m.records.push_back({"p2", "mid", 0, "", 1});
  LabelMap labels = LabelMap::from_manifest(m);
  REQUIRE(labels.size() == 3);
  CHECK(labels.names[0] == "alpha");
  CHECK(labels.id_of("zeta") == 2);
  CHECK_THROWS_AS(labels.id_of("nope"), Error);
}
