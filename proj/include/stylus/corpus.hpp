#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stylus/bootleg.hpp"
#include "stylus/tokenizer.hpp"

namespace stylus {

struct PageRecord {
  std::string piece_id;
  std::string composer;
  int page = 0;
  std::string path;
  int64_t n_features = 0;

  bool operator==(const PageRecord&) const = default;
};

struct Manifest {
  std::vector<PageRecord> records;

  size_t size() const { return records.size(); }

  // (piece_id, page) pairs must be unique
  void validate() const;

  // One record per line, tab-separated key=value fields in fixed order:
  // piece_id, composer, page, path, n_features. '#' lines are comments.
  void save_file(const std::string& path, const std::string& header_comment = "") const;
  static Manifest load_file(const std::string& path);

  std::vector<std::string> piece_ids_in_order() const;
};

// Dense composer label ids, assigned by sorted composer name.
struct LabelMap {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> ids;

  static LabelMap from_manifest(const Manifest& m);
  int id_of(const std::string& composer) const;
  int size() const { return static_cast<int>(names.size()); }
};

// Seeded piece-level partition; every piece's pages land wholly in one split.
std::array<Manifest, 3> split_by_piece(const Manifest& manifest,
                                       const std::array<double, 3>& ratios, uint64_t seed);

struct Fragment {
  std::vector<int32_t> ids;  // length exactly L
  int label = 0;
};

using PageTokenizeFn = std::function<TokenSequence(const BootlegScore&)>;

// Loads and tokenizes every page of a manifest once, in record order.
std::vector<std::vector<int32_t>> tokenize_pages(const Manifest& manifest,
                                                 const PageTokenizeFn& tokenize);

struct SamplerConfig {
  int fragment_length = 64;
  int train_per_class = 900;
  int val_per_class = 300;
  int test_per_class = 300;
  uint64_t seed = 1;
};

// Draws exactly per_class fragments for every class: a uniformly chosen
// eligible page (token length >= L), a uniformly chosen complete window.
// Sampling is with replacement.
std::vector<Fragment> sample_fragments(const Manifest& manifest,
                                       const std::vector<std::vector<int32_t>>& page_tokens,
                                       const LabelMap& labels, int fragment_length,
                                       int per_class, uint64_t seed);

// Concatenates page token streams with a </s> separator between pages, then
// chunks into consecutive windows of `context` tokens; the last partial
// window is dropped.
std::vector<std::vector<int32_t>> build_lm_stream(
    const std::vector<std::vector<int32_t>>& page_tokens, int context);

// ---- synthetic corpus ----

struct SynthConfig {
  int n_classes = 3;
  int pieces_per_class = 8;
  int pages_per_piece = 4;
  int columns_per_page = 400;
  int states_per_class = 16;
  bool shared_alphabet = true;     // same columns for all classes, distinct transitions
  double transition_sharpness = 8.0;
  uint64_t seed = 1;
};

// Per-class Markov chain over a small set of bootleg columns.
struct MarkovModel {
  std::vector<BootlegColumn> states;
  std::vector<std::vector<double>> transitions;  // row-stochastic
  std::vector<double> initial;
};

MarkovModel synth_class_model(const SynthConfig& cfg, int class_idx);

// Writes one score file per page under out_dir and returns the manifest
// (paths point into out_dir). Same seed, same bytes.
Manifest generate_synthetic_corpus(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace stylus
