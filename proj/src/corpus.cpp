#include "stylus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

namespace stylus {

void Manifest::validate() const {
  std::set<std::pair<std::string, int>> seen;
  for (const auto& r : records) {
    if (!seen.emplace(r.piece_id, r.page).second)
      fail(Errc::parse, "duplicate manifest entry for piece " + r.piece_id + " page " +
                            std::to_string(r.page));
  }
}

void Manifest::save_file(const std::string& path, const std::string& header_comment) const {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  for (const auto& r : records) {
    out << "piece_id=" << r.piece_id << "\tcomposer=" << r.composer << "\tpage=" << r.page
        << "\tpath=" << r.path << "\tn_features=" << r.n_features << '\n';
  }
  write_file_text(path, out.str());
}

static std::string take_field(const std::string& line, const std::string& key, size_t& pos,
                              const std::string& where) {
  std::string prefix = key + "=";
  if (line.compare(pos, prefix.size(), prefix) != 0)
    fail(Errc::parse, where + ": expected field '" + key + "'");
  size_t start = pos + prefix.size();
  size_t end = line.find('\t', start);
  if (end == std::string::npos) end = line.size();
  pos = end == line.size() ? end : end + 1;
  return line.substr(start, end - start);
}

Manifest Manifest::load_file(const std::string& path) {
  Manifest m;
  std::istringstream in(read_file_text(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (line.empty() || line[0] == '#') continue;
    std::string where = path + ":" + std::to_string(line_no);
    size_t pos = 0;
    PageRecord r;
    r.piece_id = take_field(line, "piece_id", pos, where);
    r.composer = take_field(line, "composer", pos, where);
    std::string page_s = take_field(line, "page", pos, where);
    r.path = take_field(line, "path", pos, where);
    std::string feat_s = take_field(line, "n_features", pos, where);
    try {
      r.page = std::stoi(page_s);
      r.n_features = std::stoll(feat_s);
    } catch (const std::exception&) {
      fail(Errc::parse, where + ": bad numeric field");
    }
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

std::vector<std::string> Manifest::piece_ids_in_order() const {
  std::vector<std::string> pieces;
  std::set<std::string> seen;
  for (const auto& r : records)
    if (seen.insert(r.piece_id).second) pieces.push_back(r.piece_id);
  return pieces;
}

LabelMap LabelMap::from_manifest(const Manifest& m) {
  LabelMap lm;
  std::set<std::string> names;
  for (const auto& r : m.records) names.insert(r.composer);
  lm.names.assign(names.begin(), names.end());
  for (size_t i = 0; i < lm.names.size(); i++) lm.ids[lm.names[i]] = static_cast<int>(i);
  return lm;
}

int LabelMap::id_of(const std::string& composer) const {
  auto it = ids.find(composer);
  if (it == ids.end()) fail(Errc::config, "composer not in label map: " + composer);
  return it->second;
}

std::array<Manifest, 3> split_by_piece(const Manifest& manifest,
                                       const std::array<double, 3>& ratios, uint64_t seed) {
  if (manifest.records.empty()) fail(Errc::empty_corpus, "cannot split an empty manifest");
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) fail(Errc::config, "split ratios must sum to 1");
  for (double r : ratios)
    if (r < 0) fail(Errc::config, "split ratios must be non-negative");

  std::vector<std::string> pieces = manifest.piece_ids_in_order();
  Rng rng(derive_seed(seed, "split_by_piece"));
  rng.shuffle(pieces);

  // floor allocation, then largest remainders
  size_t total = pieces.size();
  std::array<size_t, 3> counts;
  std::array<double, 3> rema;
  size_t assigned = 0;
  for (int k = 0; k < 3; k++) {
    double exact = ratios[k] * static_cast<double>(total);
    counts[k] = static_cast<size_t>(std::floor(exact + 1e-9));
    rema[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  while (assigned < total) {
    int best = 0;
    for (int k = 1; k < 3; k++)
      if (rema[k] > rema[best]) best = k;
    counts[best]++;
    rema[best] = -1;
    assigned++;
  }

  std::unordered_map<std::string, int> assignment;
  size_t idx = 0;
  for (int k = 0; k < 3; k++)
    for (size_t i = 0; i < counts[k]; i++) assignment[pieces[idx++]] = k;

  std::array<Manifest, 3> out;
  for (const auto& r : manifest.records) out[assignment.at(r.piece_id)].records.push_back(r);
  return out;
}

std::vector<std::vector<int32_t>> tokenize_pages(const Manifest& manifest,
                                                 const PageTokenizeFn& tokenize) {
  std::vector<std::vector<int32_t>> out;
  out.reserve(manifest.size());
  for (const auto& r : manifest.records) {
    BootlegScore score = read_score_file(r.path);
    out.push_back(tokenize(score).ids);
  }
  return out;
}

std::vector<Fragment> sample_fragments(const Manifest& manifest,
                                       const std::vector<std::vector<int32_t>>& page_tokens,
                                       const LabelMap& labels, int fragment_length,
                                       int per_class, uint64_t seed) {
  if (fragment_length < 1) fail(Errc::config, "fragment length must be positive");
  if (page_tokens.size() != manifest.size())
    fail(Errc::config, "page token list does not match manifest");

  // eligible page indices per class, in manifest order
  std::vector<std::vector<size_t>> eligible(labels.size());
  for (size_t i = 0; i < manifest.records.size(); i++) {
    if (page_tokens[i].size() >= static_cast<size_t>(fragment_length))
      eligible[labels.id_of(manifest.records[i].composer)].push_back(i);
  }

  std::vector<Fragment> out;
  out.reserve(static_cast<size_t>(per_class) * labels.size());
  for (int c = 0; c < labels.size(); c++) {
    if (eligible[c].empty())
      fail(Errc::insufficient_data, "class '" + labels.names[c] + "' has no page with at least " +
                                        std::to_string(fragment_length) + " tokens");
    Rng rng(derive_seed(seed, "fragments", static_cast<uint64_t>(c)));
    for (int k = 0; k < per_class; k++) {
      size_t page = eligible[c][rng.next_index(eligible[c].size())];
      const auto& toks = page_tokens[page];
      size_t max_offset = toks.size() - static_cast<size_t>(fragment_length);
      size_t offset = rng.next_index(max_offset + 1);
      Fragment f;
      f.label = c;
      f.ids.assign(toks.begin() + offset, toks.begin() + offset + fragment_length);
      out.push_back(std::move(f));
    }
  }
  return out;
}

std::vector<std::vector<int32_t>> build_lm_stream(
    const std::vector<std::vector<int32_t>>& page_tokens, int context) {
  if (context < 1) fail(Errc::config, "lm context must be positive");
  std::vector<int32_t> stream;
  for (size_t i = 0; i < page_tokens.size(); i++) {
    if (i > 0) stream.push_back(kEosId);
    stream.insert(stream.end(), page_tokens[i].begin(), page_tokens[i].end());
  }
  std::vector<std::vector<int32_t>> windows;
  size_t n = stream.size() / static_cast<size_t>(context);
  windows.reserve(n);
  for (size_t w = 0; w < n; w++)
    windows.emplace_back(stream.begin() + w * context, stream.begin() + (w + 1) * context);
  return windows;
}

// ---- synthetic corpus ----

static BootlegColumn random_column(Rng& rng, int lo_pos, int hi_pos) {
  BootlegColumn col;
  int n_bits = 1 + static_cast<int>(rng.next_index(3));
  for (int b = 0; b < n_bits; b++)
    col.set(lo_pos + static_cast<int>(rng.next_index(static_cast<uint64_t>(hi_pos - lo_pos))));
  return col;
}

static std::vector<BootlegColumn> synth_alphabet(const SynthConfig& cfg, int class_idx) {
  // shared alphabet: one pool for all classes; otherwise per-class pools over
  // disjoint staff position ranges so class alphabets are orthogonal
  uint64_t tag_idx = cfg.shared_alphabet ? 0 : static_cast<uint64_t>(class_idx) + 1;
  Rng rng(derive_seed(cfg.seed, "synth_alphabet", tag_idx));
  int lo = 0, hi = kStaffPositions;
  if (!cfg.shared_alphabet) {
    int span = kStaffPositions / cfg.n_classes;
    if (span < 2) fail(Errc::config, "too many classes for disjoint alphabets");
    lo = class_idx * span;
    hi = lo + span;
  }
  std::vector<BootlegColumn> states;
  std::set<uint64_t> seen;
  while (states.size() < static_cast<size_t>(cfg.states_per_class)) {
    BootlegColumn col = random_column(rng, lo, hi);
    if (seen.insert(col.bits()).second) states.push_back(col);
  }
  return states;
}

MarkovModel synth_class_model(const SynthConfig& cfg, int class_idx) {
  if (cfg.n_classes < 2) fail(Errc::config, "synthetic corpus needs at least 2 classes");
  if (class_idx < 0 || class_idx >= cfg.n_classes)
    fail(Errc::config, "class index out of range");
  if (cfg.states_per_class < 2) fail(Errc::config, "need at least 2 states per class");

  MarkovModel model;
  model.states = synth_alphabet(cfg, class_idx);

  const int S = cfg.states_per_class;
  Rng rng(derive_seed(cfg.seed, "synth_transitions", static_cast<uint64_t>(class_idx)));

  // class-specific permutation: each state gets a preferred successor
  std::vector<int> successor(S);
  for (int i = 0; i < S; i++) successor[i] = i;
  rng.shuffle(successor);

  model.transitions.assign(S, std::vector<double>(S, 0.0));
  for (int i = 0; i < S; i++) {
    double row_sum = 0.0;
    for (int j = 0; j < S; j++) {
      double w = 0.2 + 0.3 * rng.next_double();
      if (j == successor[i]) w += cfg.transition_sharpness;
      model.transitions[i][j] = w;
      row_sum += w;
    }
    for (int j = 0; j < S; j++) model.transitions[i][j] /= row_sum;
  }

  model.initial.assign(S, 1.0 / static_cast<double>(S));
  return model;
}

static int sample_categorical(const std::vector<double>& probs, Rng& rng) {
  double u = rng.next_double();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); i++) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

Manifest generate_synthetic_corpus(const SynthConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  Manifest manifest;

  std::vector<MarkovModel> models;
  models.reserve(cfg.n_classes);
  for (int c = 0; c < cfg.n_classes; c++) models.push_back(synth_class_model(cfg, c));

  for (int c = 0; c < cfg.n_classes; c++) {
    const MarkovModel& model = models[c];
    char composer[32];
    std::snprintf(composer, sizeof(composer), "composer_%02d", c);
    for (int p = 0; p < cfg.pieces_per_class; p++) {
      std::string piece_id = "c" + std::to_string(c) + "_p" + std::to_string(p);
      Rng rng(derive_seed(cfg.seed, "synth_piece",
                          static_cast<uint64_t>(c) * 1000003ULL + static_cast<uint64_t>(p)));
      for (int g = 0; g < cfg.pages_per_piece; g++) {
        BootlegScore score;
        score.columns.reserve(cfg.columns_per_page);
        int state = sample_categorical(model.initial, rng);
        for (int t = 0; t < cfg.columns_per_page; t++) {
          score.columns.push_back(model.states[state]);
          state = sample_categorical(model.transitions[state], rng);
        }
        std::string path = out_dir + "/" + piece_id + "_pg" + std::to_string(g) + ".bscr";
        write_score_file(score, path);
        manifest.records.push_back(
            {piece_id, composer, g, path, static_cast<int64_t>(score.columns.size())});
      }
    }
  }
  manifest.validate();
  return manifest;
}

}  // namespace stylus
