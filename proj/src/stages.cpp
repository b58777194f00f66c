#include <filesystem>
#include <iostream>
#include <sstream>

#include "stylus/checkpoint.hpp"
#include "stylus/inference.hpp"
#include "stylus/runconfig.hpp"
#include "stylus/trainer.hpp"

namespace stylus {

namespace {

std::string artifact_header(const RunConfig& cfg) {
  return "config_hash=" + hex64(cfg.config_hash) + " seed=" + std::to_string(cfg.seed);
}

// content hash over the manifest records and every referenced score file
uint64_t data_fingerprint(const Manifest& manifest) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& r : manifest.records) {
    h = fnv1a64(r.piece_id, h);
    h = fnv1a64(r.composer, h);
    h = fnv1a64(&r.page, sizeof(r.page), h);
    h = fnv1a64(&r.n_features, sizeof(r.n_features), h);
    auto bytes = read_file_bytes(r.path);
    h = fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

Manifest load_filtered_manifest(const RunConfig& cfg, int64_t default_min_features = 10) {
  Manifest m = Manifest::load_file(cfg.get_existing_path("manifest"));
  int64_t min_features = cfg.get_int_or("min_features", default_min_features);
  Manifest filtered;
  filtered.records = filter_filler(m.records, min_features);
  if (filtered.records.empty())
    fail(Errc::empty_corpus, "every page fell below min_features=" +
                                 std::to_string(min_features));
  return filtered;
}

// ---- tokenizer loading ----

struct LoadedTokenizer {
  TokKind kind = TokKind::word;
  std::optional<WordTokenizer> word;
  std::optional<BpeTokenizer> bpe;

  uint64_t vocab_hash() const {
    return kind == TokKind::word ? word->vocab().content_hash() : bpe->vocab().content_hash();
  }
  int vocab_size() const {
    return kind == TokKind::word ? word->vocab().size() : bpe->vocab().size();
  }
  PageTokenizeFn fn() const {
    if (kind == TokKind::word) {
      const WordTokenizer* t = &*word;
      return [t](const BootlegScore& s) { return t->encode(s); };
    }
    const BpeTokenizer* t = &*bpe;
    return [t](const BootlegScore& s) { return t->encode(s); };
  }
};

LoadedTokenizer load_tokenizer(const std::string& prefix) {
  std::string vocab_path = prefix + ".vocab";
  std::string merges_path = prefix + ".merges";
  if (!std::filesystem::exists(vocab_path))
    fail(Errc::config, "tokenizer vocab not found: " + vocab_path);
  Vocabulary vocab = Vocabulary::load_file(vocab_path);
  LoadedTokenizer out;
  if (std::filesystem::exists(merges_path)) {
    out.kind = TokKind::bpe;
    MergeTable merges = MergeTable::load_file(merges_path, vocab);
    out.bpe = BpeTokenizer::from_parts(std::move(vocab), std::move(merges));
  } else {
    out.kind = TokKind::word;
    out.word = WordTokenizer::from_vocab(std::move(vocab));
  }
  return out;
}

// ---- model config from the stage config ----

ModelConfig model_config_from(const RunConfig& cfg, Arch arch, int vocab_size, int n_classes) {
  ModelConfig mc;
  mc.arch = arch;
  mc.vocab_size = vocab_size;
  mc.n_classes = n_classes;
  mc.hidden_dim = static_cast<int>(cfg.get_int_or("hidden_dim", 128));
  mc.embed_dim = static_cast<int>(cfg.get_int_or("embed_dim", mc.hidden_dim));
  mc.n_layers = static_cast<int>(cfg.get_int_or("n_layers", 2));
  mc.n_heads = static_cast<int>(cfg.get_int_or("n_heads", 4));
  mc.context = static_cast<int>(cfg.get_int_or("context", 130));
  mc.dropout_embed = cfg.get_double_or("dropout_embed", 0.02);
  mc.dropout_input = cfg.get_double_or("dropout_input", 0.25);
  mc.dropout_weight = cfg.get_double_or("dropout_weight", 0.2);
  mc.dropout_output = cfg.get_double_or("dropout_output", 0.1);
  mc.dropout_attn = cfg.get_double_or("dropout_attn", 0.1);
  mc.dropout_resid = cfg.get_double_or("dropout_resid", 0.1);
  mc.dropout_head = cfg.get_double_or("dropout_head", 0.1);
  mc.cnn_kernel = static_cast<int>(cfg.get_int_or("cnn_kernel", 5));
  mc.validate();
  return mc;
}

TrainOptions train_options_from(const RunConfig& cfg) {
  TrainOptions t;
  t.batch_size = static_cast<int>(cfg.get_int_or("batch_size", 32));
  t.epochs = static_cast<int>(cfg.get_int_or("epochs", 2));
  t.lr_max = cfg.get_double_or("lr_max", 1e-3);
  t.pct_start = cfg.get_double_or("pct_start", 0.3);
  t.div_factor = cfg.get_double_or("div_factor", 25.0);
  t.final_div_factor = cfg.get_double_or("final_div_factor", 1e4);
  t.momentum_high = cfg.get_double_or("momentum_high", 0.95);
  t.momentum_low = cfg.get_double_or("momentum_low", 0.85);
  t.weight_decay = cfg.get_double_or("weight_decay", 0.01);
  t.seed = cfg.seed;
  t.log_path = cfg.get_string_or("log", "");
  t.config_hash = cfg.config_hash;
  if (t.batch_size < 1 || t.epochs < 1)
    fail(Errc::config, "batch_size and epochs must be positive");
  return t;
}

// ---- stages ----

int stage_synth(const RunConfig& cfg) {
  SynthConfig sc;
  sc.n_classes = static_cast<int>(cfg.get_int_or("classes", 3));
  sc.pieces_per_class = static_cast<int>(cfg.get_int_or("pieces_per_class", 8));
  sc.pages_per_piece = static_cast<int>(cfg.get_int_or("pages_per_piece", 4));
  sc.columns_per_page = static_cast<int>(cfg.get_int_or("columns_per_page", 400));
  sc.states_per_class = static_cast<int>(cfg.get_int_or("states_per_class", 16));
  sc.shared_alphabet = cfg.get_bool_or("shared_alphabet", true);
  sc.transition_sharpness = cfg.get_double_or("transition_sharpness", 8.0);
  sc.seed = cfg.seed;
  std::string out_dir = cfg.get_string("out_dir");
  Manifest m = generate_synthetic_corpus(sc, out_dir);
  std::string manifest_out = cfg.get_string_or("manifest_out", out_dir + "/manifest.tsv");
  m.save_file(manifest_out, artifact_header(cfg));
  std::cout << "synth: " << m.size() << " pages over " << sc.n_classes << " classes -> "
            << manifest_out << "\n";
  return 0;
}

int stage_encode(const RunConfig& cfg) {
  std::string input = cfg.get_existing_path("input");
  std::string output = cfg.get_string("output");
  PitchMap map = cfg.has("pitch_map") ? PitchMap::load_file(cfg.get_existing_path("pitch_map"))
                                      : PitchMap::default_map();

  std::vector<NoteEvent> events;
  std::istringstream in(read_file_text(input));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string onset_s, hand_s;
    int pitch = 0;
    if (!(ls >> onset_s >> pitch >> hand_s))
      fail(Errc::parse, input + ":" + std::to_string(line_no) +
                            ": expected '<onset> <pitch> <hand>'");
    NoteEvent e;
    auto slash = onset_s.find('/');
    try {
      if (slash == std::string::npos)
        e.onset = Rational(std::stoll(onset_s));
      else
        e.onset = Rational(std::stoll(onset_s.substr(0, slash)),
                           std::stoll(onset_s.substr(slash + 1)));
    } catch (const std::exception&) {
      fail(Errc::parse, input + ":" + std::to_string(line_no) + ": bad onset " + onset_s);
    }
    e.pitch = pitch;
    if (hand_s == "left")
      e.hand = Hand::left;
    else if (hand_s == "right")
      e.hand = Hand::right;
    else
      fail(Errc::parse, input + ":" + std::to_string(line_no) + ": unknown hand " + hand_s);
    events.push_back(e);
  }

  BootlegScore score = encode_symbolic(std::move(events), map);
  write_score_file(score, output);
  std::cout << "encode: " << score.size() << " columns -> " << output << "\n";
  return 0;
}

int stage_train_tokenizer(const RunConfig& cfg) {
  Manifest manifest = load_filtered_manifest(cfg);
  std::string kind = cfg.get_string_or("kind", "bpe");
  int vocab_size = static_cast<int>(cfg.get_int_or("vocab_size", 30000));
  std::string prefix = cfg.get_string("out_prefix");

  if (kind == "word") {
    std::vector<std::string> words;
    for (const auto& r : manifest.records) {
      BootlegScore s = read_score_file(r.path);
      for (const auto& col : s.columns) words.push_back(column_to_word(col));
    }
    WordTokenizer tok = WordTokenizer::train(words, vocab_size);
    tok.vocab().save_file(prefix + ".vocab", artifact_header(cfg));
    std::cout << "train-tokenizer: word vocab of " << tok.vocab().size() << " -> " << prefix
              << ".vocab\n";
  } else if (kind == "bpe") {
    std::vector<std::string> corpus;
    for (const auto& r : manifest.records) corpus.push_back(bytes_of(read_score_file(r.path)));
    BpeTokenizer tok = BpeTokenizer::train(corpus, vocab_size);
    tok.vocab().save_file(prefix + ".vocab", artifact_header(cfg));
    tok.merges().save_file(prefix + ".merges", tok.vocab(), artifact_header(cfg));
    std::cout << "train-tokenizer: bpe vocab of " << tok.vocab().size() << " ("
              << tok.merges().merges.size() << " merges) -> " << prefix << ".{vocab,merges}\n";
  } else {
    fail(Errc::config, "config field 'kind' must be word or bpe, got " + kind);
  }
  return 0;
}

int stage_pretrain(const RunConfig& cfg, bool continue_from_checkpoint) {
  Manifest manifest = load_filtered_manifest(cfg);
  LoadedTokenizer tok = load_tokenizer(cfg.get_string("tokenizer"));
  Arch arch = arch_from_name(cfg.get_string_or("arch", "causal"));
  if (arch == Arch::cnn) fail(Errc::config, "cnn arch has no language-model objective");

  double train_ratio = cfg.get_double_or("lm_train_ratio", 0.9);
  auto splits = split_by_piece(manifest, {train_ratio, 1.0 - train_ratio, 0.0}, cfg.seed);

  ModelState state = [&] {
    if (continue_from_checkpoint) {
      LoadedCheckpoint ck = load_checkpoint(cfg.get_existing_path("init"));
      require_vocab_match(ck.state, tok.vocab_hash());
      if (!ck.state.config.is_lm())
        fail(Errc::config, "init checkpoint is a classifier, not a language model");
      return std::move(ck.state);
    }
    ModelConfig mc = model_config_from(cfg, arch, tok.vocab_size(), 0);
    return init_model(mc, tok.vocab_hash(), cfg.seed);
  }();

  int context = state.config.context;
  auto train_windows = build_lm_stream(tokenize_pages(splits[0], tok.fn()), context);
  auto val_windows = build_lm_stream(tokenize_pages(splits[1], tok.fn()), context);
  if (train_windows.empty())
    fail(Errc::insufficient_data, "lm training stream yields no windows at context " +
                                      std::to_string(context));

  Objective::Kind kind = state.config.arch == Arch::masked ? Objective::Kind::masked
                                                           : Objective::Kind::next_token;
  Objective train = Objective::lm(kind, std::move(train_windows), tok.vocab_size());
  train.mask_select = cfg.get_double_or("mask_select", 0.15);
  std::optional<Objective> val;
  if (!val_windows.empty()) {
    val = Objective::lm(kind, std::move(val_windows), tok.vocab_size());
    val->mask_select = train.mask_select;
  }

  TrainOptions opts = train_options_from(cfg);
  TrainTrace trace = pretrain_lm(state, train, val ? &*val : nullptr, opts);

  std::string out = cfg.get_string("out");
  save_checkpoint(state, out, cfg.config_hash);
  std::cout << stage_name(cfg.stage) << ": " << trace.loss.size() << " steps";
  if (!trace.val_perplexity.empty())
    std::cout << ", best val perplexity "
              << dtos(*std::min_element(trace.val_perplexity.begin(),
                                        trace.val_perplexity.end()));
  std::cout << " -> " << out << "\n";
  return 0;
}

int stage_finetune(const RunConfig& cfg) {
  Manifest manifest = load_filtered_manifest(cfg);
  LoadedTokenizer tok = load_tokenizer(cfg.get_string("tokenizer"));
  LabelMap labels = LabelMap::from_manifest(manifest);
  uint64_t fingerprint = data_fingerprint(manifest);

  double r_train = cfg.get_double_or("train_ratio", 0.6);
  double r_val = cfg.get_double_or("val_ratio", 0.2);
  double r_test = cfg.get_double_or("test_ratio", 0.2);
  auto splits = split_by_piece(manifest, {r_train, r_val, r_test}, cfg.seed);

  if (cfg.has("split_prefix")) {
    std::string p = cfg.get_string("split_prefix");
    splits[0].save_file(p + ".train.manifest", artifact_header(cfg));
    splits[1].save_file(p + ".val.manifest", artifact_header(cfg));
    splits[2].save_file(p + ".test.manifest", artifact_header(cfg));
  }

  int L = static_cast<int>(cfg.get_int_or("fragment_length", 64));
  SamplerConfig sampler;
  sampler.fragment_length = L;
  sampler.train_per_class = static_cast<int>(cfg.get_int_or("train_per_class", 900));
  sampler.val_per_class = static_cast<int>(cfg.get_int_or("val_per_class", 300));
  sampler.test_per_class = static_cast<int>(cfg.get_int_or("test_per_class", 300));

  auto tokens_train = tokenize_pages(splits[0], tok.fn());
  auto tokens_val = tokenize_pages(splits[1], tok.fn());
  auto frags_train = sample_fragments(splits[0], tokens_train, labels, L,
                                      sampler.train_per_class, derive_seed(cfg.seed, "train"));
  auto frags_val = sample_fragments(splits[1], tokens_val, labels, L, sampler.val_per_class,
                                    derive_seed(cfg.seed, "val"));

  // classifier state: dims from the init checkpoint when given
  ModelState classifier = [&] {
    if (cfg.has("init")) {
      LoadedCheckpoint ck = load_checkpoint(cfg.get_existing_path("init"));
      require_vocab_match(ck.state, tok.vocab_hash());
      ModelConfig mc = ck.state.config;
      mc.n_classes = labels.size();
      mc.dropout_head = cfg.get_double_or("dropout_head", 0.1);
      mc.validate();
      ModelState fresh = init_model(mc, tok.vocab_hash(), cfg.seed);
      init_from_pretrained(fresh, ck.state);
      return fresh;
    }
    Arch arch = arch_from_name(cfg.get_string_or("arch", "causal"));
    ModelConfig mc = model_config_from(cfg, arch, tok.vocab_size(), labels.size());
    return init_model(mc, tok.vocab_hash(), cfg.seed);
  }();
  classifier.class_names = labels.names;
  classifier.fragment_length = L;

  bool needs_specials = classifier.config.is_transformer();
  if (classifier.config.context < L + (needs_specials ? 2 : 0))
    fail(Errc::config, "context " + std::to_string(classifier.config.context) +
                           " too small for fragment_length " + std::to_string(L));

  Objective train = Objective::classification(frags_train, classifier.config.arch);
  Objective val = Objective::classification(frags_val, classifier.config.arch);

  FinetunePlan plan;
  plan.base_lr = cfg.get_double_or("base_lr", 1e-3);
  plan.disc_factor = cfg.get_double_or("disc_factor", 2.6);
  int cycles = static_cast<int>(cfg.get_int_or("cycles_per_stage", 1));
  int epc = static_cast<int>(cfg.get_int_or("epochs_per_cycle", 1));
  int G = n_layer_groups(classifier.config);
  if (cfg.get_bool_or("gradual_unfreeze", true)) {
    plan.stages = FinetunePlan::default_stages(G);
    for (auto& s : plan.stages) {
      s.cycles = cycles;
      s.epochs_per_cycle = epc;
    }
  } else {
    plan.stages = {{G, cycles, epc}};
  }

  TrainOptions opts = train_options_from(cfg);
  FinetuneResult result = finetune_classifier(classifier, train, &val, plan, opts);

  std::string out = cfg.get_string("out");
  save_checkpoint(classifier, out, cfg.config_hash);

  RunMeta meta{cfg.config_hash, cfg.seed, fingerprint, arch_name(classifier.config.arch),
               "fragment-validation"};
  result.val_report.class_names = labels.names;
  std::string report_text = render_metrics(result.val_report, meta);

  if (sampler.test_per_class > 0 && splits[2].size() > 0) {
    auto tokens_test = tokenize_pages(splits[2], tok.fn());
    auto frags_test = sample_fragments(splits[2], tokens_test, labels, L,
                                       sampler.test_per_class, derive_seed(cfg.seed, "test"));
    Objective test = Objective::classification(frags_test, classifier.config.arch);
    ClassifierEval ev = evaluate_classifier(classifier, test, opts.batch_size);
    RunMeta test_meta = meta;
    test_meta.task = "fragment-test";
    report_text += render_metrics(ev.report, test_meta);
  }

  std::string metrics_out = cfg.get_string_or("metrics_out", out + ".metrics");
  write_file_text(metrics_out, report_text);
  std::cout << "finetune: val accuracy " << dtos(result.val_report.accuracy) << ", checkpoint -> "
            << out << ", metrics -> " << metrics_out << "\n";
  return 0;
}

struct PageInference {
  ModelState state;
  LoadedTokenizer tok;
  LabelMap labels;
  int crop = 0;
  bool multicrop = true;
};

PageInference load_page_inference(const RunConfig& cfg) {
  PageInference pi{ModelState{}, load_tokenizer(cfg.get_string("tokenizer")), LabelMap{}, 0,
                   true};
  LoadedCheckpoint ck = load_checkpoint(cfg.get_existing_path("checkpoint"));
  require_vocab_match(ck.state, pi.tok.vocab_hash());
  if (ck.state.config.is_lm())
    fail(Errc::config, "checkpoint has no classifier head; finetune first");
  pi.state = std::move(ck.state);
  for (size_t i = 0; i < pi.state.class_names.size(); i++)
    pi.labels.ids[pi.state.class_names[i]] = static_cast<int>(i);
  pi.labels.names = pi.state.class_names;

  pi.crop = static_cast<int>(
      cfg.get_int_or("crop", pi.state.fragment_length > 0 ? pi.state.fragment_length : 64));
  std::string mode = cfg.get_string_or("inference", "auto");
  if (mode == "auto")
    pi.multicrop = multicrop_default(pi.state.config.arch);
  else if (mode == "single")
    pi.multicrop = false;
  else if (mode == "multi")
    pi.multicrop = true;
  else
    fail(Errc::config, "config field 'inference' must be auto, single or multi");
  return pi;
}

PagePrediction predict_page(const PageInference& pi, const std::vector<int32_t>& tokens) {
  return pi.multicrop ? predict_multicrop(pi.state, tokens, pi.crop)
                      : predict_single(pi.state, tokens);
}

std::string prediction_line(const PageRecord& r, const PagePrediction& p,
                            const std::vector<std::string>& names) {
  std::ostringstream out;
  out << r.piece_id << '\t' << r.page << '\t' << names[static_cast<size_t>(p.predicted)] << '\t'
      << p.crop_count << '\t';
  for (int c = 0; c < p.probabilities.size(); c++) {
    if (c) out << ' ';
    out << dtos(p.probabilities(c));
  }
  return out.str();
}

int stage_evaluate(const RunConfig& cfg) {
  Manifest manifest = load_filtered_manifest(cfg, 0);
  PageInference pi = load_page_inference(cfg);
  uint64_t fingerprint = data_fingerprint(manifest);

  std::vector<int> predictions, truth;
  std::ostringstream pred_lines;
  for (const auto& r : manifest.records) {
    auto it = pi.labels.ids.find(r.composer);
    if (it == pi.labels.ids.end())
      fail(Errc::config, "manifest composer '" + r.composer +
                             "' is not a class of this checkpoint");
    std::vector<int32_t> tokens = pi.tok.fn()(read_score_file(r.path)).ids;
    PagePrediction p = predict_page(pi, tokens);
    predictions.push_back(p.predicted);
    truth.push_back(it->second);
    pred_lines << prediction_line(r, p, pi.labels.names) << '\n';
  }

  MetricsReport report = compute_metrics(predictions, truth, pi.state.config.n_classes);
  report.class_names = pi.labels.names;
  RunMeta meta{cfg.config_hash, cfg.seed, fingerprint, arch_name(pi.state.config.arch),
               pi.multicrop ? "page-multicrop" : "page-singlecrop"};
  write_file_text(cfg.get_string("metrics_out"), render_metrics(report, meta));

  if (cfg.has("predictions_out")) {
    std::string header = "# page predictions (" + artifact_header(cfg) + ")\n";
    write_file_text(cfg.get_string("predictions_out"), header + pred_lines.str());
  }
  std::cout << "evaluate: " << manifest.size() << " pages, accuracy " << dtos(report.accuracy)
            << ", macro_f1 " << dtos(report.macro_f1) << "\n";
  return 0;
}

int stage_predict(const RunConfig& cfg) {
  Manifest manifest = load_filtered_manifest(cfg, 0);
  PageInference pi = load_page_inference(cfg);

  std::ostringstream out;
  out << "# page predictions (" << artifact_header(cfg) << ")\n";
  out << "# piece_id\tpage\tpredicted\tcrops\tprobabilities[";
  for (size_t c = 0; c < pi.labels.names.size(); c++)
    out << (c ? " " : "") << pi.labels.names[c];
  out << "]\n";
  for (const auto& r : manifest.records) {
    std::vector<int32_t> tokens = pi.tok.fn()(read_score_file(r.path)).ids;
    PagePrediction p = predict_page(pi, tokens);
    out << prediction_line(r, p, pi.labels.names) << '\n';
  }
  write_file_text(cfg.get_string("out"), out.str());
  std::cout << "predict: " << manifest.size() << " pages -> " << cfg.get_string("out") << "\n";
  return 0;
}

int stage_embed(const RunConfig& cfg) {
  Manifest manifest = load_filtered_manifest(cfg, 0);
  PageInference pi = load_page_inference(cfg);

  std::ostringstream out;
  out << "# style embeddings (" << artifact_header(cfg) << ")\n";
  bool first = true;
  for (const auto& r : manifest.records) {
    std::vector<int32_t> tokens = pi.tok.fn()(read_score_file(r.path)).ids;
    StyleEmbedding e =
        extract_embedding(pi.state, tokens, r.piece_id + ":" + std::to_string(r.page));
    if (first) {
      out << "dim " << e.feature.size() << '\n';
      first = false;
    }
    out << e.page_id << '\t';
    for (int i = 0; i < e.feature.size(); i++) {
      if (i) out << ' ';
      out << ftos(static_cast<float>(e.feature(i)));
    }
    out << '\n';
  }
  write_file_text(cfg.get_string("out"), out.str());
  std::cout << "embed: " << manifest.size() << " pages -> " << cfg.get_string("out") << "\n";
  return 0;
}

}  // namespace

int run_stage(const RunConfig& cfg) {
  switch (cfg.stage) {
    case Stage::synth: return stage_synth(cfg);
    case Stage::encode: return stage_encode(cfg);
    case Stage::train_tokenizer: return stage_train_tokenizer(cfg);
    case Stage::pretrain: return stage_pretrain(cfg, false);
    case Stage::lm_finetune: return stage_pretrain(cfg, true);
    case Stage::finetune: return stage_finetune(cfg);
    case Stage::evaluate: return stage_evaluate(cfg);
    case Stage::predict: return stage_predict(cfg);
    case Stage::embed: return stage_embed(cfg);
  }
  fail(Errc::config, "unknown stage");
}

}  // namespace stylus
