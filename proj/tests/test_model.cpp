#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stylus/model.hpp"

using namespace stylus;
using ag::Mat;

namespace {

ModelConfig tiny_config(Arch arch, int n_classes = 0) {
  ModelConfig c;
  c.arch = arch;
  c.vocab_size = 64;
  c.embed_dim = 16;
  c.hidden_dim = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.context = 24;
  c.n_classes = n_classes;
  c.cnn_kernel = 3;
  return c;
}

std::vector<int32_t> random_tokens(Rng& rng, int len, int vocab) {
  std::vector<int32_t> out(static_cast<size_t>(len));
  for (auto& t : out)
    t = kNumSpecials + static_cast<int32_t>(rng.next_index(static_cast<uint64_t>(vocab - kNumSpecials)));
  return out;
}

std::vector<int32_t> wrapped_tokens(Rng& rng, int len, int vocab) {
  std::vector<int32_t> inner = random_tokens(rng, len - 2, vocab);
  TokenSequence seq;
  seq.ids = inner;
  return add_specials(seq).ids;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = tiny_config(Arch::causal);
  c.n_heads = 3;  // does not divide 16
  CHECK_THROWS_AS(c.validate(), Error);

  c = tiny_config(Arch::causal);
  c.embed_dim = 8;  // tying requires embed == hidden
  CHECK_THROWS_AS(c.validate(), Error);

  c = tiny_config(Arch::cnn);  // classifier-only arch
  CHECK_THROWS_AS(c.validate(), Error);
  c.n_classes = 3;
  c.validate();
}

TEST_CASE("initialization is deterministic in the seed") {
  ModelConfig c = tiny_config(Arch::causal);
  ModelState a = init_model(c, 1, 42);
  ModelState b = init_model(c, 1, 42);
  ModelState other = init_model(c, 1, 43);
  REQUIRE(a.tensors.size() == b.tensors.size());
  bool any_diff = false;
  for (size_t i = 0; i < a.tensors.size(); i++) {
    CHECK(a.tensors[i].value == b.tensors[i].value);
    if (a.tensors[i].value != other.tensors[i].value) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("causal logits ignore future tokens bit-exactly") {
  ModelConfig c = tiny_config(Arch::causal).with_dropout_disabled();
  ModelState state = init_model(c, 1, 7);
  Rng rng(19);
  std::vector<int32_t> tokens = random_tokens(rng, 12, c.vocab_size);

  ForwardOutput base = forward_lm(state, tokens);
  for (int t : {4, 8, 11}) {
    std::vector<int32_t> altered = tokens;
    for (size_t i = static_cast<size_t>(t); i < altered.size(); i++)
      altered[i] = kNumSpecials + static_cast<int32_t>((altered[i] + 3) % (c.vocab_size - kNumSpecials));
    ForwardOutput out = forward_lm(state, altered);
    for (int p = 0; p < t; p++)
      for (int v = 0; v < c.vocab_size; v++)
        CHECK(out.logits(p, v) == base.logits(p, v));  // bitwise
    bool changed = false;
    for (int v = 0; v < c.vocab_size; v++)
      if (out.logits(t, v) != base.logits(t, v)) changed = true;
    CHECK(changed);
  }
}

TEST_CASE("masked arch is bidirectional") {
  ModelConfig c = tiny_config(Arch::masked).with_dropout_disabled();
  ModelState state = init_model(c, 1, 7);
  Rng rng(23);
  std::vector<int32_t> tokens = random_tokens(rng, 10, c.vocab_size);
  ForwardOutput base = forward_lm(state, tokens);

  std::vector<int32_t> altered = tokens;
  altered.back() = kNumSpecials + static_cast<int32_t>((altered.back() + 5) % (c.vocab_size - kNumSpecials));
  ForwardOutput out = forward_lm(state, altered);
  bool changed = false;
  for (int v = 0; v < c.vocab_size; v++)
    if (out.logits(0, v) != base.logits(0, v)) changed = true;
  CHECK(changed);  // perturbing the last token reaches position 0
}

TEST_CASE("zero decoder gives a uniform softmax with perplexity exactly V") {
  ModelConfig c = tiny_config(Arch::causal).with_dropout_disabled();
  c.vocab_size = 32;  // exp(log(32)) == 32 in double arithmetic
  ModelState state = init_model(c, 1, 7);
  state.at("embed.tokens").setZero();
  state.at("decoder.bias").setZero();

  Rng rng(29);
  std::vector<int32_t> tokens = random_tokens(rng, 9, c.vocab_size);  // 8 predicted positions
  ForwardOutput out = forward_lm(state, tokens);

  for (int p = 0; p < static_cast<int>(tokens.size()); p++) {
    Eigen::VectorXd probs = ag::softmax(out.logits.row(p).transpose());
    for (int v = 0; v < c.vocab_size; v++) CHECK(probs(v) == 1.0 / 32.0);
  }

  ag::Tape tape;
  Batch batch = Batch::from({tokens});
  ModelGraph g = build_lm_graph(tape, state, batch, {});
  ag::Var loss = next_token_loss(tape, g, batch);
  CHECK(tape.value(loss)(0, 0) == std::log(32.0));
  CHECK(std::exp(tape.value(loss)(0, 0)) == 32.0);
}

TEST_CASE("weight tying: an embedding row edit moves exactly that decoder column") {
  ModelConfig c = tiny_config(Arch::causal).with_dropout_disabled();
  ModelState state = init_model(c, 1, 7);
  Rng rng(31);
  std::vector<int32_t> tokens = random_tokens(rng, 8, c.vocab_size);

  // pick a token id that does not occur in the input: hidden states stay put
  int edited = c.vocab_size - 1;
  for (int32_t t : tokens) REQUIRE(t != edited);

  ForwardOutput base = forward_lm(state, tokens);
  state.at("embed.tokens").row(edited).array() += 0.25;
  ForwardOutput out = forward_lm(state, tokens);

  for (int p = 0; p < static_cast<int>(tokens.size()); p++) {
    CHECK(out.logits(p, edited) != base.logits(p, edited));
    for (int v = 0; v < c.vocab_size; v++)
      if (v != edited) CHECK(out.logits(p, v) == base.logits(p, v));
    CHECK((out.hidden.row(p) - base.hidden.row(p)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("dropout: disabled forward is deterministic, seeded forward reproducible") {
  ModelConfig c = tiny_config(Arch::lstm);
  c.n_classes = 0;
  ModelState state = init_model(c, 1, 7);
  Rng rng(37);
  std::vector<int32_t> tokens = random_tokens(rng, 10, c.vocab_size);
  Batch batch = Batch::from({tokens});

  auto run = [&](bool training, uint64_t seed) {
    ag::Tape tape;
    ForwardOptions opt;
    opt.training = training;
    opt.dropout_seed = seed;
    ModelGraph g = build_lm_graph(tape, state, batch, opt);
    return Mat(tape.value(g.logits));
  };

  CHECK(run(false, 1) == run(false, 2));       // eval ignores the seed
  CHECK(run(true, 5) == run(true, 5));         // same seed, same masks
  CHECK(run(true, 5) != run(true, 6));         // different seed, different masks
}

TEST_CASE("classifier head shapes") {
  Rng rng(41);

  ModelConfig lstm_c = tiny_config(Arch::lstm, 9).with_dropout_disabled();
  ModelState lstm_m = init_model(lstm_c, 1, 3);
  CHECK(lstm_m.at("head.fc1.w").cols() == 3 * lstm_c.hidden_dim);  // concat pooling
  ClassifierOutput lstm_out =
      forward_classifier(lstm_m, random_tokens(rng, 12, lstm_c.vocab_size));
  CHECK(lstm_out.logits.size() == 9);
  CHECK(lstm_out.feature.size() == lstm_c.hidden_dim);

  ModelConfig causal_c = tiny_config(Arch::causal, 9).with_dropout_disabled();
  ModelState causal_m = init_model(causal_c, 1, 3);
  ClassifierOutput causal_out =
      forward_classifier(causal_m, wrapped_tokens(rng, 12, causal_c.vocab_size));
  CHECK(causal_out.logits.size() == 9);
  CHECK(causal_out.feature.size() == causal_c.hidden_dim);

  ModelConfig cnn_c = tiny_config(Arch::cnn, 9).with_dropout_disabled();
  ModelState cnn_m = init_model(cnn_c, 1, 3);
  ClassifierOutput cnn_out = forward_classifier(cnn_m, random_tokens(rng, 12, cnn_c.vocab_size));
  CHECK(cnn_out.logits.size() == 9);
  CHECK(cnn_out.feature.size() == cnn_c.cnn_channels());
}

TEST_CASE("transformer classifier enforces the special-token contract") {
  ModelConfig c = tiny_config(Arch::masked, 3).with_dropout_disabled();
  ModelState state = init_model(c, 1, 3);
  Rng rng(43);
  std::vector<int32_t> bare = random_tokens(rng, 8, c.vocab_size);
  try {
    forward_classifier(state, bare);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::input_contract);
  }
}

TEST_CASE("context overflow raises") {
  ModelConfig c = tiny_config(Arch::causal).with_dropout_disabled();
  ModelState state = init_model(c, 1, 3);
  Rng rng(47);
  try {
    forward_lm(state, random_tokens(rng, c.context + 1, c.vocab_size));
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::context_overflow);
  }
}

TEST_CASE("cnn pooled feature of a constant input equals the single local feature") {
  ModelConfig c = tiny_config(Arch::cnn, 3).with_dropout_disabled();
  ModelState state = init_model(c, 1, 3);
  std::vector<int32_t> constant(15, 12);
  ClassifierOutput out = forward_classifier(state, constant);

  std::vector<int32_t> shorter(c.n_layers * (c.cnn_kernel - 1) + 1, 12);  // one valid window
  ClassifierOutput single = forward_classifier(state, shorter);
  CHECK((out.feature - single.feature).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention rows sum to one") {
  for (Arch arch : {Arch::causal, Arch::masked}) {
    ModelConfig c = tiny_config(arch).with_dropout_disabled();
    ModelState state = init_model(c, 1, 5);
    Rng rng(53);
    ForwardTrace trace;
    forward_lm(state, random_tokens(rng, 10, c.vocab_size), &trace);
    REQUIRE(trace.attention.size() == static_cast<size_t>(c.n_layers * c.n_heads));
    for (const Mat& probs : trace.attention)
      for (Eigen::Index r = 0; r < probs.rows(); r++)
        CHECK(std::abs(probs.row(r).sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("mask_inputs corruption") {
  Rng rng(59);
  std::vector<int32_t> tokens = random_tokens(rng, 50, 64);
  tokens[0] = kBosId;
  tokens[49] = kEosId;

  MaskResult none = mask_inputs(tokens, 0.0, 64, 1);
  CHECK(none.tokens == tokens);
  CHECK(none.positions.empty());

  MaskPolicy always_mask{1.0, 0.0};
  MaskResult all = mask_inputs(tokens, 1.0, 64, 1, always_mask);
  CHECK(all.positions.size() == 48);  // specials are never selected
  for (size_t i = 1; i < 49; i++) CHECK(all.tokens[i] == kMaskId);
  CHECK(all.tokens[0] == kBosId);
  CHECK(all.tokens[49] == kEosId);
  for (size_t k = 0; k < all.positions.size(); k++)
    CHECK(all.targets[k] == tokens[static_cast<size_t>(all.positions[k])]);

  MaskResult a = mask_inputs(tokens, 0.3, 64, 123);
  MaskResult b = mask_inputs(tokens, 0.3, 64, 123);
  CHECK(a.tokens == b.tokens);
  CHECK(a.positions == b.positions);

  // the 80/10/10 split leaves some selected positions unmasked
  MaskResult mixed = mask_inputs(tokens, 1.0, 64, 9);
  int kept = 0, masked = 0, randomized = 0;
  for (size_t k = 0; k < mixed.positions.size(); k++) {
    int32_t now = mixed.tokens[static_cast<size_t>(mixed.positions[k])];
    if (now == kMaskId)
      masked++;
    else if (now == mixed.targets[k])
      kept++;
    else
      randomized++;
  }
  CHECK(masked > 30);
  CHECK(kept + randomized > 0);
}

TEST_CASE("classification loss of a zero-logit model is ln n_classes") {
  ModelConfig c = tiny_config(Arch::cnn, 9).with_dropout_disabled();
  ModelState state = init_model(c, 1, 3);
  state.at("head.fc.w").setZero();
  state.at("head.fc.b").setZero();

  Rng rng(61);
  Batch batch = Batch::from({random_tokens(rng, 10, c.vocab_size),
                             random_tokens(rng, 10, c.vocab_size)});
  ag::Tape tape;
  ModelGraph g = build_classifier_graph(tape, state, batch, {});
  ag::Var loss = classification_loss(tape, g, {0, 4});
  CHECK(tape.value(loss)(0, 0) == doctest::Approx(std::log(9.0)).epsilon(1e-12));
}

TEST_CASE("masked loss skips batches with no targets") {
  MaskedBatch empty;
  empty.corrupted.batch = 1;
  empty.corrupted.length = 4;
  ag::Tape tape;
  ModelGraph g;
  CHECK(empty.empty());
  CHECK_THROWS_AS(masked_loss(tape, g, empty), Error);
}

// gradient checks: the loss surface of every architecture against central
// finite differences
TEST_CASE("grad check: causal transformer lm") {
  ModelConfig c = tiny_config(Arch::causal).with_dropout_disabled();
  ModelState state = init_model(c, 1, 11);
  Rng rng(67);
  Batch batch = Batch::from({random_tokens(rng, 9, c.vocab_size),
                             random_tokens(rng, 9, c.vocab_size)});
  GradCheckSpec spec;
  spec.loss = CheckLoss::next_token;
  spec.entries_per_tensor = 10;
  GradCheckResult r = grad_check(state, batch, spec);
  INFO("worst tensor: ", r.worst_tensor);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("grad check: masked transformer lm") {
  ModelConfig c = tiny_config(Arch::masked).with_dropout_disabled();
  ModelState state = init_model(c, 1, 11);
  Rng rng(71);
  Batch batch = Batch::from({random_tokens(rng, 9, c.vocab_size),
                             random_tokens(rng, 9, c.vocab_size)});
  GradCheckSpec spec;
  spec.loss = CheckLoss::masked;
  spec.masked = corrupt_batch(batch, 0.4, c.vocab_size, 5);
  REQUIRE_FALSE(spec.masked.empty());
  spec.entries_per_tensor = 10;
  GradCheckResult r = grad_check(state, batch, spec);
  INFO("worst tensor: ", r.worst_tensor);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("grad check: lstm lm and classifier") {
  ModelConfig c = tiny_config(Arch::lstm).with_dropout_disabled();
  ModelState state = init_model(c, 1, 11);
  Rng rng(73);
  Batch batch = Batch::from({random_tokens(rng, 7, c.vocab_size),
                             random_tokens(rng, 7, c.vocab_size),
                             random_tokens(rng, 7, c.vocab_size)});
  GradCheckSpec spec;
  spec.loss = CheckLoss::next_token;
  spec.entries_per_tensor = 10;
  GradCheckResult r = grad_check(state, batch, spec);
  INFO("worst tensor: ", r.worst_tensor);
  CHECK(r.max_rel_error < 1e-4);

  ModelConfig cc = tiny_config(Arch::lstm, 4).with_dropout_disabled();
  ModelState cls = init_model(cc, 1, 11);
  GradCheckSpec cspec;
  cspec.loss = CheckLoss::classify;
  cspec.labels = {0, 2, 3};
  cspec.entries_per_tensor = 8;
  GradCheckResult cr = grad_check(cls, batch, cspec);
  INFO("worst tensor: ", cr.worst_tensor);
  CHECK(cr.max_rel_error < 1e-4);
}

TEST_CASE("grad check: cnn classifier") {
  ModelConfig c = tiny_config(Arch::cnn, 4).with_dropout_disabled();
  ModelState state = init_model(c, 1, 11);
  Rng rng(79);
  Batch batch = Batch::from({random_tokens(rng, 10, c.vocab_size),
                             random_tokens(rng, 10, c.vocab_size)});
  GradCheckSpec spec;
  spec.loss = CheckLoss::classify;
  spec.labels = {1, 3};
  spec.entries_per_tensor = 12;
  GradCheckResult r = grad_check(state, batch, spec);
  INFO("worst tensor: ", r.worst_tensor);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("grad check refuses active dropout") {
  ModelConfig c = tiny_config(Arch::causal);  // default dropout rates
  ModelState state = init_model(c, 1, 11);
  Rng rng(83);
  Batch batch = Batch::from({random_tokens(rng, 8, c.vocab_size)});
  GradCheckSpec spec;
  CHECK_THROWS_AS(grad_check(state, batch, spec), Error);
}

TEST_CASE("pretrained body transfer copies shared tensors only") {
  ModelConfig lm_c = tiny_config(Arch::causal).with_dropout_disabled();
  ModelState lm = init_model(lm_c, 99, 3);
  ModelConfig cls_c = lm_c;
  cls_c.n_classes = 5;
  ModelState cls = init_model(cls_c, 99, 4);

  Mat head_before = cls.at("head.fc.w");
  auto copied = init_from_pretrained(cls, lm);
  CHECK(cls.at("embed.tokens") == lm.at("embed.tokens"));
  CHECK(cls.at("block0.attn.wqkv") == lm.at("block0.attn.wqkv"));
  CHECK(cls.at("head.fc.w") == head_before);  // fresh head untouched
  for (const auto& name : copied) CHECK(name.rfind("head.", 0) != 0);
}

TEST_CASE("layer groups partition tensors from input to output") {
  for (Arch arch : {Arch::lstm, Arch::causal, Arch::masked, Arch::cnn}) {
    ModelConfig c = tiny_config(arch, arch == Arch::cnn ? 3 : 0);
    if (arch == Arch::cnn) c.n_classes = 3;
    ModelState state = init_model(c, 1, 5);
    int G = n_layer_groups(c);
    CHECK(G == c.n_layers + 2);
    for (const auto& t : state.tensors) {
      int g = group_of_tensor(c, t.name);
      CHECK(g >= 0);
      CHECK(g < G);
    }
    CHECK(group_of_tensor(c, "embed.tokens") == 0);
  }
  ModelConfig c = tiny_config(Arch::causal);
  CHECK(group_of_tensor(c, "final.ln.g") == c.n_layers);  // rides with the last block
  CHECK(group_of_tensor(c, "decoder.bias") == c.n_layers + 1);
}
