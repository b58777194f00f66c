#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stylus/inference.hpp"

using namespace stylus;

namespace {

ModelState toy_classifier(Arch arch, uint64_t seed = 3) {
  ModelConfig c;
  c.arch = arch;
  c.vocab_size = 48;
  c.embed_dim = 16;
  c.hidden_dim = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.context = 20;
  c.n_classes = 4;
  c.cnn_kernel = 3;
  c = c.with_dropout_disabled();
  ModelState s = init_model(c, 1, seed);
  s.fragment_length = 8;
  s.class_names = {"a", "b", "c", "d"};
  return s;
}

std::vector<int32_t> page_tokens(int len, uint64_t seed = 7) {
  Rng rng(seed);
  std::vector<int32_t> out;
  for (int i = 0; i < len; i++)
    out.push_back(kNumSpecials + static_cast<int32_t>(rng.next_index(40)));
  return out;
}

}  // namespace

TEST_CASE("crop enumeration with 50 percent overlap") {
  auto crops = enumerate_crops(256, 64);
  REQUIRE(crops.size() == 7);  // floor((256-64)/32)+1
  for (size_t k = 0; k < crops.size(); k++) {
    CHECK(crops[k].first == static_cast<int>(k) * 32);
    CHECK(crops[k].second == crops[k].first + 64);
  }

  auto exact = enumerate_crops(160, 64);
  REQUIRE(exact.size() == 4);
  CHECK(exact.back().second == 160);

  auto shorter = enumerate_crops(50, 64);
  REQUIRE(shorter.size() == 1);
  CHECK(shorter[0] == std::pair<int, int>{0, 50});

  // a tail crop appears when the stride misses the end
  auto tail = enumerate_crops(100, 64);
  REQUIRE(tail.size() == 3);
  CHECK(tail[0] == std::pair<int, int>{0, 64});
  CHECK(tail[1] == std::pair<int, int>{32, 96});
  CHECK(tail[2] == std::pair<int, int>{36, 100});
}

TEST_CASE("crops cover every token index") {
  for (int total : {5, 64, 100, 131, 256}) {
    auto crops = enumerate_crops(total, 64);
    std::vector<bool> covered(static_cast<size_t>(total), false);
    for (auto [s, e] : crops)
      for (int i = s; i < e; i++) covered[static_cast<size_t>(i)] = true;
    for (bool c : covered) CHECK(c);
  }
}

TEST_CASE("predict_single yields a normalized distribution") {
  for (Arch arch : {Arch::lstm, Arch::causal, Arch::masked, Arch::cnn}) {
    ModelState state = toy_classifier(arch);
    PagePrediction p = predict_single(state, page_tokens(12));
    CHECK(p.crop_count == 1);
    CHECK(std::abs(p.probabilities.sum() - 1.0) < 1e-6);
    CHECK(p.probabilities.minCoeff() >= 0.0);
    CHECK_FALSE(p.truncated);

    // shorter than the training fragment length is accepted
    PagePrediction shortp = predict_single(state, page_tokens(3));
    CHECK(std::abs(shortp.probabilities.sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("predict_single truncates over-context input from the head") {
  ModelState state = toy_classifier(Arch::causal);
  std::vector<int32_t> longpage = page_tokens(50);
  PagePrediction p = predict_single(state, longpage);
  CHECK(p.truncated);

  // equals the prediction on the kept tail
  std::vector<int32_t> tail(longpage.end() - (state.config.context - 2), longpage.end());
  PagePrediction q = predict_single(state, tail);
  CHECK(p.probabilities == q.probabilities);
}

TEST_CASE("empty input is rejected") {
  ModelState state = toy_classifier(Arch::causal);
  try {
    predict_single(state, {});
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_input);
  }
  CHECK_THROWS_AS(predict_multicrop(state, {}, 8), Error);
}

TEST_CASE("multicrop averages per-crop distributions") {
  ModelState state = toy_classifier(Arch::masked);
  std::vector<int32_t> tokens = page_tokens(14);
  PagePrediction multi = predict_multicrop(state, tokens, 8);
  auto crops = enumerate_crops(14, 8);
  CHECK(multi.crop_count == static_cast<int>(crops.size()));

  Eigen::VectorXd manual = Eigen::VectorXd::Zero(4);
  for (auto [s, e] : crops) {
    std::vector<int32_t> crop(tokens.begin() + s, tokens.begin() + e);
    manual += predict_single(state, crop).probabilities;
  }
  manual /= static_cast<double>(crops.size());
  CHECK((multi.probabilities - manual).cwiseAbs().maxCoeff() == 0.0);
  CHECK(std::abs(multi.probabilities.sum() - 1.0) < 1e-6);
}

TEST_CASE("multicrop with crop >= length reduces to predict_single bit-exactly") {
  ModelState state = toy_classifier(Arch::lstm);
  std::vector<int32_t> tokens = page_tokens(10);
  PagePrediction single = predict_single(state, tokens);
  PagePrediction multi = predict_multicrop(state, tokens, 16);
  CHECK(multi.crop_count == 1);
  CHECK(multi.probabilities == single.probabilities);
  CHECK(multi.predicted == single.predicted);
}

TEST_CASE("identical crops average to the same distribution") {
  ModelState state = toy_classifier(Arch::cnn);
  std::vector<int32_t> constant(32, 9);  // every crop sees the same input
  PagePrediction one = predict_single(state, std::vector<int32_t>(8, 9));
  PagePrediction multi = predict_multicrop(state, constant, 8);
  CHECK((multi.probabilities - one.probabilities).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("argmax ties break toward the lowest class index") {
  ModelState state = toy_classifier(Arch::cnn);
  state.at("head.fc.w").setZero();
  state.at("head.fc.b").setZero();  // all logits equal -> uniform tie
  PagePrediction p = predict_single(state, page_tokens(10));
  CHECK(p.predicted == 0);
}

TEST_CASE("per-arch inference defaults") {
  CHECK_FALSE(multicrop_default(Arch::cnn));
  CHECK(multicrop_default(Arch::lstm));
  CHECK(multicrop_default(Arch::causal));
  CHECK(multicrop_default(Arch::masked));
}

TEST_CASE("style embeddings are deterministic and sized by the head input") {
  for (Arch arch : {Arch::lstm, Arch::causal, Arch::masked, Arch::cnn}) {
    ModelState state = toy_classifier(arch);
    std::vector<int32_t> tokens = page_tokens(12);
    StyleEmbedding a = extract_embedding(state, tokens, "p:0");
    StyleEmbedding b = extract_embedding(state, tokens, "p:0");
    CHECK(a.feature == b.feature);  // dropout disabled at inference
    CHECK(a.page_id == "p:0");
    int expect = arch == Arch::lstm ? state.config.hidden_dim
                                    : (arch == Arch::cnn ? state.config.cnn_channels()
                                                         : state.config.hidden_dim);
    CHECK(a.feature.size() == expect);
  }
}

TEST_CASE("embedding works for pages outside the training label set") {
  ModelState state = toy_classifier(Arch::masked);
  StyleEmbedding e = extract_embedding(state, page_tokens(9, 123), "novel_composer_piece:4");
  CHECK(e.feature.size() == state.config.hidden_dim);
  CHECK(e.feature.allFinite());
}

TEST_CASE("lm checkpoints cannot predict") {
  ModelConfig c;
  c.arch = Arch::causal;
  c.vocab_size = 32;
  c.embed_dim = c.hidden_dim = 8;
  c.n_layers = 1;
  c.n_heads = 1;
  c.context = 16;
  ModelState lm = init_model(c, 1, 2);
  CHECK_THROWS_AS(predict_single(lm, page_tokens(5)), Error);
  CHECK_THROWS_AS(extract_embedding(lm, page_tokens(5), "x"), Error);
}
