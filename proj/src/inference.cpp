#include "stylus/inference.hpp"

#include <cstdio>

namespace stylus {

namespace {

// receptive field of the stacked valid convolutions
int cnn_min_length(const ModelConfig& cfg) {
  return cfg.n_layers * (cfg.cnn_kernel - 1) + 1;
}

// raw page tokens -> model input: truncate to the context (dropping the head),
// add specials for transformers, pad short cnn inputs
std::vector<int32_t> prepare_input(const ModelState& state, std::vector<int32_t> tokens,
                                   bool* truncated) {
  const ModelConfig& cfg = state.config;
  int budget = cfg.context - (cfg.is_transformer() ? 2 : 0);
  if (static_cast<int>(tokens.size()) > budget) {
    std::fprintf(stderr, "stylus: input of %zu tokens truncated to the last %d\n", tokens.size(),
                 budget);
    tokens.erase(tokens.begin(), tokens.end() - budget);
    if (truncated) *truncated = true;
  }
  if (cfg.arch == Arch::cnn) {
    int min_len = cnn_min_length(cfg);
    while (static_cast<int>(tokens.size()) < min_len) tokens.insert(tokens.begin(), kPadId);
  }
  if (cfg.is_transformer()) {
    TokenSequence seq;
    seq.ids = std::move(tokens);
    return add_specials(seq).ids;
  }
  return tokens;
}

}  // namespace

PagePrediction predict_single(const ModelState& state, const std::vector<int32_t>& tokens) {
  if (state.config.is_lm()) fail(Errc::config, "prediction needs a classifier checkpoint");
  if (tokens.empty()) fail(Errc::empty_input, "cannot classify an empty token sequence");

  PagePrediction out;
  std::vector<int32_t> input = prepare_input(state, tokens, &out.truncated);
  ClassifierOutput fwd = forward_classifier(state, input);
  out.probabilities = ag::softmax(fwd.logits);
  out.predicted = 0;
  for (int c = 1; c < out.probabilities.size(); c++)
    if (out.probabilities(c) > out.probabilities(out.predicted)) out.predicted = c;
  out.crop_count = 1;
  return out;
}

std::vector<std::pair<int, int>> enumerate_crops(int total, int crop_len) {
  if (crop_len < 1) fail(Errc::config, "crop length must be positive");
  if (total < 1) fail(Errc::empty_input, "cannot crop an empty sequence");
  if (total < crop_len) return {{0, total}};

  std::vector<std::pair<int, int>> crops;
  int stride = std::max(1, crop_len / 2);
  for (int start = 0; start + crop_len <= total; start += stride)
    crops.emplace_back(start, start + crop_len);
  if (crops.back().second != total) crops.emplace_back(total - crop_len, total);
  return crops;
}

PagePrediction predict_multicrop(const ModelState& state, const std::vector<int32_t>& tokens,
                                 int crop_len) {
  if (state.config.is_lm()) fail(Errc::config, "prediction needs a classifier checkpoint");
  if (tokens.empty()) fail(Errc::empty_input, "cannot classify an empty token sequence");

  auto crops = enumerate_crops(static_cast<int>(tokens.size()), crop_len);
  PagePrediction out;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(state.config.n_classes);
  for (const auto& [start, end] : crops) {
    std::vector<int32_t> crop(tokens.begin() + start, tokens.begin() + end);
    PagePrediction one = predict_single(state, crop);
    sum += one.probabilities;
    out.truncated = out.truncated || one.truncated;
  }
  out.probabilities = sum / static_cast<double>(crops.size());
  out.predicted = 0;
  for (int c = 1; c < out.probabilities.size(); c++)
    if (out.probabilities(c) > out.probabilities(out.predicted)) out.predicted = c;
  out.crop_count = static_cast<int>(crops.size());
  return out;
}

bool multicrop_default(Arch arch) { return arch != Arch::cnn; }

StyleEmbedding extract_embedding(const ModelState& state, const std::vector<int32_t>& tokens,
                                 std::string page_id) {
  if (state.config.is_lm()) fail(Errc::config, "embedding extraction needs a classifier head");
  if (tokens.empty()) fail(Errc::empty_input, "cannot embed an empty token sequence");
  std::vector<int32_t> input = prepare_input(state, tokens, nullptr);
  ClassifierOutput fwd = forward_classifier(state, input);
  return {fwd.feature, std::move(page_id)};
}

}  // namespace stylus
