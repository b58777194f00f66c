#pragma once

#include <string>
#include <vector>

#include "stylus/model.hpp"

namespace stylus {

struct PagePrediction {
  Eigen::VectorXd probabilities;  // n_classes, sums to 1
  int predicted = 0;              // argmax, lowest index on ties
  int crop_count = 1;
  bool truncated = false;  // input exceeded the context and lost its head
};

// Classifies one variable-length token sequence (raw tokens, no specials;
// they are added here for transformer archs). Inputs longer than the context
// are truncated from the head with a warning; short CNN inputs are padded to
// the receptive field.
PagePrediction predict_single(const ModelState& state, const std::vector<int32_t>& tokens);

// 50%-overlap crop windows covering [0, total); a right-aligned tail crop is
// appended when the stride does not land on the end. total < crop_len yields
// the single crop (0, total).
std::vector<std::pair<int, int>> enumerate_crops(int total, int crop_len);

// Mean of per-crop softmax outputs.
PagePrediction predict_multicrop(const ModelState& state, const std::vector<int32_t>& tokens,
                                 int crop_len);

// The paper's per-arch default: single-crop for the cnn, multi-crop otherwise.
bool multicrop_default(Arch arch);

struct StyleEmbedding {
  Eigen::VectorXd feature;  // input of the final classification layer
  std::string page_id;
};

StyleEmbedding extract_embedding(const ModelState& state, const std::vector<int32_t>& tokens,
                                 std::string page_id);

}  // namespace stylus
