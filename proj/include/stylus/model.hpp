#pragma once

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "stylus/autograd.hpp"
#include "stylus/tokenizer.hpp"

namespace stylus {

enum class Arch : uint8_t { lstm = 0, causal = 1, masked = 2, cnn = 3 };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

struct ModelConfig {
  Arch arch = Arch::causal;
  int vocab_size = 0;
  int embed_dim = 128;
  int hidden_dim = 128;
  int n_layers = 2;
  int n_heads = 4;
  int context = 130;
  int n_classes = 0;  // 0 = language-model head

  // lstm regularization: embedding, input, recurrent-weight, output
  double dropout_embed = 0.02;
  double dropout_input = 0.25;
  double dropout_weight = 0.2;
  double dropout_output = 0.1;
  // transformer: attention probabilities, embedding/residual
  double dropout_attn = 0.1;
  double dropout_resid = 0.1;
  // classifier head (lstm head dense layers)
  double dropout_head = 0.1;

  int cnn_kernel = 5;
  int cnn_channels() const { return hidden_dim; }
  int mlp_dim() const { return 4 * hidden_dim; }
  int head_dim() const { return n_heads > 0 ? hidden_dim / n_heads : 0; }

  bool is_transformer() const { return arch == Arch::causal || arch == Arch::masked; }
  bool is_lm() const { return n_classes == 0; }

  void validate() const;
  ModelConfig with_dropout_disabled() const;
};

struct NamedTensor {
  std::string name;
  ag::Mat value;
  bool trainable = true;
};

struct ModelState {
  ModelConfig config;
  uint64_t vocab_hash = 0;
  int fragment_length = 0;  // classifier training crop length; 0 for LMs
  std::vector<std::string> class_names;  // classifier label order
  std::vector<NamedTensor> tensors;

  void add(const std::string& name, ag::Mat value, bool trainable = true);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  ag::Mat& at(const std::string& name);
  const ag::Mat& at(const std::string& name) const;
  const NamedTensor& tensor(const std::string& name) const;
  int64_t parameter_count() const;

 private:
  std::unordered_map<std::string, size_t> index_;
};

// Fresh parameters, deterministic in (seed, tensor name).
ModelState init_model(const ModelConfig& config, uint64_t vocab_hash, uint64_t seed);

// Copies every same-named, same-shaped tensor of `pretrained` into `state`
// (the body transfer when finetuning); returns the names copied.
std::vector<std::string> init_from_pretrained(ModelState& state, const ModelState& pretrained);

// ---- layer groups (input-side first; discriminative lrs / unfreezing) ----

int n_layer_groups(const ModelConfig& config);
int group_of_tensor(const ModelConfig& config, const std::string& name);

// ---- batched forward graphs ----

struct Batch {
  std::vector<int32_t> ids;  // item-major, row i*T+t
  int batch = 0;
  int length = 0;

  static Batch from(const std::vector<std::vector<int32_t>>& seqs);
  int32_t at(int item, int t) const { return ids[static_cast<size_t>(item) * length + t]; }
};

struct ForwardTrace {
  // softmax attention probabilities, one matrix per (layer, item, head)
  std::vector<ag::Mat> attention;
};

struct ForwardOptions {
  bool training = false;
  uint64_t dropout_seed = 0;
  ForwardTrace* trace = nullptr;
  const std::set<std::string>* frozen = nullptr;  // leaves without gradients
};

struct BnBatchStats {
  std::string buffer_prefix;  // e.g. "head.bn1"
  ag::Mat mean;
  ag::Mat var;
};

struct ModelGraph {
  std::unordered_map<std::string, ag::Var> params;
  ag::Var hidden;   // LM: (B*T) x d final hidden states; classifier: pre-head feature
  ag::Var logits;   // LM: (B*T) x V; classifier: B x n_classes
  ag::Var feature;  // classifier feature entering the final dense layer (B x f)
  std::vector<BnBatchStats> bn_stats;  // batch statistics for running updates
};

ModelGraph build_lm_graph(ag::Tape& tape, const ModelState& state, const Batch& batch,
                          const ForwardOptions& opt);
ModelGraph build_classifier_graph(ag::Tape& tape, const ModelState& state, const Batch& batch,
                                  const ForwardOptions& opt);

// ---- losses ----

ag::Var next_token_loss(ag::Tape& tape, const ModelGraph& graph, const Batch& batch);

struct MaskedBatch {
  Batch corrupted;
  std::vector<int> target_rows;     // item-major row indices of corrupted positions
  std::vector<int> target_ids;      // original tokens at those rows
  bool empty() const { return target_rows.empty(); }  // skip-batch signal
};

ag::Var masked_loss(ag::Tape& tape, const ModelGraph& graph, const MaskedBatch& batch);
ag::Var classification_loss(ag::Tape& tape, const ModelGraph& graph,
                            const std::vector<int>& labels);

// ---- masked-LM corruption ----

struct MaskPolicy {
  double p_mask = 0.8;    // -> <mask>
  double p_random = 0.1;  // -> random non-special token
};

struct MaskResult {
  std::vector<int32_t> tokens;
  std::vector<int> positions;
  std::vector<int32_t> targets;
};

// Each non-special position is selected independently with p_select; selected
// positions become <mask> / a random token / stay, per policy.
MaskResult mask_inputs(const std::vector<int32_t>& tokens, double p_select, int vocab_size,
                       uint64_t seed, const MaskPolicy& policy = {});

MaskedBatch corrupt_batch(const Batch& batch, double p_select, int vocab_size, uint64_t seed,
                          const MaskPolicy& policy = {});

// ---- single-sequence forwards (eval mode, dropout off) ----

struct ForwardOutput {
  ag::Mat hidden;  // T x d
  ag::Mat logits;  // T x V
};

ForwardOutput forward_lm(const ModelState& state, const std::vector<int32_t>& tokens,
                         ForwardTrace* trace = nullptr);

struct ClassifierOutput {
  Eigen::VectorXd logits;   // n_classes
  Eigen::VectorXd feature;  // input of the final dense layer
};

ClassifierOutput forward_classifier(const ModelState& state, const std::vector<int32_t>& tokens,
                                    ForwardTrace* trace = nullptr);

// ---- finite-difference gradient check ----

enum class CheckLoss { next_token, masked, classify };

struct GradCheckSpec {
  CheckLoss loss = CheckLoss::next_token;
  std::vector<int> labels;   // classify
  MaskedBatch masked;        // masked
  int entries_per_tensor = 24;
  uint64_t seed = 7;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
};

// Central differences against the analytic gradient on a seeded subsample of
// entries; requires all dropout rates zero.
GradCheckResult grad_check(ModelState& state, const Batch& batch, const GradCheckSpec& spec,
                           double epsilon = 1e-5);

}  // namespace stylus
