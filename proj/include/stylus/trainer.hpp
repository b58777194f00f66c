#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "stylus/corpus.hpp"
#include "stylus/metrics.hpp"
#include "stylus/model.hpp"
#include "stylus/schedule.hpp"

namespace stylus {

// A supervised objective over fixed-length sequences: next-token or masked
// language modeling over stream windows, or fragment classification.
struct Objective {
  enum class Kind { next_token, masked, classify };

  Kind kind = Kind::next_token;
  std::vector<std::vector<int32_t>> inputs;
  std::vector<int> labels;  // classify only
  int vocab_size = 0;
  double mask_select = 0.15;
  MaskPolicy mask_policy;

  size_t size() const { return inputs.size(); }

  static Objective lm(Kind kind, std::vector<std::vector<int32_t>> windows, int vocab_size);
  // Adds <s>/</s> around fragments for transformer classifiers.
  static Objective classification(const std::vector<Fragment>& fragments, Arch arch);
};

struct LossBuild {
  ag::Var loss;
  ag::Var ce_rows;  // per-position cross entropies feeding the mean
  ModelGraph graph;
  int n_positions = 0;  // 0 = skip-batch (masked objective with no targets)
};

LossBuild build_objective_loss(ag::Tape& tape, const ModelState& state, const Objective& obj,
                               const std::vector<int>& example_idx, const ForwardOptions& opt,
                               uint64_t corrupt_seed);

// ---- optimizer ----

// Adaptive per-parameter first-order method with decoupled weight decay; the
// first-moment coefficient is the cycled momentum.
class AdamW {
 public:
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void step(ModelState& state, const std::unordered_map<std::string, ag::Mat>& grads,
            const std::function<double(const std::string&)>& lr_of, double beta1);

 private:
  struct Moments {
    ag::Mat m, v;
    int64_t t = 0;
  };
  std::unordered_map<std::string, Moments> moments_;
};

// ---- evaluation ----

struct LmEval {
  double mean_loss = 0.0;
  double perplexity = 0.0;
  int64_t positions = 0;
};

LmEval evaluate_lm(const ModelState& state, const Objective& obj, int batch_size,
                   uint64_t eval_seed = 0);

struct ClassifierEval {
  MetricsReport report;
  std::vector<int> predictions;
};

ClassifierEval evaluate_classifier(const ModelState& state, const Objective& obj, int batch_size);

// ---- training loops ----

struct TrainOptions {
  int batch_size = 32;
  int epochs = 2;
  double lr_max = 1e-3;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  double momentum_high = 0.95;
  double momentum_low = 0.85;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  uint64_t seed = 1;
  std::string log_path;     // "step, lr, momentum, loss" lines when set
  uint64_t config_hash = 0; // embedded in the log header
};

struct TrainTrace {
  std::vector<double> loss;
  std::vector<double> lr;
  std::vector<double> momentum;
  std::vector<double> val_perplexity;  // per epoch (pretraining)
  std::vector<double> val_accuracy;    // per stage (finetuning)
};

// One-cycle LM training; keeps the best-validation-perplexity parameters.
TrainTrace pretrain_lm(ModelState& state, const Objective& train, const Objective* val,
                       const TrainOptions& opts);

struct StageSpec {
  int unfrozen_groups = 1;  // counted from the output side
  int cycles = 1;
  int epochs_per_cycle = 1;
};

struct FinetunePlan {
  double base_lr = 1e-3;    // head group; earlier groups get base/factor^k
  double disc_factor = 2.6;
  std::vector<StageSpec> stages;  // empty -> gradual unfreezing default

  static std::vector<StageSpec> default_stages(int n_groups);
};

struct FinetuneResult {
  TrainTrace trace;
  MetricsReport val_report;
  double train_accuracy = 0.0;
};

FinetuneResult finetune_classifier(ModelState& classifier, const Objective& train,
                                   const Objective* val, const FinetunePlan& plan,
                                   const TrainOptions& opts);

// ---- learning-rate range test ----

struct RangeTestResult {
  std::vector<double> lrs;
  std::vector<double> smoothed;
  std::vector<double> raw;
  std::optional<double> suggestion;  // lr at the steepest smoothed descent
  bool flat = false;
};

RangeTestResult lr_range_test(const ModelState& state, const Objective& obj, double lr_min,
                              double lr_max, int steps, const TrainOptions& opts);

}  // namespace stylus
