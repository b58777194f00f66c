#include "stylus/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace stylus {

using ag::Mat;
using ag::Tape;
using ag::Var;

Objective Objective::lm(Kind kind, std::vector<std::vector<int32_t>> windows, int vocab_size) {
  if (kind == Kind::classify) fail(Errc::config, "classification objective needs fragments");
  Objective o;
  o.kind = kind;
  o.inputs = std::move(windows);
  o.vocab_size = vocab_size;
  if (o.inputs.empty()) fail(Errc::empty_corpus, "language-model objective with no windows");
  return o;
}

Objective Objective::classification(const std::vector<Fragment>& fragments, Arch arch) {
  if (fragments.empty()) fail(Errc::empty_corpus, "classification objective with no fragments");
  Objective o;
  o.kind = Kind::classify;
  bool specials = arch == Arch::causal || arch == Arch::masked;
  o.inputs.reserve(fragments.size());
  o.labels.reserve(fragments.size());
  for (const auto& f : fragments) {
    if (specials) {
      TokenSequence seq;
      seq.ids = f.ids;
      o.inputs.push_back(add_specials(seq).ids);
    } else {
      o.inputs.push_back(f.ids);
    }
    o.labels.push_back(f.label);
  }
  return o;
}

LossBuild build_objective_loss(Tape& tape, const ModelState& state, const Objective& obj,
                               const std::vector<int>& example_idx, const ForwardOptions& opt,
                               uint64_t corrupt_seed) {
  std::vector<std::vector<int32_t>> seqs;
  seqs.reserve(example_idx.size());
  for (int i : example_idx) seqs.push_back(obj.inputs[static_cast<size_t>(i)]);
  Batch batch = Batch::from(seqs);

  LossBuild out;
  switch (obj.kind) {
    case Objective::Kind::next_token: {
      out.graph = build_lm_graph(tape, state, batch, opt);
      std::vector<int> rows, targets;
      for (int i = 0; i < batch.batch; i++)
        for (int t = 0; t + 1 < batch.length; t++) {
          rows.push_back(i * batch.length + t);
          targets.push_back(batch.at(i, t + 1));
        }
      Var picked = tape.rows(out.graph.logits, rows);
      out.ce_rows = tape.cross_entropy_rows(picked, std::move(targets));
      out.loss = tape.mean_all(out.ce_rows);
      out.n_positions = batch.batch * (batch.length - 1);
      break;
    }
    case Objective::Kind::masked: {
      MaskedBatch mb =
          corrupt_batch(batch, obj.mask_select, obj.vocab_size, corrupt_seed, obj.mask_policy);
      out.n_positions = static_cast<int>(mb.target_rows.size());
      if (out.n_positions == 0) return out;  // skip-batch signal
      out.graph = build_lm_graph(tape, state, mb.corrupted, opt);
      Var picked = tape.rows(out.graph.logits, mb.target_rows);
      std::vector<int> targets(mb.target_ids.begin(), mb.target_ids.end());
      out.ce_rows = tape.cross_entropy_rows(picked, std::move(targets));
      out.loss = tape.mean_all(out.ce_rows);
      break;
    }
    case Objective::Kind::classify: {
      out.graph = build_classifier_graph(tape, state, batch, opt);
      std::vector<int> targets;
      targets.reserve(example_idx.size());
      for (int i : example_idx) targets.push_back(obj.labels[static_cast<size_t>(i)]);
      out.ce_rows = tape.cross_entropy_rows(out.graph.logits, std::move(targets));
      out.loss = tape.mean_all(out.ce_rows);
      out.n_positions = batch.batch;
      break;
    }
  }
  return out;
}

// ---- optimizer ----

void AdamW::step(ModelState& state, const std::unordered_map<std::string, Mat>& grads,
                 const std::function<double(const std::string&)>& lr_of, double beta1) {
  for (auto& t : state.tensors) {
    auto it = grads.find(t.name);
    if (it == grads.end()) continue;
    const Mat& g = it->second;
    Moments& mo = moments_[t.name];
    if (mo.t == 0) {
      mo.m = Mat::Zero(g.rows(), g.cols());
      mo.v = Mat::Zero(g.rows(), g.cols());
    }
    mo.t++;
    double lr = lr_of(t.name);
    mo.m = beta1 * mo.m + (1.0 - beta1) * g;
    mo.v = beta2 * mo.v + (1.0 - beta2) * g.cwiseProduct(g);
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(mo.t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(mo.t));
    Mat update =
        (mo.m / bc1).array() / ((mo.v / bc2).array().sqrt() + eps);
    // decoupled decay on weight matrices; vectors (biases, gains) are spared
    if (weight_decay > 0.0 && t.value.rows() > 1 && t.value.cols() > 1)
      t.value -= lr * weight_decay * t.value;
    t.value -= lr * update.matrix();
  }
}

// ---- evaluation ----

static std::vector<std::vector<int>> eval_batches(size_t n, int batch_size) {
  std::vector<std::vector<int>> batches;
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
    std::vector<int> idx;
    for (size_t i = start; i < std::min(n, start + static_cast<size_t>(batch_size)); i++)
      idx.push_back(static_cast<int>(i));
    batches.push_back(std::move(idx));
  }
  return batches;
}

LmEval evaluate_lm(const ModelState& state, const Objective& obj, int batch_size,
                   uint64_t eval_seed) {
  if (obj.kind == Objective::Kind::classify)
    fail(Errc::config, "evaluate_lm needs a language-model objective");
  LmEval out;
  double sum = 0.0;
  int64_t count = 0;
  size_t batch_index = 0;
  for (const auto& idx : eval_batches(obj.size(), batch_size)) {
    Tape tape;
    ForwardOptions opt;  // eval mode
    LossBuild lb = build_objective_loss(tape, state, obj, idx, opt,
                                        derive_seed(eval_seed, "eval_mask", batch_index++));
    if (lb.n_positions == 0) continue;
    const Mat& ces = tape.value(lb.ce_rows);
    for (Eigen::Index i = 0; i < ces.rows(); i++) sum += ces(i, 0);
    count += lb.n_positions;
  }
  if (count == 0) fail(Errc::empty_input, "no predicted positions in evaluation");
  out.mean_loss = sum / static_cast<double>(count);
  out.perplexity = std::exp(out.mean_loss);
  out.positions = count;
  return out;
}

ClassifierEval evaluate_classifier(const ModelState& state, const Objective& obj,
                                   int batch_size) {
  if (obj.kind != Objective::Kind::classify)
    fail(Errc::config, "evaluate_classifier needs a classification objective");
  ClassifierEval out;
  out.predictions.reserve(obj.size());
  for (const auto& idx : eval_batches(obj.size(), batch_size)) {
    std::vector<std::vector<int32_t>> seqs;
    for (int i : idx) seqs.push_back(obj.inputs[static_cast<size_t>(i)]);
    Tape tape;
    ForwardOptions opt;
    ModelGraph g = build_classifier_graph(tape, state, Batch::from(seqs), opt);
    const Mat& logits = tape.value(g.logits);
    for (Eigen::Index r = 0; r < logits.rows(); r++) {
      int best = 0;
      for (Eigen::Index c = 1; c < logits.cols(); c++)
        if (logits(r, c) > logits(r, best)) best = static_cast<int>(c);
      out.predictions.push_back(best);
    }
  }
  out.report = compute_metrics(out.predictions, obj.labels, state.config.n_classes);
  out.report.class_names = state.class_names;
  return out;
}

// ---- training loops ----

namespace {

struct StepLogger {
  std::ofstream file;

  void open(const std::string& path, uint64_t config_hash) {
    if (path.empty()) return;
    file.open(path, std::ios::trunc);
    if (!file) fail(Errc::io, "cannot open training log: " + path);
    file << "# training log: step, lr, momentum, loss (config_hash=" << hex64(config_hash)
         << ")\n";
  }
  void line(int64_t step, double lr, double momentum, double loss) {
    if (!file.is_open()) return;
    file << step << ", " << dtos(lr) << ", " << dtos(momentum) << ", " << dtos(loss) << '\n';
  }
};

std::unordered_map<std::string, Mat> collect_grads(Tape& tape, const ModelState& state,
                                                   const ModelGraph& graph,
                                                   const std::set<std::string>* frozen) {
  std::unordered_map<std::string, Mat> grads;
  for (const auto& t : state.tensors) {
    if (!t.trainable) continue;
    if (frozen && frozen->count(t.name)) continue;
    auto it = graph.params.find(t.name);
    if (it == graph.params.end()) continue;
    grads[t.name] = tape.grad_of(it->second);
  }
  return grads;
}

void update_bn_buffers(ModelState& state, const ModelGraph& graph, double momentum = 0.1) {
  for (const auto& bn : graph.bn_stats) {
    Mat& rm = state.at(bn.buffer_prefix + ".rm");
    Mat& rv = state.at(bn.buffer_prefix + ".rv");
    rm = (1.0 - momentum) * rm + momentum * bn.mean;
    rv = (1.0 - momentum) * rv + momentum * bn.var;
  }
}

std::vector<int> epoch_order(size_t n, uint64_t seed, int epoch) {
  std::vector<int> order(n);
  for (size_t i = 0; i < n; i++) order[i] = static_cast<int>(i);
  Rng rng(derive_seed(seed, "epoch_order", static_cast<uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

OneCycleConfig cycle_from(const TrainOptions& o, int total_steps) {
  OneCycleConfig c;
  c.lr_max = o.lr_max;
  c.total_steps = total_steps;
  c.pct_start = o.pct_start;
  c.div_factor = o.div_factor;
  c.final_div_factor = o.final_div_factor;
  c.momentum_high = o.momentum_high;
  c.momentum_low = o.momentum_low;
  return c;
}

// One scheduled pass: `cycle.total_steps` optimizer steps over shuffled
// batches with per-group learning-rate scaling.
void run_cycle(ModelState& state, const Objective& train, const OneCycleConfig& cycle,
               const TrainOptions& opts, const std::set<std::string>* frozen,
               const std::vector<double>* group_scale, AdamW& adam, int64_t& global_step,
               TrainTrace& trace, StepLogger& log) {
  const int G = n_layer_groups(state.config);
  std::vector<double> scales(static_cast<size_t>(G), 1.0);
  if (group_scale) scales = *group_scale;

  size_t n = train.size();
  int steps_per_epoch = static_cast<int>((n + opts.batch_size - 1) / opts.batch_size);
  int epochs = (cycle.total_steps + steps_per_epoch - 1) / steps_per_epoch;

  int cycle_step = 0;
  for (int epoch = 0; epoch < epochs && cycle_step < cycle.total_steps; epoch++) {
    std::vector<int> order = epoch_order(n, opts.seed, static_cast<int>(global_step) + epoch);
    for (int s = 0; s < steps_per_epoch && cycle_step < cycle.total_steps; s++) {
      std::vector<int> idx(
          order.begin() + s * opts.batch_size,
          order.begin() + std::min<size_t>(n, static_cast<size_t>(s + 1) * opts.batch_size));

      LrMomentum lm = one_cycle(cycle, cycle_step);
      Tape tape;
      ForwardOptions fwd;
      fwd.training = true;
      fwd.dropout_seed = derive_seed(opts.seed, "dropout", static_cast<uint64_t>(global_step));
      fwd.frozen = frozen;
      LossBuild lb = build_objective_loss(
          tape, state, train, idx, fwd,
          derive_seed(opts.seed, "corrupt", static_cast<uint64_t>(global_step)));
      if (lb.n_positions == 0) continue;  // masked batch without targets

      double loss = tape.value(lb.loss)(0, 0);
      if (!std::isfinite(loss))
        fail(Errc::divergence, "non-finite loss at step " + std::to_string(global_step));

      tape.backward(lb.loss);
      auto grads = collect_grads(tape, state, lb.graph, frozen);
      auto lr_of = [&](const std::string& name) {
        return lm.lr * scales[static_cast<size_t>(group_of_tensor(state.config, name))];
      };
      adam.step(state, grads, lr_of, lm.momentum);
      update_bn_buffers(state, lb.graph);

      trace.loss.push_back(loss);
      trace.lr.push_back(lm.lr);
      trace.momentum.push_back(lm.momentum);
      log.line(global_step, lm.lr, lm.momentum, loss);
      cycle_step++;
      global_step++;
    }
  }
}

}  // namespace

TrainTrace pretrain_lm(ModelState& state, const Objective& train, const Objective* val,
                       const TrainOptions& opts) {
  if (!state.config.is_lm()) fail(Errc::config, "pretrain_lm needs a language-model head");
  if (train.size() == 0) fail(Errc::empty_corpus, "no training windows");

  TrainTrace trace;
  StepLogger log;
  log.open(opts.log_path, opts.config_hash);

  size_t n = train.size();
  int steps_per_epoch = static_cast<int>((n + opts.batch_size - 1) / opts.batch_size);
  int total_steps = std::max(2, opts.epochs * steps_per_epoch);
  OneCycleConfig cycle = cycle_from(opts, total_steps);

  AdamW adam;
  adam.beta2 = opts.beta2;
  adam.eps = opts.adam_eps;
  adam.weight_decay = opts.weight_decay;

  int64_t global_step = 0;
  double best_ppl = std::numeric_limits<double>::infinity();
  std::vector<NamedTensor> best_tensors;

  // run epoch-by-epoch so validation can checkpoint the best state
  for (int epoch = 0; epoch < opts.epochs; epoch++) {
    std::vector<int> order = epoch_order(n, opts.seed, epoch);
    for (int s = 0; s < steps_per_epoch; s++) {
      std::vector<int> idx(
          order.begin() + s * opts.batch_size,
          order.begin() + std::min<size_t>(n, static_cast<size_t>(s + 1) * opts.batch_size));
      int step_index = static_cast<int>(global_step);
      if (step_index >= cycle.total_steps) break;
      LrMomentum lm = one_cycle(cycle, step_index);

      Tape tape;
      ForwardOptions fwd;
      fwd.training = true;
      fwd.dropout_seed = derive_seed(opts.seed, "dropout", static_cast<uint64_t>(global_step));
      LossBuild lb = build_objective_loss(
          tape, state, train, idx, fwd,
          derive_seed(opts.seed, "corrupt", static_cast<uint64_t>(global_step)));
      if (lb.n_positions == 0) continue;

      double loss = tape.value(lb.loss)(0, 0);
      if (!std::isfinite(loss))
        fail(Errc::divergence, "non-finite loss at step " + std::to_string(global_step));

      tape.backward(lb.loss);
      auto grads = collect_grads(tape, state, lb.graph, nullptr);
      auto lr_of = [&](const std::string&) { return lm.lr; };
      adam.step(state, grads, lr_of, lm.momentum);
      update_bn_buffers(state, lb.graph);

      trace.loss.push_back(loss);
      trace.lr.push_back(lm.lr);
      trace.momentum.push_back(lm.momentum);
      log.line(global_step, lm.lr, lm.momentum, loss);
      global_step++;
    }

    if (val) {
      LmEval ev = evaluate_lm(state, *val, opts.batch_size, opts.seed);
      trace.val_perplexity.push_back(ev.perplexity);
      if (ev.perplexity < best_ppl) {
        best_ppl = ev.perplexity;
        best_tensors = state.tensors;
      }
    }
  }

  if (val && !best_tensors.empty()) {
    // keep the best-validation parameters
    for (size_t i = 0; i < state.tensors.size(); i++)
      state.tensors[i].value = best_tensors[i].value;
  }
  return trace;
}

std::vector<StageSpec> FinetunePlan::default_stages(int n_groups) {
  std::vector<StageSpec> stages;
  stages.push_back({1, 1, 1});
  if (n_groups >= 2) stages.push_back({2, 1, 1});
  stages.push_back({n_groups, 1, 1});
  return stages;
}

FinetuneResult finetune_classifier(ModelState& classifier, const Objective& train,
                                   const Objective* val, const FinetunePlan& plan,
                                   const TrainOptions& opts) {
  if (classifier.config.is_lm()) fail(Errc::config, "finetune needs a classifier head");
  if (train.kind != Objective::Kind::classify)
    fail(Errc::config, "finetune needs a classification objective");
  for (int label : train.labels)
    if (label < 0 || label >= classifier.config.n_classes)
      fail(Errc::config, "fragment label outside the classifier width");

  const int G = n_layer_groups(classifier.config);
  std::vector<StageSpec> stages = plan.stages.empty() ? FinetunePlan::default_stages(G)
                                                      : plan.stages;
  std::vector<double> group_lrs = discriminative_lrs(plan.base_lr, G, plan.disc_factor);
  std::vector<double> scales(static_cast<size_t>(G));
  for (int g = 0; g < G; g++) scales[static_cast<size_t>(g)] = group_lrs[g] / plan.base_lr;

  TrainTrace trace;
  FinetuneResult result;
  StepLogger log;
  log.open(opts.log_path, opts.config_hash);

  size_t n = train.size();
  int steps_per_epoch = static_cast<int>((n + opts.batch_size - 1) / opts.batch_size);
  int64_t global_step = 0;

  for (const StageSpec& stage : stages) {
    int unfrozen = std::min(stage.unfrozen_groups, G);
    std::set<std::string> frozen;
    for (const auto& t : classifier.tensors)
      if (t.trainable && group_of_tensor(classifier.config, t.name) < G - unfrozen)
        frozen.insert(t.name);

    for (int c = 0; c < stage.cycles; c++) {
      int total = std::max(2, stage.epochs_per_cycle * steps_per_epoch);
      OneCycleConfig cycle = cycle_from(opts, total);
      cycle.lr_max = plan.base_lr;
      AdamW adam;  // fresh per cycle
      adam.beta2 = opts.beta2;
      adam.eps = opts.adam_eps;
      adam.weight_decay = opts.weight_decay;
      run_cycle(classifier, train, cycle, opts, frozen.empty() ? nullptr : &frozen, &scales,
                adam, global_step, trace, log);
    }

    if (val) {
      ClassifierEval ev = evaluate_classifier(classifier, *val, opts.batch_size);
      trace.val_accuracy.push_back(ev.report.accuracy);
    }
  }

  ClassifierEval train_eval = evaluate_classifier(classifier, train, opts.batch_size);
  result.train_accuracy = train_eval.report.accuracy;
  if (val) {
    ClassifierEval ev = evaluate_classifier(classifier, *val, opts.batch_size);
    result.val_report = ev.report;
  } else {
    result.val_report = train_eval.report;
  }
  result.trace = std::move(trace);
  return result;
}

RangeTestResult lr_range_test(const ModelState& state, const Objective& obj, double lr_min,
                              double lr_max, int steps, const TrainOptions& opts) {
  if (!(lr_min > 0.0 && lr_min < lr_max)) fail(Errc::config, "need 0 < lr_min < lr_max");
  if (steps < 3) fail(Errc::config, "range test needs at least 3 steps");

  ModelState work = state;  // scratch copy; the caller's weights stay put
  AdamW adam;
  adam.beta2 = opts.beta2;
  adam.eps = opts.adam_eps;
  adam.weight_decay = 0.0;

  RangeTestResult result;
  std::vector<int> order = epoch_order(obj.size(), opts.seed, 0);

  double ema = 0.0;
  const double beta = 0.98;
  double best = std::numeric_limits<double>::infinity();

  for (int k = 0; k < steps; k++) {
    double lr = lr_min * std::pow(lr_max / lr_min,
                                  static_cast<double>(k) / static_cast<double>(steps - 1));
    std::vector<int> idx;
    for (int b = 0; b < opts.batch_size; b++)
      idx.push_back(order[(static_cast<size_t>(k) * opts.batch_size + b) % order.size()]);

    Tape tape;
    ForwardOptions fwd;
    fwd.training = true;
    fwd.dropout_seed = derive_seed(opts.seed, "range_dropout", static_cast<uint64_t>(k));
    LossBuild lb = build_objective_loss(tape, work, obj, idx, fwd,
                                        derive_seed(opts.seed, "range_corrupt",
                                                    static_cast<uint64_t>(k)));
    if (lb.n_positions == 0) continue;
    double loss = tape.value(lb.loss)(0, 0);
    if (!std::isfinite(loss)) {
      if (k == 0)
        fail(Errc::divergence, "unusable learning-rate range: non-finite loss at the first step");
      break;
    }

    ema = beta * ema + (1.0 - beta) * loss;
    double smoothed = ema / (1.0 - std::pow(beta, k + 1));
    result.lrs.push_back(lr);
    result.raw.push_back(loss);
    result.smoothed.push_back(smoothed);

    if (smoothed > 4.0 * best && k > 0) break;
    best = std::min(best, smoothed);

    tape.backward(lb.loss);
    auto grads = collect_grads(tape, work, lb.graph, nullptr);
    auto lr_of = [&](const std::string&) { return lr; };
    adam.step(work, grads, lr_of, 0.9);
    update_bn_buffers(work, lb.graph);
  }

  // steepest descent of the smoothed trace, strictly inside the endpoints
  double best_slope = 0.0;
  int best_k = -1;
  for (size_t k = 1; k + 1 < result.smoothed.size(); k++) {
    double slope = result.smoothed[k] - result.smoothed[k - 1];
    if (slope < best_slope) {
      best_slope = slope;
      best_k = static_cast<int>(k);
    }
  }
  double tiny = 1e-12 * std::max(1.0, std::abs(result.smoothed.empty() ? 0.0 : result.smoothed[0]));
  if (best_k < 0 || -best_slope < tiny) {
    result.flat = true;
  } else {
    result.suggestion = result.lrs[static_cast<size_t>(best_k)];
  }
  return result;
}

}  // namespace stylus
