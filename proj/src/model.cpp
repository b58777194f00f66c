#include "stylus/model.hpp"

#include <algorithm>
#include <cmath>

namespace stylus {

using ag::Mat;
using ag::Tape;
using ag::Var;

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::lstm: return "lstm";
    case Arch::causal: return "causal";
    case Arch::masked: return "masked";
    case Arch::cnn: return "cnn";
  }
  fail(Errc::config, "unknown arch");
}

Arch arch_from_name(const std::string& name) {
  if (name == "lstm") return Arch::lstm;
  if (name == "causal") return Arch::causal;
  if (name == "masked") return Arch::masked;
  if (name == "cnn") return Arch::cnn;
  fail(Errc::config, "unknown arch '" + name + "'");
}

void ModelConfig::validate() const {
  if (vocab_size <= kNumSpecials) fail(Errc::config, "vocab_size too small");
  if (embed_dim < 1 || hidden_dim < 1) fail(Errc::config, "embed/hidden dims must be positive");
  if (n_layers < 1) fail(Errc::config, "n_layers must be at least 1");
  if (context < 2) fail(Errc::config, "context must be at least 2");
  if (n_classes < 0) fail(Errc::config, "n_classes must be non-negative");
  if (is_transformer()) {
    if (n_heads < 1) fail(Errc::config, "transformer needs n_heads >= 1");
    if (hidden_dim % n_heads != 0) fail(Errc::config, "n_heads must divide hidden_dim");
    if (embed_dim != hidden_dim)
      fail(Errc::config, "transformer ties decoder to embeddings: embed_dim must equal hidden_dim");
  }
  if (arch == Arch::lstm && embed_dim != hidden_dim)
    fail(Errc::config, "lstm ties decoder to embeddings: embed_dim must equal hidden_dim");
  if (arch == Arch::cnn) {
    if (n_classes < 1) fail(Errc::config, "cnn arch is classifier-only");
    if (cnn_kernel < 1) fail(Errc::config, "cnn kernel must be positive");
  }
  for (double p : {dropout_embed, dropout_input, dropout_weight, dropout_output, dropout_attn,
                   dropout_resid, dropout_head})
    if (p < 0.0 || p >= 1.0) fail(Errc::config, "dropout rates must lie in [0, 1)");
}

ModelConfig ModelConfig::with_dropout_disabled() const {
  ModelConfig c = *this;
  c.dropout_embed = c.dropout_input = c.dropout_weight = c.dropout_output = 0.0;
  c.dropout_attn = c.dropout_resid = c.dropout_head = 0.0;
  return c;
}

void ModelState::add(const std::string& name, Mat value, bool trainable) {
  if (has(name)) fail(Errc::config, "duplicate tensor name: " + name);
  index_[name] = tensors.size();
  tensors.push_back({name, std::move(value), trainable});
}

Mat& ModelState::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail(Errc::config, "no tensor named " + name);
  return tensors[it->second].value;
}

const Mat& ModelState::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(Errc::config, "no tensor named " + name);
  return tensors[it->second].value;
}

const NamedTensor& ModelState::tensor(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(Errc::config, "no tensor named " + name);
  return tensors[it->second];
}

int64_t ModelState::parameter_count() const {
  int64_t n = 0;
  for (const auto& t : tensors)
    if (t.trainable) n += t.value.size();
  return n;
}

// ---- initialization ----

static Mat uniform_mat(Rng& rng, int rows, int cols, double range) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); i++) m.data()[i] = (rng.next_double() * 2.0 - 1.0) * range;
  return m;
}

// fan-in scaled uniform for weight matrices laid out out x in
static Mat linear_init(Rng& rng, int out, int in) {
  return uniform_mat(rng, out, in, 1.0 / std::sqrt(static_cast<double>(in)));
}

ModelState init_model(const ModelConfig& config, uint64_t vocab_hash, uint64_t seed) {
  config.validate();
  ModelState s;
  s.config = config;
  s.vocab_hash = vocab_hash;

  auto rng_for = [&](const std::string& name) { return Rng(derive_seed(seed, name)); };
  auto add_init = [&](const std::string& name, int rows, int cols, double range) {
    Rng rng = rng_for(name);
    s.add(name, uniform_mat(rng, rows, cols, range));
  };
  auto add_linear = [&](const std::string& name, int out, int in) {
    Rng rng = rng_for(name);
    s.add(name, linear_init(rng, out, in));
  };
  auto add_zeros = [&](const std::string& name, int rows, int cols) {
    s.add(name, Mat::Zero(rows, cols));
  };
  auto add_ones = [&](const std::string& name, int rows, int cols) {
    s.add(name, Mat::Ones(rows, cols));
  };

  const int V = config.vocab_size, E = config.embed_dim, H = config.hidden_dim;
  const int C = config.n_classes;

  add_init("embed.tokens", V, E, 0.1);

  if (config.is_transformer()) {
    add_init("embed.pos", config.context, E, 0.05);
    for (int l = 0; l < config.n_layers; l++) {
      std::string p = "block" + std::to_string(l) + ".";
      add_ones(p + "ln1.g", 1, H);
      add_zeros(p + "ln1.b", 1, H);
      add_linear(p + "attn.wqkv", 3 * H, H);
      add_zeros(p + "attn.bqkv", 1, 3 * H);
      add_linear(p + "attn.wo", H, H);
      add_zeros(p + "attn.bo", 1, H);
      add_ones(p + "ln2.g", 1, H);
      add_zeros(p + "ln2.b", 1, H);
      add_linear(p + "mlp.w1", config.mlp_dim(), H);
      add_zeros(p + "mlp.b1", 1, config.mlp_dim());
      add_linear(p + "mlp.w2", H, config.mlp_dim());
      add_zeros(p + "mlp.b2", 1, H);
    }
    add_ones("final.ln.g", 1, H);
    add_zeros("final.ln.b", 1, H);
    if (config.is_lm()) {
      add_zeros("decoder.bias", 1, V);
    } else {
      add_linear("head.fc.w", C, H);
      add_zeros("head.fc.b", 1, C);
    }
  } else if (config.arch == Arch::lstm) {
    for (int l = 0; l < config.n_layers; l++) {
      std::string p = "lstm" + std::to_string(l) + ".";
      int in = l == 0 ? E : H;
      add_linear(p + "wx", 4 * H, in);
      add_linear(p + "wh", 4 * H, H);
      Mat b = Mat::Zero(1, 4 * H);
      b.block(0, H, 1, H).setOnes();  // forget gate bias starts open
      s.add(p + "b", std::move(b));
    }
    if (config.is_lm()) {
      add_zeros("decoder.bias", 1, V);
    } else {
      add_ones("head.bn1.g", 1, 3 * H);
      add_zeros("head.bn1.b", 1, 3 * H);
      s.add("head.bn1.rm", Mat::Zero(1, 3 * H), false);
      s.add("head.bn1.rv", Mat::Ones(1, 3 * H), false);
      add_linear("head.fc1.w", H, 3 * H);
      add_zeros("head.fc1.b", 1, H);
      add_ones("head.bn2.g", 1, H);
      add_zeros("head.bn2.b", 1, H);
      s.add("head.bn2.rm", Mat::Zero(1, H), false);
      s.add("head.bn2.rv", Mat::Ones(1, H), false);
      add_linear("head.fc2.w", C, H);
      add_zeros("head.fc2.b", 1, C);
    }
  } else {  // cnn
    const int F = config.cnn_channels();
    for (int l = 0; l < config.n_layers; l++) {
      std::string p = "conv" + std::to_string(l) + ".";
      int in = (l == 0 ? E : F) * config.cnn_kernel;
      add_linear(p + "w", F, in);
      add_zeros(p + "b", 1, F);
    }
    add_linear("head.fc.w", C, F);
    add_zeros("head.fc.b", 1, C);
  }
  return s;
}

std::vector<std::string> init_from_pretrained(ModelState& state, const ModelState& pretrained) {
  std::vector<std::string> copied;
  for (auto& t : state.tensors) {
    if (!pretrained.has(t.name)) continue;
    const Mat& src = pretrained.at(t.name);
    if (src.rows() != t.value.rows() || src.cols() != t.value.cols())
      fail(Errc::config, "pretrained tensor shape mismatch for " + t.name);
    t.value = src;
    copied.push_back(t.name);
  }
  if (copied.empty()) fail(Errc::config, "pretrained state shares no tensors with the model");
  return copied;
}

int n_layer_groups(const ModelConfig& config) { return config.n_layers + 2; }

int group_of_tensor(const ModelConfig& config, const std::string& name) {
  if (name.rfind("embed.", 0) == 0) return 0;
  for (const char* prefix : {"block", "lstm", "conv"}) {
    if (name.rfind(prefix, 0) == 0) {
      size_t start = std::string(prefix).size();
      size_t dot = name.find('.', start);
      int layer = std::stoi(name.substr(start, dot - start));
      return 1 + layer;
    }
  }
  if (name.rfind("final.", 0) == 0) return config.n_layers;  // grouped with the last block
  if (name.rfind("decoder.", 0) == 0 || name.rfind("head.", 0) == 0)
    return n_layer_groups(config) - 1;
  fail(Errc::config, "tensor belongs to no layer group: " + name);
}

// ---- batches ----

Batch Batch::from(const std::vector<std::vector<int32_t>>& seqs) {
  if (seqs.empty()) fail(Errc::empty_input, "batch needs at least one sequence");
  Batch b;
  b.batch = static_cast<int>(seqs.size());
  b.length = static_cast<int>(seqs[0].size());
  if (b.length == 0) fail(Errc::empty_input, "batch sequences must be non-empty");
  b.ids.reserve(static_cast<size_t>(b.batch) * b.length);
  for (const auto& s : seqs) {
    if (static_cast<int>(s.size()) != b.length)
      fail(Errc::config, "batch sequences must share one length");
    b.ids.insert(b.ids.end(), s.begin(), s.end());
  }
  return b;
}

// ---- graph building ----

namespace {

struct Builder {
  Tape& tape;
  const ModelState& state;
  const ModelConfig& cfg;
  const Batch& batch;
  const ForwardOptions& opt;
  Rng drop_rng;
  ModelGraph graph;

  Builder(Tape& t, const ModelState& s, const Batch& b, const ForwardOptions& o)
      : tape(t), state(s), cfg(s.config), batch(b), opt(o),
        drop_rng(derive_seed(o.dropout_seed, "dropout")) {
    if (batch.length > cfg.context)
      fail(Errc::context_overflow, "sequence length " + std::to_string(batch.length) +
                                       " exceeds context " + std::to_string(cfg.context));
    for (int32_t id : batch.ids)
      if (id < 0 || id >= cfg.vocab_size)
        fail(Errc::invalid_token_id, "token id out of range: " + std::to_string(id));
  }

  Var leaf(const std::string& name) {
    auto it = graph.params.find(name);
    if (it != graph.params.end()) return it->second;
    const NamedTensor& t = state.tensor(name);
    bool rg = t.trainable && !(opt.frozen && opt.frozen->count(name));
    Var v = tape.leaf(t.value, rg);
    graph.params[name] = v;
    return v;
  }

  bool training() const { return opt.training; }

  Mat mask(Eigen::Index rows, Eigen::Index cols, double p) {
    Mat m(rows, cols);
    double keep = 1.0 - p;
    for (Eigen::Index i = 0; i < m.size(); i++)
      m.data()[i] = drop_rng.next_double() < p ? 0.0 : 1.0 / keep;
    return m;
  }

  Var dropout(Var x, double p) {
    if (!training() || p <= 0.0) return x;
    const Mat& v = tape.value(x);
    return tape.mul_const(x, mask(v.rows(), v.cols(), p));
  }

  std::vector<int> flat_ids() const {
    return std::vector<int>(batch.ids.begin(), batch.ids.end());
  }

  Var linear(Var x, const std::string& w, const std::string& b) {
    return tape.add_rowvec(tape.matmul_nt(x, leaf(w)), leaf(b));
  }

  Var layer_norm(Var x, const std::string& prefix) {
    return ag::layernorm_rows(tape, x, leaf(prefix + ".g"), leaf(prefix + ".b"));
  }

  // (B*T) x d token+position embeddings, item-major rows
  Var transformer_embed() {
    Var tok = tape.rows(leaf("embed.tokens"), flat_ids());
    std::vector<int> pos(batch.ids.size());
    for (int i = 0; i < batch.batch; i++)
      for (int t = 0; t < batch.length; t++) pos[static_cast<size_t>(i) * batch.length + t] = t;
    Var p = tape.rows(leaf("embed.pos"), pos);
    return dropout(tape.add(tok, p), cfg.dropout_resid);
  }

  Var attention(Var x, const std::string& p, bool causal) {
    const int T = batch.length, B = batch.batch;
    const int H = cfg.hidden_dim, nh = cfg.n_heads, dh = cfg.head_dim();
    Var qkv = linear(x, p + "attn.wqkv", p + "attn.bqkv");

    Mat causal_mask;
    if (causal) {
      causal_mask = Mat::Zero(T, T);
      double neg_inf = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < T; i++)
        for (int j = i + 1; j < T; j++) causal_mask(i, j) = neg_inf;
    }

    std::vector<Var> items;
    items.reserve(static_cast<size_t>(B));
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int i = 0; i < B; i++) {
      std::vector<Var> heads;
      heads.reserve(static_cast<size_t>(nh));
      for (int h = 0; h < nh; h++) {
        Var q = tape.block(qkv, i * T, T, h * dh, dh);
        Var k = tape.block(qkv, i * T, T, H + h * dh, dh);
        Var v = tape.block(qkv, i * T, T, 2 * H + h * dh, dh);
        Var scores = tape.scale(tape.matmul_nt(q, k), scale);
        if (causal) scores = tape.add_const(scores, causal_mask);
        Var probs = tape.softmax_rows(scores);
        if (opt.trace) opt.trace->attention.push_back(tape.value(probs));
        probs = dropout(probs, cfg.dropout_attn);
        heads.push_back(tape.matmul(probs, v));
      }
      items.push_back(tape.concat_cols(heads));
    }
    Var ctx = tape.concat_rows(items);
    return dropout(linear(ctx, p + "attn.wo", p + "attn.bo"), cfg.dropout_resid);
  }

  Var transformer_stack() {
    bool causal = cfg.arch == Arch::causal;
    Var x = transformer_embed();
    for (int l = 0; l < cfg.n_layers; l++) {
      std::string p = "block" + std::to_string(l) + ".";
      x = tape.add(x, attention(layer_norm(x, p + "ln1"), p, causal));
      Var m = layer_norm(x, p + "ln2");
      m = tape.gelu_(linear(m, p + "mlp.w1", p + "mlp.b1"));
      m = dropout(linear(m, p + "mlp.w2", p + "mlp.b2"), cfg.dropout_resid);
      x = tape.add(x, m);
    }
    return layer_norm(x, "final.ln");
  }

  // item-major (B*T) x H final layer outputs
  Var lstm_stack() {
    const int T = batch.length, B = batch.batch;
    const int E = cfg.embed_dim, H = cfg.hidden_dim;

    Var emb = leaf("embed.tokens");
    if (training() && cfg.dropout_embed > 0.0) {
      Mat row_mask = mask(cfg.vocab_size, 1, cfg.dropout_embed);
      emb = tape.mul_const(emb, row_mask.replicate(1, E));
    }
    Var x_all = tape.rows(emb, flat_ids());

    // time-major gather indices for step t
    auto step_rows = [&](int t) {
      std::vector<int> idx(static_cast<size_t>(B));
      for (int i = 0; i < B; i++) idx[static_cast<size_t>(i)] = i * T + t;
      return idx;
    };

    std::vector<Var> inputs;  // per time step, B x in
    inputs.reserve(static_cast<size_t>(T));
    for (int t = 0; t < T; t++) inputs.push_back(tape.rows(x_all, step_rows(t)));

    for (int l = 0; l < cfg.n_layers; l++) {
      std::string p = "lstm" + std::to_string(l) + ".";
      int in_dim = l == 0 ? E : H;

      // locked mask: sampled once, reused across every time step
      Mat in_mask;
      double p_in = l == 0 ? cfg.dropout_input : cfg.dropout_output;
      if (training() && p_in > 0.0) in_mask = mask(B, in_dim, p_in);

      Var wx = leaf(p + "wx");
      Var wh = leaf(p + "wh");
      if (training() && cfg.dropout_weight > 0.0)
        wh = tape.mul_const(wh, mask(4 * H, H, cfg.dropout_weight));
      Var b = leaf(p + "b");

      Var h_prev = tape.constant(Mat::Zero(B, H));
      Var c_prev = tape.constant(Mat::Zero(B, H));
      std::vector<Var> outputs;
      outputs.reserve(static_cast<size_t>(T));
      for (int t = 0; t < T; t++) {
        Var x_t = inputs[static_cast<size_t>(t)];
        if (in_mask.size() > 0) x_t = tape.mul_const(x_t, in_mask);
        Var pre = tape.add_rowvec(tape.add(tape.matmul_nt(x_t, wx), tape.matmul_nt(h_prev, wh)), b);
        Var gi = tape.sigmoid_(tape.block(pre, 0, B, 0, H));
        Var gf = tape.sigmoid_(tape.block(pre, 0, B, H, H));
        Var gg = tape.tanh_(tape.block(pre, 0, B, 2 * H, H));
        Var go = tape.sigmoid_(tape.block(pre, 0, B, 3 * H, H));
        Var c = tape.add(tape.mul(gf, c_prev), tape.mul(gi, gg));
        Var h = tape.mul(go, tape.tanh_(c));
        outputs.push_back(h);
        h_prev = h;
        c_prev = c;
      }
      inputs = std::move(outputs);
    }

    // final output dropout, locked across time
    if (training() && cfg.dropout_output > 0.0) {
      Mat out_mask = mask(B, H, cfg.dropout_output);
      for (auto& h : inputs) h = tape.mul_const(h, out_mask);
    }

    // assemble item-major rows from the time-major step list
    Var time_major = tape.concat_rows(inputs);  // row t*B + i
    std::vector<int> perm(static_cast<size_t>(B) * T);
    for (int i = 0; i < B; i++)
      for (int t = 0; t < T; t++) perm[static_cast<size_t>(i) * T + t] = t * B + i;
    return tape.rows(time_major, perm);
  }

  // valid (unpadded) 1-d convolution via shifted column concatenation
  Var conv_valid(Var x, const std::string& w, const std::string& b, int kernel) {
    const Mat& xv = tape.value(x);
    int T = static_cast<int>(xv.rows());
    int out_len = T - kernel + 1;
    if (out_len < 1)
      fail(Errc::input_contract, "sequence of " + std::to_string(T) +
                                     " tokens is shorter than the convolution kernel");
    std::vector<Var> shifts;
    shifts.reserve(static_cast<size_t>(kernel));
    for (int j = 0; j < kernel; j++) shifts.push_back(tape.slice_rows(x, j, out_len));
    return linear(tape.concat_cols(shifts), w, b);
  }

  Var cnn_features() {
    const int T = batch.length, B = batch.batch;
    Var x_all = tape.rows(leaf("embed.tokens"), flat_ids());
    std::vector<Var> pooled;
    pooled.reserve(static_cast<size_t>(B));
    for (int i = 0; i < B; i++) {
      Var x = tape.slice_rows(x_all, i * T, T);
      for (int l = 0; l < cfg.n_layers; l++) {
        std::string p = "conv" + std::to_string(l) + ".";
        x = tape.relu_(conv_valid(x, p + "w", p + "b", cfg.cnn_kernel));
      }
      pooled.push_back(tape.col_mean(x));  // average local features over time
    }
    return tape.concat_rows(pooled);  // B x F
  }

  Var tied_decoder(Var hidden) {
    return tape.add_rowvec(tape.matmul_nt(hidden, leaf("embed.tokens")), leaf("decoder.bias"));
  }

  Var batch_norm(Var x, const std::string& prefix) {
    Var g = leaf(prefix + ".g"), b = leaf(prefix + ".b");
    if (training()) {
      ag::BatchNormOut bn = ag::batchnorm_train(tape, x, g, b);
      graph.bn_stats.push_back({prefix, bn.batch_mean, bn.batch_var});
      return bn.out;
    }
    return ag::batchnorm_eval(tape, x, g, b, state.at(prefix + ".rm"), state.at(prefix + ".rv"));
  }
};

}  // namespace

ModelGraph build_lm_graph(Tape& tape, const ModelState& state, const Batch& batch,
                          const ForwardOptions& opt) {
  const ModelConfig& cfg = state.config;
  if (!cfg.is_lm()) fail(Errc::config, "model is a classifier, not a language model");
  if (cfg.arch == Arch::cnn)
    fail(Errc::unsupported, "cnn arch has no language-model objective");

  Builder b(tape, state, batch, opt);
  Var hidden = cfg.is_transformer() ? b.transformer_stack() : b.lstm_stack();
  b.graph.hidden = hidden;
  b.graph.logits = b.tied_decoder(hidden);
  b.graph.feature = hidden;
  return std::move(b.graph);
}

ModelGraph build_classifier_graph(Tape& tape, const ModelState& state, const Batch& batch,
                                  const ForwardOptions& opt) {
  const ModelConfig& cfg = state.config;
  if (cfg.is_lm()) fail(Errc::config, "model has no classifier head");

  if (cfg.is_transformer()) {
    for (int i = 0; i < batch.batch; i++)
      if (batch.at(i, 0) != kBosId || batch.at(i, batch.length - 1) != kEosId)
        fail(Errc::input_contract,
             "transformer classifier inputs must start with <s> and end with </s>");
  }

  Builder b(tape, state, batch, opt);
  const int T = batch.length, B = batch.batch;

  Var feature;
  if (cfg.is_transformer()) {
    Var hidden = b.transformer_stack();
    std::vector<int> idx(static_cast<size_t>(B));
    for (int i = 0; i < B; i++)
      idx[static_cast<size_t>(i)] = cfg.arch == Arch::causal ? i * T + (T - 1) : i * T;
    feature = tape.rows(hidden, idx);  // B x d
    b.graph.logits = b.linear(feature, "head.fc.w", "head.fc.b");
  } else if (cfg.arch == Arch::lstm) {
    Var hidden = b.lstm_stack();
    std::vector<Var> pooled;
    pooled.reserve(static_cast<size_t>(B));
    for (int i = 0; i < B; i++)
      pooled.push_back(ag::concat_pool(tape, tape.slice_rows(hidden, i * T, T)));
    Var pool = tape.concat_rows(pooled);  // B x 3H
    Var z = b.batch_norm(pool, "head.bn1");
    z = b.dropout(z, cfg.dropout_head);
    feature = tape.relu_(b.linear(z, "head.fc1.w", "head.fc1.b"));  // B x H
    Var z2 = b.batch_norm(feature, "head.bn2");
    z2 = b.dropout(z2, cfg.dropout_head);
    b.graph.logits = b.linear(z2, "head.fc2.w", "head.fc2.b");
  } else {  // cnn
    feature = b.cnn_features();
    b.graph.logits = b.linear(feature, "head.fc.w", "head.fc.b");
  }
  b.graph.feature = feature;
  b.graph.hidden = feature;
  return std::move(b.graph);
}

// ---- losses ----

Var next_token_loss(Tape& tape, const ModelGraph& graph, const Batch& batch) {
  if (batch.length < 2) fail(Errc::config, "next-token loss needs sequences of length >= 2");
  std::vector<int> rows;
  std::vector<int> targets;
  rows.reserve(static_cast<size_t>(batch.batch) * (batch.length - 1));
  for (int i = 0; i < batch.batch; i++) {
    for (int t = 0; t + 1 < batch.length; t++) {
      rows.push_back(i * batch.length + t);
      targets.push_back(batch.at(i, t + 1));
    }
  }
  Var picked = tape.rows(graph.logits, rows);
  return tape.mean_all(tape.cross_entropy_rows(picked, std::move(targets)));
}

Var masked_loss(Tape& tape, const ModelGraph& graph, const MaskedBatch& batch) {
  if (batch.empty())
    fail(Errc::empty_input, "masked loss with no target positions (skip batch)");
  Var picked = tape.rows(graph.logits, batch.target_rows);
  std::vector<int> targets(batch.target_ids.begin(), batch.target_ids.end());
  return tape.mean_all(tape.cross_entropy_rows(picked, std::move(targets)));
}

Var classification_loss(Tape& tape, const ModelGraph& graph, const std::vector<int>& labels) {
  const Mat& logits = tape.value(graph.logits);
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    fail(Errc::config, "label count does not match batch size");
  return tape.mean_all(tape.cross_entropy_rows(graph.logits, labels));
}

// ---- masked-LM corruption ----

MaskResult mask_inputs(const std::vector<int32_t>& tokens, double p_select, int vocab_size,
                       uint64_t seed, const MaskPolicy& policy) {
  if (p_select < 0.0 || p_select > 1.0) fail(Errc::config, "p_select must lie in [0, 1]");
  if (policy.p_mask < 0 || policy.p_random < 0 || policy.p_mask + policy.p_random > 1.0)
    fail(Errc::config, "mask policy probabilities must be non-negative and sum to <= 1");
  Rng rng(derive_seed(seed, "mask_inputs"));
  MaskResult out;
  out.tokens = tokens;
  for (size_t i = 0; i < tokens.size(); i++) {
    if (tokens[i] < kNumSpecials) continue;
    if (!(rng.next_double() < p_select)) continue;
    out.positions.push_back(static_cast<int>(i));
    out.targets.push_back(tokens[i]);
    double u = rng.next_double();
    if (u < policy.p_mask) {
      out.tokens[i] = kMaskId;
    } else if (u < policy.p_mask + policy.p_random) {
      out.tokens[i] =
          kNumSpecials + static_cast<int32_t>(rng.next_index(
                             static_cast<uint64_t>(vocab_size - kNumSpecials)));
    }  // else: keep the original token, still predicted
  }
  return out;
}

MaskedBatch corrupt_batch(const Batch& batch, double p_select, int vocab_size, uint64_t seed,
                          const MaskPolicy& policy) {
  MaskResult r = mask_inputs(batch.ids, p_select, vocab_size, seed, policy);
  MaskedBatch out;
  out.corrupted.ids = std::move(r.tokens);
  out.corrupted.batch = batch.batch;
  out.corrupted.length = batch.length;
  out.target_rows = std::move(r.positions);
  out.target_ids = std::move(r.targets);
  return out;
}

// ---- single-sequence forwards ----

ForwardOutput forward_lm(const ModelState& state, const std::vector<int32_t>& tokens,
                         ForwardTrace* trace) {
  if (tokens.empty()) fail(Errc::empty_input, "forward_lm on an empty sequence");
  Tape tape;
  ForwardOptions opt;
  opt.trace = trace;
  ModelGraph g = build_lm_graph(tape, state, Batch::from({tokens}), opt);
  return {tape.value(g.hidden), tape.value(g.logits)};
}

ClassifierOutput forward_classifier(const ModelState& state, const std::vector<int32_t>& tokens,
                                    ForwardTrace* trace) {
  if (tokens.empty()) fail(Errc::empty_input, "forward_classifier on an empty sequence");
  Tape tape;
  ForwardOptions opt;
  opt.trace = trace;
  ModelGraph g = build_classifier_graph(tape, state, Batch::from({tokens}), opt);
  ClassifierOutput out;
  out.logits = tape.value(g.logits).row(0).transpose();
  out.feature = tape.value(g.feature).row(0).transpose();
  return out;
}

// ---- gradient check ----

static double eval_loss(const ModelState& state, const Batch& batch, const GradCheckSpec& spec,
                        ModelGraph* graph_out, Tape* tape_out) {
  Tape local_tape;
  Tape& tape = tape_out ? *tape_out : local_tape;
  ForwardOptions opt;
  opt.training = true;  // exercise the training path; dropout rates are zero
  ModelGraph g;
  Var loss;
  switch (spec.loss) {
    case CheckLoss::next_token:
      g = build_lm_graph(tape, state, batch, opt);
      loss = next_token_loss(tape, g, batch);
      break;
    case CheckLoss::masked:
      g = build_lm_graph(tape, state, spec.masked.corrupted, opt);
      loss = masked_loss(tape, g, spec.masked);
      break;
    case CheckLoss::classify:
      g = build_classifier_graph(tape, state, batch, opt);
      loss = classification_loss(tape, g, spec.labels);
      break;
  }
  double value = tape.value(loss)(0, 0);
  if (!std::isfinite(value)) fail(Errc::numeric, "non-finite loss during gradient check");
  if (graph_out) {
    tape.backward(loss);
    *graph_out = std::move(g);
  }
  return value;
}

GradCheckResult grad_check(ModelState& state, const Batch& batch, const GradCheckSpec& spec,
                           double epsilon) {
  const ModelConfig& cfg = state.config;
  if (cfg.dropout_embed > 0 || cfg.dropout_input > 0 || cfg.dropout_weight > 0 ||
      cfg.dropout_output > 0 || cfg.dropout_attn > 0 || cfg.dropout_resid > 0 ||
      cfg.dropout_head > 0)
    fail(Errc::config, "gradient check requires all dropout rates disabled");

  Tape tape;
  ModelGraph graph;
  eval_loss(state, batch, spec, &graph, &tape);

  std::unordered_map<std::string, Mat> analytic;
  for (const auto& [name, var] : graph.params) analytic[name] = tape.grad_of(var);

  GradCheckResult result;
  Rng rng(derive_seed(spec.seed, "grad_check"));
  for (auto& t : state.tensors) {
    if (!t.trainable) continue;
    auto it = analytic.find(t.name);
    if (it == analytic.end()) continue;
    const Mat& an = it->second;
    Eigen::Index total = t.value.size();
    int n_entries = static_cast<int>(
        std::min<Eigen::Index>(total, static_cast<Eigen::Index>(spec.entries_per_tensor)));
    for (int k = 0; k < n_entries; k++) {
      Eigen::Index idx = static_cast<Eigen::Index>(rng.next_index(static_cast<uint64_t>(total)));
      double original = t.value.data()[idx];
      t.value.data()[idx] = original + epsilon;
      double up = eval_loss(state, batch, spec, nullptr, nullptr);
      t.value.data()[idx] = original - epsilon;
      double down = eval_loss(state, batch, spec, nullptr, nullptr);
      t.value.data()[idx] = original;
      double fd = (up - down) / (2.0 * epsilon);
      double g = an.data()[idx];
      if (!std::isfinite(fd) || !std::isfinite(g))
        fail(Errc::numeric, "non-finite gradient for " + t.name);
      double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = t.name;
      }
    }
  }
  return result;
}

}  // namespace stylus
