#include "stylus/checkpoint.hpp"

#include <cstring>

namespace stylus {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'C', 'K'};
constexpr uint8_t kVersion = 0x01;

struct Writer {
  std::vector<uint8_t> buf;

  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u8(uint8_t v) { buf.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; i++) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; i++) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    if (s.size() > 0xffff) fail(Errc::io, "tensor name too long");
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) fail(Errc::truncated, "checkpoint file truncated");
  }
  void bytes(void* p, size_t n) {
    need(n);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; i++) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; i++) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path, uint64_t config_hash) {
  const ModelConfig& c = state.config;
  Writer w;
  w.bytes(kMagic, 4);
  w.u8(kVersion);
  w.u8(static_cast<uint8_t>(c.arch));
  w.u32(static_cast<uint32_t>(c.vocab_size));
  w.u32(static_cast<uint32_t>(c.embed_dim));
  w.u32(static_cast<uint32_t>(c.hidden_dim));
  w.u32(static_cast<uint32_t>(c.n_layers));
  w.u32(static_cast<uint32_t>(c.n_heads));
  w.u32(static_cast<uint32_t>(c.context));
  w.u32(static_cast<uint32_t>(c.n_classes));
  w.u32(static_cast<uint32_t>(c.cnn_kernel));
  w.u32(static_cast<uint32_t>(state.fragment_length));
  for (double p : {c.dropout_embed, c.dropout_input, c.dropout_weight, c.dropout_output,
                   c.dropout_attn, c.dropout_resid, c.dropout_head})
    w.f64(p);
  w.u64(state.vocab_hash);
  w.u64(config_hash);
  w.u32(static_cast<uint32_t>(state.class_names.size()));
  for (const auto& name : state.class_names) w.str(name);
  w.u32(static_cast<uint32_t>(state.tensors.size()));
  for (const auto& t : state.tensors) {
    w.str(t.name);
    w.u8(t.trainable ? 1 : 0);
    w.u32(static_cast<uint32_t>(t.value.rows()));
    w.u32(static_cast<uint32_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.size(); i++) {
      float f = static_cast<float>(t.value.data()[i]);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      w.u32(bits);
    }
  }
  write_file_bytes(path, w.buf.data(), w.buf.size());
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::vector<uint8_t> bytes = read_file_bytes(path);
  Reader r{bytes};
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) fail(Errc::bad_magic, "not a checkpoint file: " + path);
  if (r.u8() != kVersion) fail(Errc::bad_version, "unsupported checkpoint version");

  LoadedCheckpoint out;
  ModelConfig c;
  uint8_t arch = r.u8();
  if (arch > 3) fail(Errc::parse, "bad arch byte in checkpoint");
  c.arch = static_cast<Arch>(arch);
  c.vocab_size = static_cast<int>(r.u32());
  c.embed_dim = static_cast<int>(r.u32());
  c.hidden_dim = static_cast<int>(r.u32());
  c.n_layers = static_cast<int>(r.u32());
  c.n_heads = static_cast<int>(r.u32());
  c.context = static_cast<int>(r.u32());
  c.n_classes = static_cast<int>(r.u32());
  c.cnn_kernel = static_cast<int>(r.u32());
  int fragment_length = static_cast<int>(r.u32());
  c.dropout_embed = r.f64();
  c.dropout_input = r.f64();
  c.dropout_weight = r.f64();
  c.dropout_output = r.f64();
  c.dropout_attn = r.f64();
  c.dropout_resid = r.f64();
  c.dropout_head = r.f64();
  out.state.vocab_hash = r.u64();
  out.config_hash = r.u64();
  out.state.config = c;
  out.state.fragment_length = fragment_length;

  uint32_t n_classes_named = r.u32();
  for (uint32_t i = 0; i < n_classes_named; i++) out.state.class_names.push_back(r.str());

  uint32_t n_tensors = r.u32();
  for (uint32_t i = 0; i < n_tensors; i++) {
    std::string name = r.str();
    bool trainable = r.u8() != 0;
    uint32_t rows = r.u32(), cols = r.u32();
    ag::Mat m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); k++) {
      uint32_t bits = r.u32();
      float f;
      std::memcpy(&f, &bits, 4);
      m.data()[k] = static_cast<double>(f);
    }
    out.state.add(name, std::move(m), trainable);
  }
  if (r.pos != bytes.size()) fail(Errc::parse, "trailing bytes in checkpoint file");
  return out;
}

void require_vocab_match(const ModelState& state, uint64_t vocab_hash) {
  if (state.vocab_hash != vocab_hash)
    fail(Errc::config, "checkpoint was trained with a different tokenizer (vocab hash " +
                           hex64(state.vocab_hash) + " != " + hex64(vocab_hash) + ")");
}

}  // namespace stylus
