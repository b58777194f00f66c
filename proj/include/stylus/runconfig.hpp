#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stylus/common.hpp"

namespace stylus {

enum class Stage {
  synth,
  encode,
  train_tokenizer,
  pretrain,
  lm_finetune,
  finetune,
  evaluate,
  predict,
  embed,
};

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

// Effective key/value view for one stage: global keys, overlaid by the
// stage's section, overlaid by command-line overrides. The config hash covers
// the stage name, the seed and every effective key.
struct RunConfig {
  Stage stage = Stage::synth;
  std::map<std::string, std::string> values;
  uint64_t seed = 0;
  uint64_t config_hash = 0;

  bool has(const std::string& key) const { return values.count(key) > 0; }

  std::string get_string(const std::string& key) const;
  std::string get_string_or(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int_or(const std::string& key, int64_t fallback) const;
  double get_double_or(const std::string& key, double fallback) const;
  bool get_bool_or(const std::string& key, bool fallback) const;
  // like get_string but the file must exist
  std::string get_existing_path(const std::string& key) const;
};

// Parses an ini-style file: `key = value` lines, `[stage]` sections, '#'
// comments. Overrides are `key=value` strings. The seed comes from the
// --seed flag when present, else the `seed` key; it is mandatory.
RunConfig load_run_config(const std::string& stage, const std::string& config_path,
                          const std::vector<std::string>& overrides,
                          std::optional<uint64_t> seed_flag);

// Stage dispatcher; returns the process exit code (0 on success).
int run_stage(const RunConfig& cfg);

}  // namespace stylus
