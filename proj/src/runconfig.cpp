#include "stylus/runconfig.hpp"

#include <filesystem>
#include <sstream>

namespace stylus {

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::synth: return "synth";
    case Stage::encode: return "encode";
    case Stage::train_tokenizer: return "train-tokenizer";
    case Stage::pretrain: return "pretrain";
    case Stage::lm_finetune: return "lm-finetune";
    case Stage::finetune: return "finetune";
    case Stage::evaluate: return "evaluate";
    case Stage::predict: return "predict";
    case Stage::embed: return "embed";
  }
  fail(Errc::config, "unknown stage");
}

Stage stage_from_name(const std::string& name) {
  for (Stage s : {Stage::synth, Stage::encode, Stage::train_tokenizer, Stage::pretrain,
                  Stage::lm_finetune, Stage::finetune, Stage::evaluate, Stage::predict,
                  Stage::embed})
    if (stage_name(s) == name) return s;
  fail(Errc::config, "unknown stage '" + name + "'");
}

std::string RunConfig::get_string(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) fail(Errc::config, "missing config field '" + key + "'");
  return it->second;
}

std::string RunConfig::get_string_or(const std::string& key, const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

int64_t RunConfig::get_int(const std::string& key) const {
  std::string v = get_string(key);
  try {
    size_t used = 0;
    int64_t out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(Errc::config, "config field '" + key + "' is not an integer: " + v);
  }
}

int64_t RunConfig::get_int_or(const std::string& key, int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double RunConfig::get_double_or(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  std::string v = get_string(key);
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(Errc::config, "config field '" + key + "' is not a number: " + v);
  }
}

bool RunConfig::get_bool_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(Errc::config, "config field '" + key + "' is not a boolean: " + v);
}

std::string RunConfig::get_existing_path(const std::string& key) const {
  std::string path = get_string(key);
  if (!std::filesystem::exists(path))
    fail(Errc::config, "config field '" + key + "' points to a missing path: " + path);
  return path;
}

static std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

RunConfig load_run_config(const std::string& stage, const std::string& config_path,
                          const std::vector<std::string>& overrides,
                          std::optional<uint64_t> seed_flag) {
  RunConfig cfg;
  cfg.stage = stage_from_name(stage);

  if (!config_path.empty()) {
    if (!std::filesystem::exists(config_path))
      fail(Errc::config, "config file does not exist: " + config_path);
    std::istringstream in(read_file_text(config_path));
    std::string line, section;
    int line_no = 0;
    std::map<std::string, std::string> globals, sectioned;
    while (std::getline(in, line)) {
      line_no++;
      std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      if (t.front() == '[' && t.back() == ']') {
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      auto eq = t.find('=');
      if (eq == std::string::npos)
        fail(Errc::config,
             config_path + ":" + std::to_string(line_no) + ": expected 'key = value'");
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        fail(Errc::config, config_path + ":" + std::to_string(line_no) + ": empty key");
      if (section.empty())
        globals[key] = value;
      else if (section == stage)
        sectioned[key] = value;
    }
    cfg.values = globals;
    for (const auto& [k, v] : sectioned) cfg.values[k] = v;
  }

  for (const std::string& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos)
      fail(Errc::config, "override must look like key=value: " + ov);
    cfg.values[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }

  if (seed_flag) {
    cfg.seed = *seed_flag;
    cfg.values["seed"] = std::to_string(*seed_flag);
  } else if (cfg.has("seed")) {
    cfg.seed = static_cast<uint64_t>(cfg.get_int("seed"));
  } else {
    fail(Errc::config, "missing config field 'seed' (pass --seed or set it in the config)");
  }

  std::ostringstream canon;
  canon << "stage=" << stage_name(cfg.stage) << '\n';
  for (const auto& [k, v] : cfg.values) canon << k << '=' << v << '\n';
  cfg.config_hash = fnv1a64(canon.str());
  return cfg;
}

}  // namespace stylus
