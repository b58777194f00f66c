#pragma once

#include <string>

#include "stylus/model.hpp"

namespace stylus {

// Checkpoint container: magic "STCK", version byte, config header (arch,
// dims, dropout rates, vocab hash, config hash, fragment length), then named
// tensors with raw little-endian 32-bit float payloads.

void save_checkpoint(const ModelState& state, const std::string& path, uint64_t config_hash);

struct LoadedCheckpoint {
  ModelState state;
  uint64_t config_hash = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Fails with a config error when the checkpoint was built over a different
// vocabulary than `vocab_hash`.
void require_vocab_match(const ModelState& state, uint64_t vocab_hash);

}  // namespace stylus
