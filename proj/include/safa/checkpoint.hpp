#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "safa/fscil.hpp"

namespace safa {

// Binary checkpoint: 16-byte magic "SAFASNN-CK" (zero padded), u32 version,
// u64 config fingerprint, the config snapshot, scalar metadata, then
// length-prefixed f64 tensor blocks in canonical order and a trailing
// FNV-1a-64 of every preceding byte. Little-endian throughout.
std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ckpt);

// Any damage (bad magic, truncation, checksum or shape inconsistency) raises
// CheckpointMismatchError.
ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace safa
