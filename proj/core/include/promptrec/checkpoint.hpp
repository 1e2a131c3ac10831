#pragma once

// Checkpoint file layout:
//
//   "PXR1"                        4 bytes magic
//   metadata length               u64, little endian
//   metadata                      UTF-8 JSON (config, vocabulary, ids, task
//                                 weights, tensor manifest)
//   tensor payloads               float32, little endian, manifest order
//
// Manifest entries carry name, shape and byte offset relative to the start of
// the payload section. The total file length must match the header exactly.

#include <cstdint>
#include <filesystem>
#include <optional>

#include "promptrec/model.hpp"
#include "promptrec/trainer.hpp"

namespace promptrec {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  TrainConfig config;
  Model model;
  std::optional<double> best_val_loss;
  std::size_t epoch = 0;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws IntegrityError (bad magic, truncated or oversized file, malformed
/// manifest) or UnsupportedVersionError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Bitwise equality of every tensor and metadata field.
bool identical(const Checkpoint& a, const Checkpoint& b);

}  // namespace promptrec
