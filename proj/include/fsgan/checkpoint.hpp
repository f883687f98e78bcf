#pragma once

// Checkpoint directory layout:
//   manifest.json   configs, seeds, iteration, anchors, RNG state, optimizer step counts
//                   and a `parameters` table naming every array file with its shape
//   <array>.bin     one little-endian float32 array per parameter / optimizer moment
//   losses.jsonl    one JSON loss record per iteration

#include "fsgan/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace fsgan {

inline constexpr const char* kCheckpointFormat = "fsgan-checkpoint";
inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& dir);

/// Throws LoadError naming the failing manifest field or file.
TrainState load_checkpoint(const std::filesystem::path& dir);
/// Same, and additionally requires the stored architecture to match `expected`.
TrainState load_checkpoint(const std::filesystem::path& dir, const GeneratorConfig& expected_g,
                           const DiscriminatorConfig& expected_d);

void write_float32_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_float32_file(const std::filesystem::path& path, const Shape& shape);

/// JSON text of one loss record (one line of losses.jsonl).
std::string loss_record_json(const LossRecord& r);
std::vector<LossRecord> read_loss_log(const std::filesystem::path& path);

} // namespace fsgan
