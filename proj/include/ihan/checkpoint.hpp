#pragma once

#include <string>

#include "ihan/train.hpp"

namespace ihan {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMetrics {
    double test_auc = 0.0;
    int best_epoch = 0;
    double best_valid_loss = 0.0;
};

struct Checkpoint {
    TrainedModel model;
    CheckpointMetrics metrics;
    std::string created_at;
    int format_version = kCheckpointFormatVersion;
};

// Single-file format: magic, format version, a JSON header (config, vocabs,
// tensor manifest, metrics, timestamp), then raw little-endian float64
// sections in manifest order. Self-describing; load needs nothing else.
// Predictions round-trip bit-identically.
void save_checkpoint(const std::string& path, const TrainedModel& model,
                     const CheckpointMetrics& metrics);

Checkpoint load_checkpoint(const std::string& path);

} // namespace ihan
