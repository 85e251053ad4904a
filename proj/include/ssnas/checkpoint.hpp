#pragma once

#include <memory>
#include <string>

#include "ssnas/trainer.hpp"

namespace ssnas {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Checkpoint layout: <dir>/manifest.json plus one binary blob per parameter
/// group ({w} weights.bin, {beta} fusion.bin, {alpha,gamma} arch.bin,
/// {G} gmat.bin). Blobs are raw little-endian doubles in registration order,
/// network 1 first, behind a small header.
void save_checkpoint(const std::string& dir, const SupernetPair& pair, int epoch,
                     const std::vector<EpochRecord>& history);

struct LoadedCheckpoint {
    std::unique_ptr<SupernetPair> pair;
    int epoch = 0;
    std::vector<EpochRecord> history;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

} // namespace ssnas
