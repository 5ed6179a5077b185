#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lfdnet/adam.hpp"
#include "lfdnet/loss.hpp"
#include "lfdnet/network.hpp"

namespace lfdnet {

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double train_accuracy = 0;
  double test_loss = 0;
  double test_accuracy = 0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

/// Everything besides the network needed to resume training exactly.
struct TrainingState {
  nn::AdamState<float> adam;
  int epoch = 0;  // completed epochs
  std::vector<EpochMetrics> history;
  nn::ClassWeights class_weights;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout is documented in docs/file_formats.md.
std::vector<std::uint8_t> encode_checkpoint(Network& net, const TrainingState& state);
void save_checkpoint(Network& net, const TrainingState& state, const std::filesystem::path& path);

struct LoadedCheckpoint {
  Network net;
  TrainingState state;
};

/// Builds the network from the embedded ArchSpec.
LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Restores into an existing network; throws FormatError("spec mismatch")
/// when the embedded ArchSpec differs from net.spec().
void decode_checkpoint_into(std::span<const std::uint8_t> bytes, Network& net, TrainingState* state);
void load_checkpoint_into(const std::filesystem::path& path, Network& net, TrainingState* state);

}  // namespace lfdnet
