#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lfdnet/arch.hpp"
#include "lfdnet/gbdt.hpp"
#include "lfdnet/render.hpp"
#include "lfdnet/split.hpp"
#include "lfdnet/trainer.hpp"

namespace lfdnet {

/// Environment variable naming the config file when --config is absent.
inline constexpr const char* kConfigEnvVar = "LFDNET_CONFIG";

/// Everything the pipeline commands read from the JSON config. The schema is
/// documented in README.md; every key is optional.
struct PipelineConfig {
  RenderConfig render;
  /// input_size follows render.resolution and classes/class_names follow the
  /// manifest labels, so neither is settable here.
  ArchSpec arch;
  SplitSpec split;
  TrainConfig train;
  std::uint64_t init_seed = 1;  // weight initialization and dropout masks
  gbdt::Config gbdt;
  bool gbdt_probs_only = false;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  /// The network spec for a corpus with these (sorted) labels.
  ArchSpec arch_for(const std::vector<std::string>& class_names) const;
  std::string to_json() const;
};

/// Strict parse: unknown keys, wrong types and invalid values throw ConfigError.
PipelineConfig parse_config(std::string_view json_text);
/// `flag_path` if nonempty, else $LFDNET_CONFIG if set and nonempty, else
/// defaults. A named file that does not exist is a ConfigError.
PipelineConfig load_config(const std::filesystem::path& flag_path);

}  // namespace lfdnet
