#pragma once

#include <filesystem>

#include "rewardchain/params.hpp"
#include "rewardchain/world.hpp"

namespace rc {

/// The full set of checkpoints a run reads or writes. On disk: one directory
/// holding text.rcpt, image.rcpt, denoiser.rcpt and world.rcpt, plus the prompt
/// splits and, for fine-tuned text encoders, base_text.rcpt with the encoder
/// the run started from.
struct ModelBundle {
  ParamSet text;
  ParamSet image;
  ParamSet denoiser;
  ToyWorld world;
  /// Text encoder before fine-tuning; empty when this bundle is a baseline.
  ParamSet base_text;
};

namespace bundle_files {
inline constexpr const char* text = "text.rcpt";
inline constexpr const char* image = "image.rcpt";
inline constexpr const char* denoiser = "denoiser.rcpt";
inline constexpr const char* world = "world.rcpt";
inline constexpr const char* base_text = "base_text.rcpt";
inline constexpr const char* train_prompts = "train_prompts.txt";
inline constexpr const char* holdout_prompts = "holdout_prompts.txt";
}  // namespace bundle_files

/// Loads whichever files exist; a missing text/image/denoiser/world file leaves
/// that member empty. Use require_* to check what a command needs.
ModelBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);

void require_world(const ModelBundle& bundle, const std::filesystem::path& dir);
void require_clip(const ModelBundle& bundle, const std::filesystem::path& dir);
void require_full(const ModelBundle& bundle, const std::filesystem::path& dir);

}  // namespace rc
