#include "rewardchain/bundle.hpp"

#include <stdexcept>

namespace rc {

namespace fs = std::filesystem;

ModelBundle load_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("checkpoint directory '" + dir.string() + "' does not exist");
  ModelBundle b;
  auto load_if = [&](const char* file, ParamSet& into) {
    const fs::path p = dir / file;
    if (fs::exists(p)) into = load_checkpoint(p);
  };
  load_if(bundle_files::text, b.text);
  load_if(bundle_files::image, b.image);
  load_if(bundle_files::denoiser, b.denoiser);
  load_if(bundle_files::base_text, b.base_text);
  ParamSet world;
  load_if(bundle_files::world, world);
  if (!world.empty()) b.world = world_from_params(world);
  return b;
}

void save_bundle(const ModelBundle& b, const fs::path& dir) {
  fs::create_directories(dir);
  if (!b.text.empty()) save_checkpoint(b.text, dir / bundle_files::text);
  if (!b.image.empty()) save_checkpoint(b.image, dir / bundle_files::image);
  if (!b.denoiser.empty()) save_checkpoint(b.denoiser, dir / bundle_files::denoiser);
  if (!b.base_text.empty()) save_checkpoint(b.base_text, dir / bundle_files::base_text);
  if (!b.world.patterns.empty()) save_checkpoint(world_to_params(b.world), dir / bundle_files::world);
}

namespace {

void missing(const fs::path& dir, const char* file) {
  throw std::runtime_error("missing checkpoint '" + (dir / file).string() + "'");
}

}  // namespace

void require_world(const ModelBundle& b, const fs::path& dir) {
  if (b.world.patterns.empty()) missing(dir, bundle_files::world);
}

void require_clip(const ModelBundle& b, const fs::path& dir) {
  require_world(b, dir);
  if (b.text.empty()) missing(dir, bundle_files::text);
  if (b.image.empty()) missing(dir, bundle_files::image);
}

void require_full(const ModelBundle& b, const fs::path& dir) {
  require_clip(b, dir);
  if (b.denoiser.empty()) missing(dir, bundle_files::denoiser);
}

}  // namespace rc
