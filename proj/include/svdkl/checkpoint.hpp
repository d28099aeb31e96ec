#pragma once

#include "svdkl/data.hpp"
#include "svdkl/trainer.hpp"

#include <string>
#include <vector>

namespace svdkl {

// Self-describing binary container: magic + JSON header + little-endian
// 64-bit float blobs. save -> load -> save is byte-stable.
struct ModelCheckpoint {
  int version = 1;
  DeepKernelModel model;
  TrainConfig config;
  NormStats stats;
  std::vector<std::string> label_names;
  std::string rng_state;
};

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace svdkl
