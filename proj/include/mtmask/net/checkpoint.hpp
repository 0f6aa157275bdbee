#pragma once

#include <filesystem>
#include <vector>

#include "mtmask/mtile.hpp"
#include "mtmask/net/model.hpp"

namespace mtmask::net {

struct Checkpoint {
  Architecture arch;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::vector<std::string> names;
  std::vector<std::vector<int>> shapes;
  std::vector<float> payload;
};

enum class InitMode { backbone_only, full };

ordered_json architecture_to_json(const Architecture& arch);
Architecture architecture_from_json(const ordered_json& j);

Checkpoint make_checkpoint(const MultiTaskModel& model, int epoch);
/// Builds a model with the checkpoint's architecture and parameters.
MultiTaskModel model_from_checkpoint(const Checkpoint& ckpt);

/// JSON descriptor line followed by the f32 parameters in parameters() order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// backbone_only copies the backbone and re-initialises the heads from the
/// model's own seed; full requires an identical architecture and copies
/// everything. Throws DataError on descriptor mismatch.
void init_from_checkpoint(MultiTaskModel& model, const Checkpoint& ckpt, InitMode mode);

}  // namespace mtmask::net
