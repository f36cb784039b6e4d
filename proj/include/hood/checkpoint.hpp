#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hood/tensor.hpp"

namespace hood {

// Named tensor blob as stored in a HOODCKPT file. Entry names are dotted,
// with the leading component tagging the model kind ("classifier.conv1.k",
// "decoder.proj.w", ...).
struct CheckpointEntry {
  std::string name;
  Shape shape;
  Eigen::ArrayXf values;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointEntry>& entries);

// Rejects wrong magic or version with a FormatError.
std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

}  // namespace hood
