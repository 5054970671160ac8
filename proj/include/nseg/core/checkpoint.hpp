#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "nseg/core/tensor.hpp"

namespace nseg {

// Binary checkpoint layout (all integers little-endian):
//
//   "NSEG"                      4 bytes magic
//   version                     u16
//   tensor count                u32
//   per tensor:
//     name length               u16
//     name                      UTF-8 bytes
//     rank                      u8
//     dims                      u32 x rank
//     data                      f32 x product(dims)
//   metadata length             u32
//   metadata                    UTF-8 JSON
//
// The file must end exactly after the metadata.
inline constexpr char kCheckpointMagic[4] = {'N', 'S', 'E', 'G'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor<float> tensor;
};

struct CheckpointData {
    std::vector<NamedTensor> tensors;
    std::string metadata;
};

void write_checkpoint(std::ostream& out, const CheckpointData& data);
CheckpointData read_checkpoint(std::istream& in);

// Writes via a temporary file and rename so a crash never leaves a partial checkpoint.
void save_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData load_checkpoint_file(const std::filesystem::path& path);

}  // namespace nseg
