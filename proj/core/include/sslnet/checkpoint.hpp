#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sslnet/graph.hpp"

namespace sslnet {

// Checkpoint file layout (all integers little-endian 64-bit):
//   bytes 0..7   magic "SSLNET1\0"
//   u64 metadata byte length, then that many bytes of UTF-8 JSON
//   repeated until EOF:
//     u64 name length, name bytes
//     u64 rank, rank * u64 dims
//     product(dims) * 4 bytes of little-endian float32
// Blocks appear in graph parameter-visit order, so identical states produce
// identical files.

struct CheckpointBlock {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<float> data;
};

struct CheckpointFile {
    std::string metadata_json;
    std::vector<CheckpointBlock> blocks;
};

void save_checkpoint(const Graph& g, const std::string& metadata_json, const std::string& path);

// Full parse with magic and per-block size validation.
CheckpointFile read_checkpoint(const std::string& path);

// Loads block values into a graph with identical parameter names/sizes.
// Returns the metadata JSON string.
std::string load_checkpoint_into(Graph& g, const std::string& path);

}  // namespace sslnet
