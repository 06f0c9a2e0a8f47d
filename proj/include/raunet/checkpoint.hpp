#pragma once

// Weight checkpoints.
//
//   "RAWT1"                      5 bytes, no terminator
//   u32 n, network name          n bytes
//   u32 blob count
//   per blob: u32 n, name; u32 rank; rank x u32 extents; f32 data
//
// All integers and floats little-endian. Blobs follow Network::visit order and
// include batch-norm running statistics.

#include <string>
#include <vector>

#include "raunet/architectures.hpp"

namespace raunet {

struct CheckpointBlob {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

struct Checkpoint {
    std::string network;
    std::vector<CheckpointBlob> blobs;
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

Checkpoint snapshot(Network<float>& net);
// Copies blob values into `net`; names and shapes must match exactly.
void restore(Network<float>& net, const Checkpoint& checkpoint);

void save_network(const std::string& path, Network<float>& net);
// Rebuilds the network named in the file, inferring the width divisor from
// the stored extents.
Network<float> load_network(const std::string& path);

}  // namespace raunet
