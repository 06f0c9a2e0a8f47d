#include "raunet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "io/binary.hpp"

namespace raunet {
namespace {

constexpr char kMagic[5] = {'R', 'A', 'W', 'T', '1'};
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    io::put_string(out, checkpoint.network);
    io::put_u32(out, static_cast<std::uint32_t>(checkpoint.blobs.size()));
    for (const CheckpointBlob& blob : checkpoint.blobs) {
        if (shape_numel(blob.shape) != blob.data.size())
            throw ShapeError("checkpoint blob " + blob.name + " has " + std::to_string(blob.data.size()) +
                             " values for shape " + shape_str(blob.shape));
        io::put_string(out, blob.name);
        io::put_u32(out, static_cast<std::uint32_t>(blob.shape.size()));
        for (std::size_t e : blob.shape) io::put_u32(out, static_cast<std::uint32_t>(e));
        io::put_f32_array(out, blob.data.data(), blob.data.size());
    }
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[5];
    io::get_bytes(in, magic, sizeof(magic), "checkpoint magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError(path + " is not a RAWT1 checkpoint");
    Checkpoint ckpt;
    ckpt.network = io::get_string(in, "network name");
    const std::uint32_t count = io::get_u32(in, "blob count");
    for (std::uint32_t b = 0; b < count; ++b) {
        CheckpointBlob blob;
        blob.name = io::get_string(in, "blob name");
        const std::uint32_t rank = io::get_u32(in, "blob rank");
        if (rank == 0 || rank > kMaxRank) throw DataError("blob " + blob.name + " has invalid rank " + std::to_string(rank));
        for (std::uint32_t r = 0; r < rank; ++r) {
            const std::uint32_t e = io::get_u32(in, "blob extent");
            if (e == 0) throw DataError("blob " + blob.name + " has a zero extent");
            blob.shape.push_back(e);
        }
        blob.data.resize(shape_numel(blob.shape));
        io::get_f32_array(in, blob.data.data(), blob.data.size(), "blob " + blob.name);
        ckpt.blobs.push_back(std::move(blob));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(path + " has trailing bytes after the last blob");
    return ckpt;
}

Checkpoint snapshot(Network<float>& net) {
    Checkpoint ckpt;
    ckpt.network = net.spec().name;
    net.visit([&](const std::string& name, Tensor<float>& t, bool) {
        ckpt.blobs.push_back({name, t.shape(), t.values()});
    });
    return ckpt;
}

void restore(Network<float>& net, const Checkpoint& checkpoint) {
    if (checkpoint.network != net.spec().name)
        throw DataError("checkpoint holds " + checkpoint.network + " weights, network is " + net.spec().name);
    std::size_t i = 0;
    net.visit([&](const std::string& name, Tensor<float>& t, bool) {
        if (i >= checkpoint.blobs.size()) throw DataError("checkpoint is missing blob " + name);
        const CheckpointBlob& blob = checkpoint.blobs[i++];
        if (blob.name != name) throw DataError("checkpoint blob " + blob.name + " found where " + name + " expected");
        if (blob.shape != t.shape())
            throw DataError("checkpoint blob " + name + " has shape " + shape_str(blob.shape) + ", network expects " +
                            shape_str(t.shape()));
        t.values() = blob.data;
    });
    if (i != checkpoint.blobs.size())
        throw DataError("checkpoint has " + std::to_string(checkpoint.blobs.size() - i) + " unexpected extra blobs");
}

void save_network(const std::string& path, Network<float>& net) { write_checkpoint(path, snapshot(net)); }

Network<float> load_network(const std::string& path) {
    const Checkpoint ckpt = read_checkpoint(path);
    const NetworkSpec full = network_spec(ckpt.network);  // validates the name
    const std::size_t conv1 = full.entries[full.index_of("Conv1")].channels;
    if (ckpt.blobs.empty() || ckpt.blobs.front().name != "Conv1.weight")
        throw DataError(path + ": first blob must be Conv1.weight");
    const std::size_t stored = ckpt.blobs.front().shape.at(0);
    std::string last_error = "no width divisor reproduces Conv1 width " + std::to_string(stored);
    for (std::size_t d = 1; d <= conv1 * 64; ++d) {
        if (std::max<std::size_t>(1, conv1 / d) != stored) continue;
        Network<float> net(network_spec(ckpt.network, d), 0);
        try {
            restore(net, ckpt);
            return net;
        } catch (const DataError& e) {
            last_error = e.what();
        }
    }
    throw DataError(path + ": " + last_error);
}

}  // namespace raunet
