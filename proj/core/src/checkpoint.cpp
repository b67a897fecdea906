#include "sslnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace sslnet {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'L', 'N', 'E', 'T', '1', '\0'};

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw DataError("checkpoint truncated: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
    static_assert(sizeof(float) == 4);
    // float32 bytes are written verbatim; this code targets little-endian
    // hosts (checked by the loader's magic, which is byte-order neutral).
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
}

}  // namespace

void save_checkpoint(const Graph& g, const std::string& metadata_json, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    put_u64(out, metadata_json.size());
    out.write(metadata_json.data(), static_cast<std::streamsize>(metadata_json.size()));
    g.visit_params([&](const ParamRef& p) {
        put_u64(out, p.name.size());
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u64(out, 1);
        put_u64(out, p.value->size());
        put_floats(out, *p.value);
    });
    if (!out) throw DataError("write failed for checkpoint: " + path);
}

CheckpointFile read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    in.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);

    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw DataError("bad checkpoint magic in " + path);
    }
    CheckpointFile cf;
    const std::uint64_t meta_len = get_u64(in, path);
    if (8 + 8 + meta_len > file_size) throw DataError("checkpoint metadata length overruns file: " + path);
    cf.metadata_json.resize(meta_len);
    in.read(cf.metadata_json.data(), static_cast<std::streamsize>(meta_len));

    while (true) {
        if (static_cast<std::uint64_t>(in.tellg()) == file_size) break;
        CheckpointBlock blk;
        const std::uint64_t name_len = get_u64(in, path);
        if (name_len > file_size) throw DataError("checkpoint block name length corrupt: " + path);
        blk.name.resize(name_len);
        in.read(blk.name.data(), static_cast<std::streamsize>(name_len));
        const std::uint64_t rank = get_u64(in, path);
        if (rank == 0 || rank > 8) throw DataError("checkpoint block rank corrupt: " + path);
        std::uint64_t count = 1;
        for (std::uint64_t r = 0; r < rank; ++r) {
            blk.dims.push_back(get_u64(in, path));
            count *= blk.dims.back();
        }
        const std::uint64_t remaining = file_size - static_cast<std::uint64_t>(in.tellg());
        if (count * 4 > remaining) {
            throw DataError("checkpoint block '" + blk.name + "' claims " + std::to_string(count * 4) +
                            " data bytes but only " + std::to_string(remaining) + " remain: " + path);
        }
        blk.data.resize(count);
        in.read(reinterpret_cast<char*>(blk.data.data()), static_cast<std::streamsize>(count * 4));
        if (!in) throw DataError("checkpoint truncated in block '" + blk.name + "': " + path);
        cf.blocks.push_back(std::move(blk));
    }
    return cf;
}

std::string load_checkpoint_into(Graph& g, const std::string& path) {
    CheckpointFile cf = read_checkpoint(path);
    std::map<std::string, const CheckpointBlock*> by_name;
    for (const CheckpointBlock& b : cf.blocks) {
        if (!by_name.emplace(b.name, &b).second) {
            throw DataError("duplicate checkpoint block '" + b.name + "' in " + path);
        }
    }
    std::size_t used = 0;
    g.visit_params([&](const ParamRef& p) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) throw DataError("checkpoint missing parameter '" + p.name + "'");
        const CheckpointBlock& blk = *it->second;
        if (blk.data.size() != p.value->size()) {
            throw DataError("checkpoint parameter '" + p.name + "' has " + std::to_string(blk.data.size()) +
                            " values, graph expects " + std::to_string(p.value->size()));
        }
        *p.value = blk.data;
        ++used;
    });
    if (used != cf.blocks.size()) {
        throw DataError("checkpoint has " + std::to_string(cf.blocks.size()) + " blocks but graph uses " +
                        std::to_string(used));
    }
    return cf.metadata_json;
}

}  // namespace sslnet
