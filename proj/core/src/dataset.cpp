#include "sslnet/dataset.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace sslnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kPix = 3072;

std::size_t record_size(CifarKind kind) {
    return kind == CifarKind::Cifar10 ? 1 + kPix : 2 + kPix;
}

std::vector<std::string> train_files(CifarKind kind) {
    if (kind == CifarKind::Cifar10) {
        return {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                "data_batch_5.bin"};
    }
    return {"train.bin"};
}

std::string test_file(CifarKind kind) {
    return kind == CifarKind::Cifar10 ? "test_batch.bin" : "test.bin";
}

std::string locate(const std::string& dir, const std::string& name, CifarKind kind) {
    // Accept the file directly in `dir` or under the standard extracted
    // subdirectory name.
    const std::string sub = kind == CifarKind::Cifar10 ? "cifar-10-batches-bin" : "cifar-100-binary";
    for (const fs::path& p : {fs::path(dir) / name, fs::path(dir) / sub / name}) {
        if (fs::exists(p)) return p.string();
    }
    throw DataError("cifar file not found: " + name + " under " + dir);
}

Dataset assemble(const std::vector<CifarRecord>& recs, int classes) {
    Dataset d;
    d.classes = classes;
    d.images = Tensor(static_cast<int>(recs.size()), 3, 32, 32);
    d.labels.resize(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        d.labels[i] = recs[i].label;
        float* dst = d.images.data() + i * std::size_t(3 * 32 * 32);
        for (int q = 0; q < kPix; ++q) dst[q] = static_cast<float>(recs[i].pixels[q]) / 255.0f;
    }
    return d;
}

void normalize(Dataset& d, const float mean[3], const float stddev[3]) {
    const int hw = 32 * 32;
    for (int n = 0; n < d.count(); ++n) {
        for (int c = 0; c < 3; ++c) {
            float* chan = d.images.channel(n, c);
            for (int q = 0; q < hw; ++q) chan[q] = (chan[q] - mean[c]) / stddev[c];
        }
    }
}

}  // namespace

std::vector<CifarRecord> read_cifar_file(const std::string& path, CifarKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open cifar file: " + path);
    in.seekg(0, std::ios::end);
    const std::size_t bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    const std::size_t rec = record_size(kind);
    if (bytes == 0 || bytes % rec != 0) {
        throw DataError("corrupt cifar file " + path + ": " + std::to_string(bytes) +
                        " bytes is not a whole number of " + std::to_string(rec) +
                        "-byte records (expected a multiple, e.g. " + std::to_string(10000 * rec) + ")");
    }
    std::vector<CifarRecord> recs(bytes / rec);
    std::vector<std::uint8_t> buf(rec);
    for (CifarRecord& r : recs) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(rec));
        if (!in) throw DataError("short read in cifar file " + path);
        // CIFAR-100 stores coarse then fine label; the fine label is used.
        r.label = kind == CifarKind::Cifar10 ? buf[0] : buf[1];
        std::memcpy(r.pixels.data(), buf.data() + (rec - kPix), kPix);
    }
    return recs;
}

Tensor cifar_record_to_image(const CifarRecord& rec) {
    Tensor img(1, 3, 32, 32);
    for (int q = 0; q < kPix; ++q) img.data()[q] = static_cast<float>(rec.pixels[q]) / 255.0f;
    return img;
}

CifarRecord cifar_image_to_record(const Tensor& img, int label) {
    if (img.c() != 3 || img.h() != 32 || img.w() != 32) {
        throw ShapeError("cifar_image_to_record expects (1,3,32,32), got " + img.shape().str());
    }
    CifarRecord rec;
    rec.label = label;
    for (int q = 0; q < kPix; ++q) {
        rec.pixels[q] = static_cast<std::uint8_t>(std::lround(img.data()[q] * 255.0f));
    }
    return rec;
}

std::pair<Dataset, Dataset> load_cifar(const std::string& dir, CifarKind kind) {
    if (!fs::exists(dir)) throw DataError("cifar directory does not exist: " + dir);
    const int classes = kind == CifarKind::Cifar10 ? 10 : 100;

    std::vector<CifarRecord> train_recs;
    std::string first_file;
    for (const std::string& name : train_files(kind)) {
        const std::string path = locate(dir, name, kind);
        if (first_file.empty()) first_file = path;
        auto recs = read_cifar_file(path, kind);
        train_recs.insert(train_recs.end(), recs.begin(), recs.end());
    }
    auto test_recs = read_cifar_file(locate(dir, test_file(kind), kind), kind);

    Dataset train = assemble(train_recs, classes);
    Dataset test = assemble(test_recs, classes);

    // Per-channel stats come from the training set; cache them beside the
    // data so repeated loads skip the pass (best effort — the directory may
    // be read-only).
    const fs::path stats_path = fs::path(first_file).parent_path() /
                                (kind == CifarKind::Cifar10 ? "cifar10_stats.json" : "cifar100_stats.json");
    float mean[3] = {0, 0, 0}, stddev[3] = {1, 1, 1};
    bool have_stats = false;
    if (fs::exists(stats_path)) {
        try {
            json j = json::parse(std::ifstream(stats_path));
            for (int c = 0; c < 3; ++c) {
                mean[c] = j.at("mean").at(c).get<float>();
                stddev[c] = j.at("std").at(c).get<float>();
            }
            have_stats = true;
        } catch (const json::exception&) {
            have_stats = false;
        }
    }
    if (!have_stats) {
        const int hw = 32 * 32;
        for (int c = 0; c < 3; ++c) {
            double sum = 0.0, sq = 0.0;
            for (int n = 0; n < train.count(); ++n) {
                const float* chan = train.images.channel(n, c);
                for (int q = 0; q < hw; ++q) {
                    sum += chan[q];
                    sq += static_cast<double>(chan[q]) * chan[q];
                }
            }
            const double m = sum / (static_cast<double>(train.count()) * hw);
            const double var = sq / (static_cast<double>(train.count()) * hw) - m * m;
            mean[c] = static_cast<float>(m);
            stddev[c] = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
        }
        json j;
        j["mean"] = {mean[0], mean[1], mean[2]};
        j["std"] = {stddev[0], stddev[1], stddev[2]};
        std::ofstream out(stats_path);
        if (out) out << j.dump(2) << '\n';
    }
    normalize(train, mean, stddev);
    normalize(test, mean, stddev);
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Synthetic translation task
// ---------------------------------------------------------------------------

namespace {

// Eight balanced +/-1 textures (balanced for sizes divisible by 4), each
// paired with one of the eight canonical directions.
float pattern_value(int cls, int i, int j) {
    auto band = [](int v) { return ((v % 4) + 4) % 4 < 2 ? 1.0f : -1.0f; };
    switch (cls) {
        case 0: return i % 2 == 0 ? 1.0f : -1.0f;        // row stripes, period 2
        case 1: return j % 2 == 0 ? 1.0f : -1.0f;        // col stripes, period 2
        case 2: return (i + j) % 2 == 0 ? 1.0f : -1.0f;  // checkerboard
        case 3: return band(i);                          // row bands, period 4
        case 4: return band(j);                          // col bands, period 4
        case 5: return band(i + j);                      // diagonal bands
        case 6: return band(i - j);                      // anti-diagonal bands
        case 7: return ((i / 2) + (j / 2)) % 2 == 0 ? 1.0f : -1.0f;  // 2x2 blocks
    }
    return 0.0f;
}

constexpr int kDirs[8][2] = {{0, 1}, {1, 0}, {0, -1}, {-1, 0}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};

}  // namespace

Dataset gen_synthetic_translation(int classes, int size, int samples, std::uint64_t seed, float noise) {
    if (classes < 2 || classes > 8) throw ValueError("synthetic task supports 2..8 classes");
    if (size < 8) throw ValueError("synthetic task needs size >= 8");
    if (samples < classes) throw ValueError("synthetic task needs at least one sample per class");

    Rng rng(seed);
    Dataset d;
    d.classes = classes;
    d.images = Tensor(samples, 1, size, size);
    d.labels.resize(samples);

    for (int s = 0; s < samples; ++s) {
        const int cls = s % classes;
        d.labels[s] = cls;
        const int mag = rng.uniform_int(0, size - 1);
        const int dy = kDirs[cls][0] * mag;
        const int dx = kDirs[cls][1] * mag;
        float* img = d.images.channel(s, 0);
        for (int i = 0; i < size; ++i) {
            for (int j = 0; j < size; ++j) {
                const int si = ((i + dy) % size + size) % size;
                const int sj = ((j + dx) % size + size) % size;
                img[i * size + j] = pattern_value(cls, si, sj) + noise * rng.normal();
            }
        }
    }
    return d;
}

}  // namespace sslnet
