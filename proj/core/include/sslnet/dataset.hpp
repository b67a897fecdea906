#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sslnet/tensor.hpp"

namespace sslnet {

struct Dataset {
    Tensor images;            // (N, c, h, w)
    std::vector<int> labels;  // length N
    int classes = 0;

    int count() const { return images.empty() ? 0 : images.n(); }
};

enum class CifarKind { Cifar10, Cifar100 };

// One raw CIFAR-10 record: label byte + 3072 pixel bytes (R, G, B planes,
// row-major). CIFAR-100 records carry two label bytes (coarse, fine).
struct CifarRecord {
    int label = 0;
    std::array<std::uint8_t, 3072> pixels{};
};

// Low-level reader for one binary batch file. Record count is derived from
// the file size; a size that is not a whole number of records is rejected
// with expected-vs-actual bytes.
std::vector<CifarRecord> read_cifar_file(const std::string& path, CifarKind kind);

// Pixel bytes -> (1,3,32,32) float tensor in [0,1], and back. Round-trips
// bitwise on the byte side.
Tensor cifar_record_to_image(const CifarRecord& rec);
CifarRecord cifar_image_to_record(const Tensor& img, int label);

// Loads the standard binary batch layout under `dir`
// (data_batch_1..5.bin + test_batch.bin, or train.bin + test.bin for
// CIFAR-100), normalizes per channel by training-set mean/std, and caches the
// computed stats beside the data when the directory is writable.
std::pair<Dataset, Dataset> load_cifar(const std::string& dir, CifarKind kind);

// Per-class periodic +/-1 patterns with identical pixel histograms,
// cyclically translated along a class-specific direction by a random
// per-sample magnitude, plus Gaussian noise. Histogram equality makes the
// task unlearnable for any pointwise-plus-global-pooling network while a
// small receptive field separates the classes easily.
Dataset gen_synthetic_translation(int classes, int size, int samples, std::uint64_t seed,
                                  float noise = 0.25f);

}  // namespace sslnet
