#pragma once

#include <optional>
#include <string>

#include "sslnet/arch.hpp"
#include "sslnet/dataset.hpp"
#include "sslnet/train.hpp"

namespace sslnet {

struct DatasetSpec {
    enum class Type { Cifar10, Cifar100, SyntheticTranslation };
    Type type = Type::SyntheticTranslation;
    std::string path;  // cifar directory
    int classes = 4;
    int size = 12;
    int samples = 2000;
    int test_samples = 400;
    float noise = 0.25f;
    std::uint64_t seed = 7;
};

struct Config {
    ArchSpec arch;
    TrainConfig train;
    DatasetSpec dataset;
    std::string output_dir = "out";
};

// Parses and validates a JSON config document. Unknown keys and type
// mismatches are rejected with a path-qualified ConfigError before any work
// starts; a cifar dataset path must exist.
Config parse_config(const std::string& json_text);
Config load_config_file(const std::string& path);

std::string arch_to_json(const ArchSpec& spec);
ArchSpec arch_from_json(const std::string& json_text);

std::pair<Dataset, Dataset> load_dataset(const DatasetSpec& spec);

}  // namespace sslnet
