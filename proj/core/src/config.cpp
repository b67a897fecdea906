#include "sslnet/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace sslnet {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
        }
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": type mismatch");
    }
}

ShiftModeSpec parse_shift_mode(const json& j, const std::string& where) {
    check_keys(j, {"kind", "kernel", "assignment"}, where);
    ShiftModeSpec m;
    const std::string kind = get_or<std::string>(j, "kind", "sparse_quantized", where);
    if (kind == "grouped") {
        m.kind = ShiftKind::Grouped;
    } else if (kind == "active_bilinear") {
        m.kind = ShiftKind::ActiveBilinear;
    } else if (kind == "sparse_quantized") {
        m.kind = ShiftKind::SparseQuantized;
    } else {
        throw ConfigError(where + ".kind: unknown shift kind '" + kind + "'");
    }
    m.kernel = get_or<int>(j, "kernel", 3, where);
    const std::string assign = get_or<std::string>(j, "assignment", "even_partition", where);
    if (assign == "even_partition") {
        m.assign = GroupAssign::EvenPartition;
    } else if (assign == "eq2_literal") {
        m.assign = GroupAssign::Eq2Literal;
    } else {
        throw ConfigError(where + ".assignment: unknown value '" + assign + "'");
    }
    return m;
}

json shift_mode_to_json(const ShiftModeSpec& m) {
    json j;
    j["kind"] = m.kind == ShiftKind::Grouped          ? "grouped"
                : m.kind == ShiftKind::ActiveBilinear ? "active_bilinear"
                                                      : "sparse_quantized";
    j["kernel"] = m.kernel;
    j["assignment"] = m.assign == GroupAssign::EvenPartition ? "even_partition" : "eq2_literal";
    return j;
}

ArchSpec parse_arch(const json& j, const std::string& where) {
    check_keys(j,
               {"family", "classes", "input_channels", "input_size", "width_multiplier", "se_mode",
                "se_reduction", "shift_mode", "depthwise_variant", "resnet_depth", "resnet_expansion",
                "fe", "mini"},
               where);
    ArchSpec a;
    const std::string family = get_or<std::string>(j, "family", "fe_net", where);
    if (family == "fe_net") {
        a.family = ArchFamily::FENet;
    } else if (family == "shift_resnet") {
        a.family = ArchFamily::ShiftResNet;
    } else if (family == "mini_shift_net") {
        a.family = ArchFamily::MiniShiftNet;
    } else {
        throw ConfigError(where + ".family: unknown family '" + family + "'");
    }
    a.classes = get_or<int>(j, "classes", a.family == ArchFamily::FENet ? 1000 : 10, where);
    a.input_channels = get_or<int>(j, "input_channels", 3, where);
    a.input_size = get_or<int>(j, "input_size", a.family == ArchFamily::FENet ? 224 : 32, where);
    a.width_multiplier = get_or<float>(j, "width_multiplier", 1.0f, where);
    const std::string se = get_or<std::string>(j, "se_mode", "none", where);
    if (se == "none") {
        a.se_mode = SEMode::None;
    } else if (se == "v1") {
        a.se_mode = SEMode::V1;
    } else if (se == "v2") {
        a.se_mode = SEMode::V2;
    } else {
        throw ConfigError(where + ".se_mode: unknown value '" + se + "'");
    }
    a.se_reduction = get_or<int>(j, "se_reduction", 8, where);
    if (j.contains("shift_mode")) a.shift_mode = parse_shift_mode(j.at("shift_mode"), where + ".shift_mode");
    a.depthwise_variant = get_or<bool>(j, "depthwise_variant", false, where);
    a.resnet_depth = get_or<int>(j, "resnet_depth", 20, where);
    a.resnet_expansion = get_or<int>(j, "resnet_expansion", 6, where);
    if (j.contains("fe")) {
        const json& f = j.at("fe");
        check_keys(f,
                   {"stem_channels", "stem_stride", "ssl_unit_expansion", "pool_unit_expansion",
                    "pool_unit_out", "head_channels", "dropout", "blocks"},
                   where + ".fe");
        a.fe.stem_channels = get_or<int>(f, "stem_channels", a.fe.stem_channels, where + ".fe");
        a.fe.stem_stride = get_or<int>(f, "stem_stride", a.fe.stem_stride, where + ".fe");
        a.fe.ssl_unit_expansion = get_or<int>(f, "ssl_unit_expansion", a.fe.ssl_unit_expansion, where + ".fe");
        a.fe.pool_unit_expansion =
            get_or<int>(f, "pool_unit_expansion", a.fe.pool_unit_expansion, where + ".fe");
        a.fe.pool_unit_out = get_or<int>(f, "pool_unit_out", a.fe.pool_unit_out, where + ".fe");
        a.fe.head_channels = get_or<int>(f, "head_channels", a.fe.head_channels, where + ".fe");
        a.fe.dropout_rate = get_or<float>(f, "dropout", a.fe.dropout_rate, where + ".fe");
        if (f.contains("blocks")) {
            if (!f.at("blocks").is_array()) throw ConfigError(where + ".fe.blocks: expected an array");
            a.fe.blocks.clear();
            int idx = 0;
            for (const json& b : f.at("blocks")) {
                const std::string bw = where + ".fe.blocks[" + std::to_string(idx++) + "]";
                check_keys(b, {"units", "out_c", "stride", "expansion"}, bw);
                FEBlockSpec bs;
                bs.units = get_or<int>(b, "units", 1, bw);
                bs.out_c = get_or<int>(b, "out_c", 0, bw);
                bs.stride = get_or<int>(b, "stride", 1, bw);
                bs.expansion = get_or<int>(b, "expansion", 6, bw);
                a.fe.blocks.push_back(bs);
            }
        }
    }
    if (j.contains("mini")) {
        const json& m = j.at("mini");
        check_keys(m, {"width", "stages", "expansion"}, where + ".mini");
        a.mini.width = get_or<int>(m, "width", a.mini.width, where + ".mini");
        a.mini.stages = get_or<int>(m, "stages", a.mini.stages, where + ".mini");
        a.mini.expansion = get_or<int>(m, "expansion", a.mini.expansion, where + ".mini");
    }
    return a;
}

json arch_to_json_obj(const ArchSpec& a) {
    json j;
    j["family"] = a.family == ArchFamily::FENet          ? "fe_net"
                  : a.family == ArchFamily::ShiftResNet ? "shift_resnet"
                                                        : "mini_shift_net";
    j["classes"] = a.classes;
    j["input_channels"] = a.input_channels;
    j["input_size"] = a.input_size;
    j["width_multiplier"] = a.width_multiplier;
    j["se_mode"] = a.se_mode == SEMode::None ? "none" : (a.se_mode == SEMode::V1 ? "v1" : "v2");
    j["se_reduction"] = a.se_reduction;
    j["shift_mode"] = shift_mode_to_json(a.shift_mode);
    j["depthwise_variant"] = a.depthwise_variant;
    j["resnet_depth"] = a.resnet_depth;
    j["resnet_expansion"] = a.resnet_expansion;
    json fe;
    fe["stem_channels"] = a.fe.stem_channels;
    fe["stem_stride"] = a.fe.stem_stride;
    fe["ssl_unit_expansion"] = a.fe.ssl_unit_expansion;
    fe["pool_unit_expansion"] = a.fe.pool_unit_expansion;
    fe["pool_unit_out"] = a.fe.pool_unit_out;
    fe["head_channels"] = a.fe.head_channels;
    fe["dropout"] = a.fe.dropout_rate;
    fe["blocks"] = json::array();
    for (const FEBlockSpec& b : a.fe.blocks) {
        fe["blocks"].push_back({{"units", b.units}, {"out_c", b.out_c}, {"stride", b.stride},
                                {"expansion", b.expansion}});
    }
    j["fe"] = fe;
    j["mini"] = {{"width", a.mini.width}, {"stages", a.mini.stages}, {"expansion", a.mini.expansion}};
    return j;
}

TrainConfig parse_train(const json& j, const std::string& where) {
    check_keys(j,
               {"batch_size", "base_lr", "lr_schedule", "momentum", "weight_decay", "penalty",
                "shift_freeze_fraction", "total_iters", "seed", "augment", "metrics_every"},
               where);
    TrainConfig t;
    t.batch_size = get_or<int>(j, "batch_size", 128, where);
    t.base_lr = get_or<float>(j, "base_lr", 0.1f, where);
    if (j.contains("lr_schedule")) {
        const json& s = j.at("lr_schedule");
        check_keys(s, {"kind", "milestones", "factor"}, where + ".lr_schedule");
        const std::string kind = get_or<std::string>(s, "kind", "step", where + ".lr_schedule");
        if (kind == "step") {
            StepDecay sd;
            sd.milestones = get_or<std::vector<int>>(s, "milestones", {}, where + ".lr_schedule");
            sd.factor = get_or<float>(s, "factor", 0.1f, where + ".lr_schedule");
            t.schedule = sd;
        } else if (kind == "linear") {
            t.schedule = LinearDecay{};
        } else {
            throw ConfigError(where + ".lr_schedule.kind: unknown value '" + kind + "'");
        }
    }
    t.momentum = get_or<float>(j, "momentum", 0.9f, where);
    t.weight_decay = get_or<float>(j, "weight_decay", 0.0f, where);
    if (j.contains("penalty")) {
        const json& p = j.at("penalty");
        check_keys(p, {"lambda", "norm"}, where + ".penalty");
        t.penalty.lambda = get_or<float>(p, "lambda", 0.0f, where + ".penalty");
        const std::string norm = get_or<std::string>(p, "norm", "l2", where + ".penalty");
        if (norm == "l1") {
            t.penalty.norm = PenaltyConfig::Norm::L1;
        } else if (norm == "l2") {
            t.penalty.norm = PenaltyConfig::Norm::L2;
        } else {
            throw ConfigError(where + ".penalty.norm: unknown value '" + norm + "'");
        }
    }
    t.shift_freeze_fraction = get_or<float>(j, "shift_freeze_fraction", 0.75f, where);
    t.total_iters = get_or<int>(j, "total_iters", 0, where);
    t.seed = get_or<std::uint64_t>(j, "seed", 1, where);
    const std::string aug = get_or<std::string>(j, "augment", "none", where);
    if (aug == "none") {
        t.augment = Augment::None;
    } else if (aug == "flip_crop") {
        t.augment = Augment::FlipCrop;
    } else {
        throw ConfigError(where + ".augment: unknown value '" + aug + "'");
    }
    t.metrics_every = get_or<int>(j, "metrics_every", 100, where);
    return t;
}

DatasetSpec parse_dataset(const json& j, const std::string& where) {
    check_keys(j, {"type", "path", "classes", "size", "samples", "test_samples", "noise", "seed"}, where);
    DatasetSpec d;
    const std::string type = get_or<std::string>(j, "type", "synthetic_translation", where);
    if (type == "cifar10") {
        d.type = DatasetSpec::Type::Cifar10;
    } else if (type == "cifar100") {
        d.type = DatasetSpec::Type::Cifar100;
    } else if (type == "synthetic_translation") {
        d.type = DatasetSpec::Type::SyntheticTranslation;
    } else {
        throw ConfigError(where + ".type: unknown dataset type '" + type + "'");
    }
    d.path = get_or<std::string>(j, "path", "", where);
    d.classes = get_or<int>(j, "classes", 4, where);
    d.size = get_or<int>(j, "size", 12, where);
    d.samples = get_or<int>(j, "samples", 2000, where);
    d.test_samples = get_or<int>(j, "test_samples", 400, where);
    d.noise = get_or<float>(j, "noise", 0.25f, where);
    d.seed = get_or<std::uint64_t>(j, "seed", 7, where);
    if (d.type != DatasetSpec::Type::SyntheticTranslation) {
        if (d.path.empty()) throw ConfigError(where + ".path: required for cifar datasets");
        if (!std::filesystem::exists(d.path)) {
            throw ConfigError(where + ".path: '" + d.path + "' does not exist");
        }
    }
    return d;
}

}  // namespace

Config parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"arch", "train", "dataset", "output_dir"}, "config");
    Config cfg;
    if (j.contains("arch")) cfg.arch = parse_arch(j.at("arch"), "config.arch");
    if (j.contains("train")) cfg.train = parse_train(j.at("train"), "config.train");
    if (j.contains("dataset")) cfg.dataset = parse_dataset(j.at("dataset"), "config.dataset");
    cfg.output_dir = get_or<std::string>(j, "output_dir", "out", "config");
    return cfg;
}

Config load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string arch_to_json(const ArchSpec& spec) { return arch_to_json_obj(spec).dump(); }

ArchSpec arch_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("arch json invalid: ") + e.what());
    }
    return parse_arch(j, "arch");
}

std::pair<Dataset, Dataset> load_dataset(const DatasetSpec& spec) {
    switch (spec.type) {
        case DatasetSpec::Type::Cifar10:
            return load_cifar(spec.path, CifarKind::Cifar10);
        case DatasetSpec::Type::Cifar100:
            return load_cifar(spec.path, CifarKind::Cifar100);
        case DatasetSpec::Type::SyntheticTranslation: {
            Dataset train = gen_synthetic_translation(spec.classes, spec.size, spec.samples, spec.seed,
                                                      spec.noise);
            Dataset test = gen_synthetic_translation(spec.classes, spec.size, spec.test_samples,
                                                     spec.seed + 1, spec.noise);
            return {std::move(train), std::move(test)};
        }
    }
    throw ConfigError("unknown dataset type");
}

}  // namespace sslnet
