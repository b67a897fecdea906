#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sslnet/graph.hpp"

namespace sslnet {

enum class SEMode { None, V1, V2 };
enum class ArchFamily { FENet, ShiftResNet, MiniShiftNet };
enum class UnitKind { IBPlain, IBSkip, IBPool };

struct ShiftModeSpec {
    ShiftKind kind = ShiftKind::SparseQuantized;
    int kernel = 3;  // Grouped assignment kernel size
    GroupAssign assign = GroupAssign::EvenPartition;
};

struct FEBlockSpec {
    int units = 1;      // n
    int out_c = 0;
    int stride = 1;     // 1 or 2, applied by the final unit
    int expansion = 6;  // t
};

struct FENetSpec {
    int stem_channels = 16;
    int stem_stride = 2;  // 1 for the 32x32 desk-scale variant
    int ssl_unit_expansion = 4;
    int pool_unit_expansion = 5;
    int pool_unit_out = 32;
    std::vector<FEBlockSpec> blocks = {
        {3, 64, 2, 6}, {4, 128, 2, 6}, {4, 128, 1, 6}, {4, 256, 2, 6}, {3, 256, 1, 6},
    };
    int head_channels = 1380;
    float dropout_rate = 0.2f;
};

struct MiniNetSpec {
    int width = 16;
    int stages = 3;
    int expansion = 2;
};

struct ArchSpec {
    ArchFamily family = ArchFamily::FENet;
    int classes = 1000;
    int input_channels = 3;
    int input_size = 224;
    float width_multiplier = 1.0f;
    SEMode se_mode = SEMode::None;
    int se_reduction = 8;
    ShiftModeSpec shift_mode;
    bool depthwise_variant = false;  // 3x3 depthwise instead of shifts
    int resnet_depth = 20;
    int resnet_expansion = 6;
    FENetSpec fe;
    MiniNetSpec mini;

    Shape4 input_shape(int batch = 1) const { return {batch, input_channels, input_size, input_size}; }
};

// Width-multiplier channel scaling: nearest integer, never below 1. Applied
// to every channel count except the class count.
int scale_channels(int c, float multiplier);

// ---------------------------------------------------------------------------
// Builders. The module-level builders append to a graph under construction
// and return the id of the subgraph's output node. Weights are He-initialized
// from the rng; shift displacements start uniform in (-1, 1) unless the mode
// is Grouped, which assigns the fixed kernel offsets and freezes them.
// ---------------------------------------------------------------------------

ShiftParams init_shift_params(int channels, const ShiftModeSpec& mode, Rng& rng);

// 1x1 expand (+BN+ReLU) -> shift -> 1x1 project (+BN), residual add around
// the module. Stage transitions use stride on the expand conv and a
// projected shortcut.
int build_csc_module(Graph& g, int input_id, int in_c, int out_c, int stride, int expansion,
                     const ShiftModeSpec& mode, Rng& rng, const std::string& name);

// Inverted bottleneck with the shift (or depthwise) providing the receptive
// field. IBPool places a 2x2 average pool between the spatial op and the
// projection.
int build_ib_unit(Graph& g, int input_id, UnitKind kind, int in_c, int out_c, int expansion,
                  const ShiftModeSpec& mode, SEMode se, int se_reduction, bool depthwise, Rng& rng,
                  const std::string& name);

// Progressive split/concat block: unit l transforms the first
// floor(in_c * 2^(l-1) / 2^(n-1)) channels and passes the rest through
// untouched; the final unit covers all channels and changes width or
// resolution.
int build_fe_block(Graph& g, int input_id, const FEBlockSpec& spec, int in_c,
                   const ShiftModeSpec& mode, SEMode se, int se_reduction, bool depthwise, Rng& rng,
                   const std::string& name);

// GAP -> FC(c -> ceil(c/r)) -> ReLU -> FC -> sigmoid -> channel scale,
// gating `gated_id` (which must carry `channels` channels).
int build_se_module(Graph& g, int gated_id, int channels, int reduction, Rng& rng,
                    const std::string& name);

Graph build_fe_net(const ArchSpec& spec, Rng& rng);
Graph build_shift_resnet(const ArchSpec& spec, Rng& rng);
Graph build_mini_shift_net(const ArchSpec& spec, Rng& rng);
Graph build_network(const ArchSpec& spec, Rng& rng);

// Small 3x3-conv reference net (conv-BN-ReLU stacks + GAP head); the
// receptive-field oracle used to validate datasets and as an all-conv
// benchmark subject.
Graph build_small_conv_net(int in_channels, int classes, int width, Rng& rng);

// ---------------------------------------------------------------------------
// Cost accounting
// ---------------------------------------------------------------------------

struct CostReport {
    std::uint64_t madds = 0;   // multiply-adds for one forward at the given input
    std::uint64_t params = 0;  // learnable scalars, including alpha/beta
};

CostReport count_cost(const Graph& g, Shape4 input_shape);

// ---------------------------------------------------------------------------
// Ablation helpers
// ---------------------------------------------------------------------------

// Replaces the named shift nodes by identity wiring (the node and its
// parameters disappear). Names must refer to Shift nodes.
Graph remove_shift_layers(const Graph& g, const std::vector<std::string>& layer_names);

struct LayerSparsity {
    std::string name;  // shift node name
    int unshifted = 0;
    int channels = 0;
    double sparsity = 0.0;
};

std::vector<LayerSparsity> shift_layer_sparsities(const Graph& g);

// Shift layer names ordered most-unimportant first (highest sparsity,
// ties broken by graph order) — the removal protocol.
std::vector<std::string> ablation_order(const Graph& g);

// Sets every shift layer to approximately `sparsity` unshifted channels
// (the rest get displacement magnitude 1); bench plumbing.
void set_uniform_shift_sparsity(Graph& g, double sparsity, Rng& rng);

}  // namespace sslnet
