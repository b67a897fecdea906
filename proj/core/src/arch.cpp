#include "sslnet/arch.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace sslnet {

int scale_channels(int c, float multiplier) {
    return std::max(1, static_cast<int>(std::lround(static_cast<double>(c) * multiplier)));
}

ShiftParams init_shift_params(int channels, const ShiftModeSpec& mode, Rng& rng) {
    if (mode.kind == ShiftKind::Grouped) {
        ShiftParams sp = grouped_displacements(channels, mode.kernel, mode.assign);
        sp.frozen = true;  // heuristic assignment is not task-driven
        return sp;
    }
    ShiftParams sp = ShiftParams::zeros(channels);
    for (int c = 0; c < channels; ++c) {
        sp.alpha[c] = rng.uniform(-1.0f, 1.0f);
        sp.beta[c] = rng.uniform(-1.0f, 1.0f);
    }
    return sp;
}

namespace {

void he_init(std::vector<float>& w, int fan_in, Rng& rng) {
    const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
    for (float& v : w) v = rng.normal(0.0f, stddev);
}

int add_conv(Graph& g, int input, const std::string& name, int in_c, int out_c, int k, int stride,
             int pad, bool bias, Rng& rng) {
    Node nd(OpKind::Conv, name);
    nd.inputs = {{input, 0}};
    nd.conv = std::make_unique<ConvParams>(ConvParams::make(in_c, out_c, k, stride, pad, bias));
    he_init(nd.conv->weight, in_c * k * k, rng);
    return g.add(std::move(nd));
}

int add_bn(Graph& g, int input, const std::string& name, int c) {
    Node nd(OpKind::BatchNorm, name);
    nd.inputs = {{input, 0}};
    nd.bn = std::make_unique<BNParams>(BNParams::make(c));
    return g.add(std::move(nd));
}

int add_relu(Graph& g, int input, const std::string& name) {
    Node nd(OpKind::ReLU, name);
    nd.inputs = {{input, 0}};
    return g.add(std::move(nd));
}

int add_shift(Graph& g, int input, const std::string& name, int channels, const ShiftModeSpec& mode,
              Rng& rng) {
    Node nd(OpKind::Shift, name);
    nd.inputs = {{input, 0}};
    nd.shift_kind = mode.kind;
    nd.shift = std::make_unique<ShiftParams>(init_shift_params(channels, mode, rng));
    return g.add(std::move(nd));
}

int add_depthwise3(Graph& g, int input, const std::string& name, int channels, Rng& rng) {
    Node nd(OpKind::DepthwiseConv, name);
    nd.inputs = {{input, 0}};
    nd.dw = std::make_unique<DepthwiseParams>(DepthwiseParams::make(channels, 3, 1, 1, false));
    he_init(nd.dw->weight, 9, rng);
    return g.add(std::move(nd));
}

int add_fc(Graph& g, int input, const std::string& name, int in, int out, Rng& rng) {
    Node nd(OpKind::FC, name);
    nd.inputs = {{input, 0}};
    nd.fc = std::make_unique<FCParams>(FCParams::make(in, out));
    he_init(nd.fc->weight, in, rng);
    return g.add(std::move(nd));
}

int add_simple(Graph& g, OpKind kind, int input, const std::string& name) {
    Node nd(kind, name);
    nd.inputs = {{input, 0}};
    return g.add(std::move(nd));
}

int add_binary(Graph& g, OpKind kind, Port a, Port b, const std::string& name) {
    Node nd(kind, name);
    nd.inputs = {a, b};
    return g.add(std::move(nd));
}

// Spatial operator of an IB unit / CSC module: the shift layer, or its
// depthwise stand-in for the DW ablation.
int add_spatial_op(Graph& g, int input, const std::string& name, int channels,
                   const ShiftModeSpec& mode, bool depthwise, Rng& rng) {
    if (depthwise) return add_depthwise3(g, input, name + ".dw", channels, rng);
    return add_shift(g, input, name + ".shift", channels, mode, rng);
}

}  // namespace

int build_se_module(Graph& g, int gated_id, int channels, int reduction, Rng& rng,
                    const std::string& name) {
    if (reduction < 1) throw ValueError("se reduction must be >= 1");
    const int hidden = (channels + reduction - 1) / reduction;
    int cur = add_simple(g, OpKind::GlobalAvgPool, gated_id, name + ".squeeze");
    cur = add_fc(g, cur, name + ".fc1", channels, hidden, rng);
    cur = add_relu(g, cur, name + ".relu");
    cur = add_fc(g, cur, name + ".fc2", hidden, channels, rng);
    cur = add_simple(g, OpKind::Sigmoid, cur, name + ".gate");
    return add_binary(g, OpKind::ScaleChannels, {gated_id, 0}, {cur, 0}, name + ".scale");
}

int build_ib_unit(Graph& g, int input_id, UnitKind kind, int in_c, int out_c, int expansion,
                  const ShiftModeSpec& mode, SEMode se, int se_reduction, bool depthwise, Rng& rng,
                  const std::string& name) {
    if (kind == UnitKind::IBSkip && in_c != out_c) {
        throw ValueError("IB-Skip unit '" + name + "' needs in_c == out_c, got " +
                         std::to_string(in_c) + " -> " + std::to_string(out_c));
    }
    const int mid = in_c * expansion;
    int cur = add_conv(g, input_id, name + ".expand", in_c, mid, 1, 1, 0, false, rng);
    cur = add_bn(g, cur, name + ".expand_bn", mid);
    cur = add_relu(g, cur, name + ".expand_relu");
    cur = add_spatial_op(g, cur, name, mid, mode, depthwise, rng);
    if (kind == UnitKind::IBPool) cur = add_simple(g, OpKind::AvgPool, cur, name + ".pool");
    if (se == SEMode::V2) cur = build_se_module(g, cur, mid, se_reduction, rng, name + ".se");
    cur = add_conv(g, cur, name + ".project", mid, out_c, 1, 1, 0, false, rng);
    cur = add_bn(g, cur, name + ".project_bn", out_c);
    if (se == SEMode::V1) cur = build_se_module(g, cur, out_c, se_reduction, rng, name + ".se");
    if (kind == UnitKind::IBSkip) {
        cur = add_binary(g, OpKind::Add, {input_id, 0}, {cur, 0}, name + ".add");
    }
    return cur;
}

int build_fe_block(Graph& g, int input_id, const FEBlockSpec& spec, int in_c,
                   const ShiftModeSpec& mode, SEMode se, int se_reduction, bool depthwise, Rng& rng,
                   const std::string& name) {
    if (spec.units < 1) throw ValueError("fe block '" + name + "' needs at least one unit");
    const int denom = 1 << (spec.units - 1);
    if (spec.units > 1 && in_c < denom) {
        throw ValueError("fe block '" + name + "': in_c " + std::to_string(in_c) +
                         " too small to split into " + std::to_string(denom) + " parts");
    }
    int cur = input_id;
    for (int l = 1; l < spec.units; ++l) {
        const int take = static_cast<int>((static_cast<std::int64_t>(in_c) * (1 << (l - 1))) / denom);
        const std::string uname = name + ".u" + std::to_string(l);
        Node split(OpKind::Split, uname + ".split");
        split.inputs = {{cur, 0}};
        split.split_at = take;
        const int split_id = g.add(std::move(split));
        const int transformed = build_ib_unit(g, split_id, UnitKind::IBSkip, take, take, spec.expansion,
                                              mode, se, se_reduction, depthwise, rng, uname);
        cur = add_binary(g, OpKind::Concat, {transformed, 0}, {split_id, 1}, uname + ".concat");
    }
    const std::string lname = name + ".u" + std::to_string(spec.units);
    const UnitKind last = spec.stride == 2 ? UnitKind::IBPool : UnitKind::IBPlain;
    return build_ib_unit(g, cur, last, in_c, spec.out_c, spec.expansion, mode, se, se_reduction,
                         depthwise, rng, lname);
}

int build_csc_module(Graph& g, int input_id, int in_c, int out_c, int stride, int expansion,
                     const ShiftModeSpec& mode, Rng& rng, const std::string& name) {
    const int mid = in_c * expansion;
    int cur = add_conv(g, input_id, name + ".expand", in_c, mid, 1, stride, 0, false, rng);
    cur = add_bn(g, cur, name + ".expand_bn", mid);
    cur = add_relu(g, cur, name + ".expand_relu");
    cur = add_shift(g, cur, name + ".shift", mid, mode, rng);
    cur = add_conv(g, cur, name + ".project", mid, out_c, 1, 1, 0, false, rng);
    cur = add_bn(g, cur, name + ".project_bn", out_c);
    int shortcut = input_id;
    if (stride != 1 || in_c != out_c) {
        shortcut = add_conv(g, input_id, name + ".shortcut", in_c, out_c, 1, stride, 0, false, rng);
        shortcut = add_bn(g, shortcut, name + ".shortcut_bn", out_c);
    }
    return add_binary(g, OpKind::Add, {shortcut, 0}, {cur, 0}, name + ".add");
}

Graph build_fe_net(const ArchSpec& spec, Rng& rng) {
    const float m = spec.width_multiplier;
    const FENetSpec& fe = spec.fe;
    Graph g;
    const int input = g.add(Node(OpKind::Input, "input"));

    const int stem_c = scale_channels(fe.stem_channels, m);
    int cur = add_conv(g, input, "stem.conv", spec.input_channels, stem_c, 3, fe.stem_stride, 1, false, rng);
    cur = add_bn(g, cur, "stem.bn", stem_c);
    cur = add_relu(g, cur, "stem.relu");

    cur = build_ib_unit(g, cur, UnitKind::IBSkip, stem_c, stem_c, fe.ssl_unit_expansion, spec.shift_mode,
                        spec.se_mode, spec.se_reduction, spec.depthwise_variant, rng, "unit1");
    const int pool_c = scale_channels(fe.pool_unit_out, m);
    cur = build_ib_unit(g, cur, UnitKind::IBPool, stem_c, pool_c, fe.pool_unit_expansion, spec.shift_mode,
                        spec.se_mode, spec.se_reduction, spec.depthwise_variant, rng, "unit2");

    int c = pool_c;
    for (std::size_t b = 0; b < fe.blocks.size(); ++b) {
        FEBlockSpec bs = fe.blocks[b];
        bs.out_c = scale_channels(bs.out_c, m);
        cur = build_fe_block(g, cur, bs, c, spec.shift_mode, spec.se_mode, spec.se_reduction,
                             spec.depthwise_variant, rng, "block" + std::to_string(b + 1));
        c = bs.out_c;
    }

    const int head_c = scale_channels(fe.head_channels, m);
    cur = add_conv(g, cur, "head.conv", c, head_c, 1, 1, 0, false, rng);
    cur = add_bn(g, cur, "head.bn", head_c);
    cur = add_relu(g, cur, "head.relu");
    cur = add_simple(g, OpKind::GlobalAvgPool, cur, "head.gap");
    {
        Node drop(OpKind::Dropout, "head.dropout");
        drop.inputs = {{cur, 0}};
        drop.dropout_rate = fe.dropout_rate;
        cur = g.add(std::move(drop));
    }
    cur = add_conv(g, cur, "classifier", head_c, spec.classes, 1, 1, 0, true, rng);
    g.set_logits(cur);
    {
        Node loss(OpKind::SoftmaxCE, "loss");
        loss.inputs = {{cur, 0}};
        g.add(std::move(loss));
    }
    g.infer_shapes(spec.input_shape());
    return g;
}

Graph build_shift_resnet(const ArchSpec& spec, Rng& rng) {
    if (spec.resnet_depth != 20 && spec.resnet_depth != 56) {
        throw ValueError("shift resnet depth must be 20 or 56, got " + std::to_string(spec.resnet_depth));
    }
    const int per_stage = (spec.resnet_depth - 2) / 6;
    const int widths[3] = {16, 32, 64};

    Graph g;
    const int input = g.add(Node(OpKind::Input, "input"));
    int cur = add_conv(g, input, "stem.conv", spec.input_channels, widths[0], 3, 1, 1, false, rng);
    cur = add_bn(g, cur, "stem.bn", widths[0]);
    cur = add_relu(g, cur, "stem.relu");

    int in_c = widths[0];
    for (int s = 0; s < 3; ++s) {
        for (int b = 0; b < per_stage; ++b) {
            const int stride = (s > 0 && b == 0) ? 2 : 1;
            const std::string name = "block" + std::to_string(s + 1) + "_" + std::to_string(b + 1);
            cur = build_csc_module(g, cur, in_c, widths[s], stride, spec.resnet_expansion,
                                   spec.shift_mode, rng, name);
            in_c = widths[s];
        }
    }
    cur = add_simple(g, OpKind::GlobalAvgPool, cur, "gap");
    cur = add_fc(g, cur, "fc", widths[2], spec.classes, rng);
    g.set_logits(cur);
    {
        Node loss(OpKind::SoftmaxCE, "loss");
        loss.inputs = {{cur, 0}};
        g.add(std::move(loss));
    }
    g.infer_shapes(spec.input_shape());
    return g;
}

Graph build_mini_shift_net(const ArchSpec& spec, Rng& rng) {
    const MiniNetSpec& mini = spec.mini;
    Graph g;
    const int input = g.add(Node(OpKind::Input, "input"));
    int cur = add_conv(g, input, "stem.conv", spec.input_channels, mini.width, 1, 1, 0, false, rng);
    cur = add_bn(g, cur, "stem.bn", mini.width);
    cur = add_relu(g, cur, "stem.relu");
    for (int s = 0; s < mini.stages; ++s) {
        cur = build_csc_module(g, cur, mini.width, mini.width, 1, mini.expansion, spec.shift_mode, rng,
                               "block" + std::to_string(s + 1));
    }
    cur = add_simple(g, OpKind::GlobalAvgPool, cur, "gap");
    cur = add_fc(g, cur, "fc", mini.width, spec.classes, rng);
    g.set_logits(cur);
    {
        Node loss(OpKind::SoftmaxCE, "loss");
        loss.inputs = {{cur, 0}};
        g.add(std::move(loss));
    }
    g.infer_shapes(spec.input_shape());
    return g;
}

Graph build_network(const ArchSpec& spec, Rng& rng) {
    switch (spec.family) {
        case ArchFamily::FENet: return build_fe_net(spec, rng);
        case ArchFamily::ShiftResNet: return build_shift_resnet(spec, rng);
        case ArchFamily::MiniShiftNet: return build_mini_shift_net(spec, rng);
    }
    throw ValueError("unknown arch family");
}

Graph build_small_conv_net(int in_channels, int classes, int width, Rng& rng) {
    Graph g;
    const int input = g.add(Node(OpKind::Input, "input"));
    int cur = add_conv(g, input, "conv1", in_channels, width, 3, 1, 1, false, rng);
    cur = add_bn(g, cur, "bn1", width);
    cur = add_relu(g, cur, "relu1");
    cur = add_conv(g, cur, "conv2", width, 2 * width, 3, 1, 1, false, rng);
    cur = add_bn(g, cur, "bn2", 2 * width);
    cur = add_relu(g, cur, "relu2");
    cur = add_simple(g, OpKind::GlobalAvgPool, cur, "gap");
    cur = add_fc(g, cur, "fc", 2 * width, classes, rng);
    g.set_logits(cur);
    {
        Node loss(OpKind::SoftmaxCE, "loss");
        loss.inputs = {{cur, 0}};
        g.add(std::move(loss));
    }
    return g;
}

// ---------------------------------------------------------------------------
// Ablation helpers
// ---------------------------------------------------------------------------

Graph remove_shift_layers(const Graph& g, const std::vector<std::string>& layer_names) {
    std::vector<int> removed_ids;
    for (const std::string& name : layer_names) {
        const int id = g.find(name);
        if (id < 0) throw ValueError("remove_shift_layers: no node named '" + name + "'");
        if (g.node(id).kind != OpKind::Shift) {
            throw ValueError("remove_shift_layers: node '" + name + "' is not a shift layer");
        }
        removed_ids.push_back(id);
    }

    Graph out;
    std::vector<int> new_id(g.size(), -1);
    // Consumers of a removed shift read through to its input instead.
    std::function<Port(Port)> map_port = [&](Port p) -> Port {
        if (new_id[p.node] >= 0) return Port{new_id[p.node], p.slot};
        return map_port(g.node(p.node).inputs[0]);
    };
    int new_logits = -1;
    for (int id = 0; id < g.size(); ++id) {
        const Node& nd = g.node(id);
        if (std::find(removed_ids.begin(), removed_ids.end(), id) != removed_ids.end()) continue;
        Node copy(nd.kind, nd.name);
        copy.split_at = nd.split_at;
        copy.dropout_rate = nd.dropout_rate;
        copy.shift_kind = nd.shift_kind;
        if (nd.conv) copy.conv = std::make_unique<ConvParams>(*nd.conv);
        if (nd.dw) copy.dw = std::make_unique<DepthwiseParams>(*nd.dw);
        if (nd.bn) copy.bn = std::make_unique<BNParams>(*nd.bn);
        if (nd.fc) copy.fc = std::make_unique<FCParams>(*nd.fc);
        if (nd.shift) copy.shift = std::make_unique<ShiftParams>(*nd.shift);
        copy.inputs.reserve(nd.inputs.size());
        for (const Port& p : nd.inputs) copy.inputs.push_back(map_port(p));
        new_id[id] = out.add(std::move(copy));
        if (id == g.logits_id()) new_logits = new_id[id];
    }
    if (new_logits >= 0) out.set_logits(new_logits);
    return out;
}

std::vector<LayerSparsity> shift_layer_sparsities(const Graph& g) {
    std::vector<LayerSparsity> rows;
    for (int id : g.shift_node_ids()) {
        const ShiftParams& sp = *g.node(id).shift;
        LayerSparsity row;
        row.name = g.node(id).name;
        row.channels = sp.channels();
        for (int c = 0; c < sp.channels(); ++c) {
            if (round_displacement(sp.alpha[c]) == 0 && round_displacement(sp.beta[c]) == 0) ++row.unshifted;
        }
        row.sparsity = row.channels == 0 ? 1.0 : static_cast<double>(row.unshifted) / row.channels;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> ablation_order(const Graph& g) {
    auto rows = shift_layer_sparsities(g);
    std::stable_sort(rows.begin(), rows.end(),
                     [](const LayerSparsity& a, const LayerSparsity& b) { return a.sparsity > b.sparsity; });
    std::vector<std::string> names;
    names.reserve(rows.size());
    for (const auto& r : rows) names.push_back(r.name);
    return names;
}

void set_uniform_shift_sparsity(Graph& g, double sparsity, Rng& rng) {
    if (sparsity < 0.0 || sparsity > 1.0) throw ValueError("sparsity must be in [0,1]");
    for (int id : g.shift_node_ids()) {
        ShiftParams& sp = *g.node(id).shift;
        const int c = sp.channels();
        const int unshifted = static_cast<int>(std::lround(sparsity * c));
        for (int i = 0; i < c; ++i) {
            if (i < unshifted) {
                sp.alpha[i] = 0.0f;
                sp.beta[i] = 0.0f;
            } else {
                sp.alpha[i] = rng.bernoulli(0.5) ? 1.0f : -1.0f;
                sp.beta[i] = rng.bernoulli(0.5) ? 1.0f : -1.0f;
            }
        }
    }
}

}  // namespace sslnet
