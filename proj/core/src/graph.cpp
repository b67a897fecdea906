#include "sslnet/graph.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

namespace sslnet {

const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::Input: return "input";
        case OpKind::Conv: return "conv";
        case OpKind::DepthwiseConv: return "depthwise";
        case OpKind::BatchNorm: return "batchnorm";
        case OpKind::ReLU: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Shift: return "shift";
        case OpKind::MaxPool: return "maxpool";
        case OpKind::AvgPool: return "avgpool";
        case OpKind::GlobalAvgPool: return "gap";
        case OpKind::FC: return "fc";
        case OpKind::Dropout: return "dropout";
        case OpKind::Split: return "split";
        case OpKind::Concat: return "concat";
        case OpKind::Add: return "add";
        case OpKind::ScaleChannels: return "scale";
        case OpKind::SoftmaxCE: return "softmax_ce";
    }
    return "?";
}

bool param_is_learnable(ParamClass cls) {
    return cls != ParamClass::BNRunningMean && cls != ParamClass::BNRunningVar;
}

bool param_takes_weight_decay(ParamClass cls) {
    // Shift displacements are regularized only by their own penalty; BN
    // affine params and biases are conventionally left undecayed.
    return cls == ParamClass::ConvWeight || cls == ParamClass::DwWeight || cls == ParamClass::FCWeight;
}

int Graph::add(Node&& node) {
    const int id = static_cast<int>(nodes_.size());
    for (const Port& p : node.inputs) {
        if (p.node < 0 || p.node >= id) {
            throw StateError("graph node '" + node.name + "' references node " + std::to_string(p.node) +
                             " which is not an earlier node (graph must stay a DAG in append order)");
        }
        const int slots = nodes_[p.node].kind == OpKind::Split ? 2 : 1;
        if (p.slot < 0 || p.slot >= slots) {
            throw StateError("graph node '" + node.name + "' references invalid slot " + std::to_string(p.slot));
        }
    }
    if (node.kind == OpKind::Input) {
        if (input_ >= 0) throw StateError("graph already has an input node");
        input_ = id;
    }
    if (node.kind == OpKind::SoftmaxCE) {
        if (loss_ >= 0) throw StateError("graph already has a loss node");
        loss_ = id;
        if (logits_ < 0 && !node.inputs.empty()) logits_ = node.inputs[0].node;
    }
    nodes_.push_back(std::move(node));
    return id;
}

int Graph::find(const std::string& name) const {
    for (int i = 0; i < size(); ++i) {
        if (nodes_[i].name == name) return i;
    }
    return -1;
}

namespace {

int expect_arity(const Node& n, int want) {
    if (static_cast<int>(n.inputs.size()) != want) {
        throw ShapeError("node '" + n.name + "' (" + op_kind_name(n.kind) + ") expects " +
                         std::to_string(want) + " inputs, has " + std::to_string(n.inputs.size()));
    }
    return want;
}

}  // namespace

std::vector<Shape4> Graph::infer_shapes(Shape4 input) const {
    // Shapes are stored per node for slot 0; Split stores slot 0 and the
    // slot-1 shape is reconstructed from split_at.
    std::vector<Shape4> shapes(nodes_.size());
    auto in_shape = [&](const Port& p) {
        Shape4 s = shapes[p.node];
        if (nodes_[p.node].kind == OpKind::Split && p.slot == 1) {
            // stored shape is slot 0
            const Node& sp = nodes_[p.node];
            Shape4 src = shapes[sp.inputs[0].node];
            if (nodes_[sp.inputs[0].node].kind == OpKind::Split && sp.inputs[0].slot == 1) {
                throw StateError("nested split slot-1 chains unsupported");
            }
            s.c = src.c - sp.split_at;
        }
        return s;
    };

    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const Node& nd = nodes_[id];
        switch (nd.kind) {
            case OpKind::Input:
                shapes[id] = input;
                break;
            case OpKind::Conv: {
                expect_arity(nd, 1);
                Shape4 s = in_shape(nd.inputs[0]);
                if (s.c != nd.conv->in_c) {
                    throw ShapeError("node '" + nd.name + "': axis 'c' has size " + std::to_string(s.c) +
                                     ", conv expects " + std::to_string(nd.conv->in_c));
                }
                const int oh = (s.h + 2 * nd.conv->pad - nd.conv->k) / nd.conv->stride + 1;
                const int ow = (s.w + 2 * nd.conv->pad - nd.conv->k) / nd.conv->stride + 1;
                if (oh < 1 || ow < 1) throw ShapeError("node '" + nd.name + "': empty conv output");
                shapes[id] = {s.n, nd.conv->out_c, oh, ow};
                break;
            }
            case OpKind::DepthwiseConv: {
                expect_arity(nd, 1);
                Shape4 s = in_shape(nd.inputs[0]);
                if (s.c != nd.dw->c) {
                    throw ShapeError("node '" + nd.name + "': axis 'c' has size " + std::to_string(s.c) +
                                     ", depthwise expects " + std::to_string(nd.dw->c));
                }
                const int oh = (s.h + 2 * nd.dw->pad - nd.dw->k) / nd.dw->stride + 1;
                const int ow = (s.w + 2 * nd.dw->pad - nd.dw->k) / nd.dw->stride + 1;
                shapes[id] = {s.n, s.c, oh, ow};
                break;
            }
            case OpKind::BatchNorm: {
                expect_arity(nd, 1);
                Shape4 s = in_shape(nd.inputs[0]);
                if (s.c != nd.bn->c) {
                    throw ShapeError("node '" + nd.name + "': axis 'c' has size " + std::to_string(s.c) +
                                     ", batchnorm expects " + std::to_string(nd.bn->c));
                }
                shapes[id] = s;
                break;
            }
            case OpKind::ReLU:
            case OpKind::Sigmoid:
            case OpKind::Dropout:
                expect_arity(nd, 1);
                shapes[id] = in_shape(nd.inputs[0]);
                break;
            case OpKind::Shift: {
                expect_arity(nd, 1);
                Shape4 s = in_shape(nd.inputs[0]);
                if (s.c != nd.shift->channels()) {
                    throw ShapeError("node '" + nd.name + "': axis 'c' has size " + std::to_string(s.c) +
                                     ", shift expects " + std::to_string(nd.shift->channels()));
                }
                shapes[id] = s;
                break;
            }
            case OpKind::MaxPool:
            case OpKind::AvgPool: {
                expect_arity(nd, 1);
                Shape4 s = in_shape(nd.inputs[0]);
                if (s.h < 2 || s.w < 2) throw ShapeError("node '" + nd.name + "': input too small to pool");
                shapes[id] = {s.n, s.c, s.h / 2, s.w / 2};
                break;
            }
            case OpKind::GlobalAvgPool: {
                expect_arity(nd, 1);
                Shape4 s = in_shape(nd.inputs[0]);
                shapes[id] = {s.n, s.c, 1, 1};
                break;
            }
            case OpKind::FC: {
                expect_arity(nd, 1);
                Shape4 s = in_shape(nd.inputs[0]);
                if (s.c * s.h * s.w != nd.fc->in) {
                    throw ShapeError("node '" + nd.name + "': axis 'c*h*w' has size " +
                                     std::to_string(s.c * s.h * s.w) + ", fc expects " + std::to_string(nd.fc->in));
                }
                shapes[id] = {s.n, nd.fc->out, 1, 1};
                break;
            }
            case OpKind::Split: {
                expect_arity(nd, 1);
                Shape4 s = in_shape(nd.inputs[0]);
                if (nd.split_at <= 0 || nd.split_at >= s.c) {
                    throw ShapeError("node '" + nd.name + "': split_at " + std::to_string(nd.split_at) +
                                     " out of range for c=" + std::to_string(s.c));
                }
                shapes[id] = {s.n, nd.split_at, s.h, s.w};
                break;
            }
            case OpKind::Concat: {
                expect_arity(nd, 2);
                Shape4 a = in_shape(nd.inputs[0]);
                Shape4 b = in_shape(nd.inputs[1]);
                if (a.h != b.h) throw ShapeError("node '" + nd.name + "': axis 'h' mismatch " +
                                                 std::to_string(a.h) + " vs " + std::to_string(b.h));
                if (a.w != b.w) throw ShapeError("node '" + nd.name + "': axis 'w' mismatch " +
                                                 std::to_string(a.w) + " vs " + std::to_string(b.w));
                shapes[id] = {a.n, a.c + b.c, a.h, a.w};
                break;
            }
            case OpKind::Add: {
                expect_arity(nd, 2);
                Shape4 a = in_shape(nd.inputs[0]);
                Shape4 b = in_shape(nd.inputs[1]);
                if (!(a == b)) {
                    throw ShapeError("node '" + nd.name + "': add operands " + a.str() + " vs " + b.str());
                }
                shapes[id] = a;
                break;
            }
            case OpKind::ScaleChannels: {
                expect_arity(nd, 2);
                Shape4 x = in_shape(nd.inputs[0]);
                Shape4 gate = in_shape(nd.inputs[1]);
                if (gate.c != x.c) throw ShapeError("node '" + nd.name + "': axis 'c' gate " +
                                                    std::to_string(gate.c) + " vs features " + std::to_string(x.c));
                if (gate.h != 1 || gate.w != 1) {
                    throw ShapeError("node '" + nd.name + "': gate must be (n,c,1,1)");
                }
                shapes[id] = x;
                break;
            }
            case OpKind::SoftmaxCE: {
                expect_arity(nd, 1);
                Shape4 s = in_shape(nd.inputs[0]);
                if (s.h != 1 || s.w != 1) {
                    throw ShapeError("node '" + nd.name + "': logits must be (n,classes,1,1), got " + s.str());
                }
                shapes[id] = s;
                break;
            }
        }
    }
    return shapes;
}

namespace {

void visit_params_impl(std::vector<Node>& nodes, const std::function<void(const ParamRef&)>& fn) {
    for (Node& nd : nodes) {
        if (nd.conv) {
            fn({nd.name + ".weight", ParamClass::ConvWeight, &nd.conv->weight, &nd.conv->grad_weight, nullptr});
            if (!nd.conv->bias.empty()) {
                fn({nd.name + ".bias", ParamClass::ConvBias, &nd.conv->bias, &nd.conv->grad_bias, nullptr});
            }
        }
        if (nd.dw) {
            fn({nd.name + ".weight", ParamClass::DwWeight, &nd.dw->weight, &nd.dw->grad_weight, nullptr});
            if (!nd.dw->bias.empty()) {
                fn({nd.name + ".bias", ParamClass::DwBias, &nd.dw->bias, &nd.dw->grad_bias, nullptr});
            }
        }
        if (nd.bn) {
            fn({nd.name + ".gamma", ParamClass::BNGamma, &nd.bn->gamma, &nd.bn->grad_gamma, nullptr});
            fn({nd.name + ".beta", ParamClass::BNBeta, &nd.bn->beta, &nd.bn->grad_beta, nullptr});
            fn({nd.name + ".running_mean", ParamClass::BNRunningMean, &nd.bn->running_mean, nullptr, nullptr});
            fn({nd.name + ".running_var", ParamClass::BNRunningVar, &nd.bn->running_var, nullptr, nullptr});
        }
        if (nd.fc) {
            fn({nd.name + ".weight", ParamClass::FCWeight, &nd.fc->weight, &nd.fc->grad_weight, nullptr});
            fn({nd.name + ".bias", ParamClass::FCBias, &nd.fc->bias, &nd.fc->grad_bias, nullptr});
        }
        if (nd.shift) {
            fn({nd.name + ".alpha", ParamClass::ShiftAlpha, &nd.shift->alpha, &nd.shift->grad_alpha,
                &nd.shift->frozen});
            fn({nd.name + ".beta", ParamClass::ShiftBeta, &nd.shift->beta, &nd.shift->grad_beta,
                &nd.shift->frozen});
        }
    }
}

}  // namespace

void Graph::visit_params(const std::function<void(const ParamRef&)>& fn) {
    visit_params_impl(nodes_, fn);
}

void Graph::visit_params(const std::function<void(const ParamRef&)>& fn) const {
    visit_params_impl(const_cast<std::vector<Node>&>(nodes_), fn);
}

void Graph::zero_grads() {
    for (Node& nd : nodes_) {
        if (nd.conv) nd.conv->zero_grads();
        if (nd.dw) nd.dw->zero_grads();
        if (nd.bn) nd.bn->zero_grads();
        if (nd.fc) nd.fc->zero_grads();
        if (nd.shift) nd.shift->zero_grads();
    }
}

std::vector<int> Graph::shift_node_ids() const {
    std::vector<int> ids;
    for (int i = 0; i < size(); ++i) {
        if (nodes_[i].kind == OpKind::Shift) ids.push_back(i);
    }
    return ids;
}

void Graph::set_shift_frozen(bool frozen) {
    for (Node& nd : nodes_) {
        if (nd.shift) nd.shift->frozen = frozen;
    }
}

Graph Graph::clone() const {
    Graph g;
    for (const Node& nd : nodes_) {
        Node copy(nd.kind, nd.name);
        copy.inputs = nd.inputs;
        copy.split_at = nd.split_at;
        copy.dropout_rate = nd.dropout_rate;
        copy.shift_kind = nd.shift_kind;
        if (nd.conv) copy.conv = std::make_unique<ConvParams>(*nd.conv);
        if (nd.dw) copy.dw = std::make_unique<DepthwiseParams>(*nd.dw);
        if (nd.bn) copy.bn = std::make_unique<BNParams>(*nd.bn);
        if (nd.fc) copy.fc = std::make_unique<FCParams>(*nd.fc);
        if (nd.shift) copy.shift = std::make_unique<ShiftParams>(*nd.shift);
        g.add(std::move(copy));
    }
    g.logits_ = logits_;
    g.loss_ = loss_;
    return g;
}

double mean_shift_sparsity(const Graph& g) {
    std::int64_t unshifted = 0, total = 0;
    for (int id : g.shift_node_ids()) {
        const ShiftParams& sp = *g.node(id).shift;
        for (int c = 0; c < sp.channels(); ++c) {
            if (round_displacement(sp.alpha[c]) == 0 && round_displacement(sp.beta[c]) == 0) ++unshifted;
        }
        total += sp.channels();
    }
    return total == 0 ? 1.0 : static_cast<double>(unshifted) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

float Runner::forward(const Tensor& batch, const std::vector<int>& labels, const ForwardOptions& opts) {
    const int count = g_.size();
    outs_.assign(count, {});
    bn_caches_.assign(count, {});
    dropout_masks_.assign(count, {});
    pool_argmax_.assign(count, {});
    labels_ = labels;
    have_loss_ = false;
    trained_forward_ = opts.train;
    float loss = 0.0f;

    std::vector<int> consumers(count, 0);
    for (int id = 0; id < count; ++id) {
        for (const Port& p : g_.node(id).inputs) consumers[p.node]++;
    }
    if (opts.node_ms) opts.node_ms->assign(count, 0.0);

    auto in_tensor = [&](const Port& p) -> const Tensor& { return outs_[p.node][p.slot]; };

    for (int id = 0; id < count; ++id) {
        Node& nd = g_.node(id);
        const auto t0 = std::chrono::steady_clock::now();
        switch (nd.kind) {
            case OpKind::Input:
                outs_[id] = {batch};
                break;
            case OpKind::Conv:
                outs_[id] = {conv2d_forward(in_tensor(nd.inputs[0]), *nd.conv)};
                break;
            case OpKind::DepthwiseConv:
                outs_[id] = {depthwise_forward(in_tensor(nd.inputs[0]), *nd.dw)};
                break;
            case OpKind::BatchNorm:
                outs_[id] = {batchnorm_forward(in_tensor(nd.inputs[0]), *nd.bn, opts.train,
                                               opts.train ? &bn_caches_[id] : nullptr)};
                break;
            case OpKind::ReLU:
                outs_[id] = {relu_forward(in_tensor(nd.inputs[0]))};
                break;
            case OpKind::Sigmoid:
                outs_[id] = {sigmoid_forward(in_tensor(nd.inputs[0]))};
                break;
            case OpKind::Shift: {
                const Port src = nd.inputs[0];
                if (opts.inplace_shift && !opts.train && consumers[src.node] == 1 &&
                    nd.shift_kind != ShiftKind::ActiveBilinear && src.node != g_.input_id()) {
                    Tensor t = std::move(outs_[src.node][src.slot]);
                    for (int n = 0; n < t.n(); ++n) {
                        for (int c = 0; c < t.c(); ++c) {
                            const int a = round_displacement(nd.shift->alpha[c]);
                            const int b = round_displacement(nd.shift->beta[c]);
                            if (a == 0 && b == 0) continue;  // no memory movement
                            shift_channel_inplace(t.channel(n, c), t.h(), t.w(), a, b);
                        }
                    }
                    outs_[id] = {std::move(t)};
                } else if (nd.shift_kind == ShiftKind::ActiveBilinear) {
                    outs_[id] = {shift_forward_bilinear(in_tensor(src), *nd.shift)};
                } else {
                    // Grouped displacements are integral; SparseQuantized
                    // feeds forward with rounded displacements in both modes.
                    outs_[id] = {shift_forward_quantized(in_tensor(src), *nd.shift)};
                }
                break;
            }
            case OpKind::MaxPool:
                outs_[id] = {maxpool2x2(in_tensor(nd.inputs[0]), opts.train ? &pool_argmax_[id] : nullptr)};
                break;
            case OpKind::AvgPool:
                outs_[id] = {avgpool2x2(in_tensor(nd.inputs[0]))};
                break;
            case OpKind::GlobalAvgPool:
                outs_[id] = {global_avg_pool(in_tensor(nd.inputs[0]))};
                break;
            case OpKind::FC:
                outs_[id] = {fc_forward(in_tensor(nd.inputs[0]), *nd.fc)};
                break;
            case OpKind::Dropout: {
                if (opts.train && nd.dropout_rate > 0.0f && !opts.dropout_rng) {
                    throw StateError("dropout node '" + nd.name + "' needs an rng in train mode");
                }
                Rng dummy(0);
                outs_[id] = {dropout(in_tensor(nd.inputs[0]), nd.dropout_rate, opts.train,
                                     opts.dropout_rng ? *opts.dropout_rng : dummy,
                                     opts.train ? &dropout_masks_[id] : nullptr)};
                break;
            }
            case OpKind::Split: {
                auto [a, b] = channel_split(in_tensor(nd.inputs[0]), nd.split_at);
                outs_[id] = {std::move(a), std::move(b)};
                break;
            }
            case OpKind::Concat:
                outs_[id] = {channel_concat(in_tensor(nd.inputs[0]), in_tensor(nd.inputs[1]))};
                break;
            case OpKind::Add: {
                const Tensor& a = in_tensor(nd.inputs[0]);
                const Tensor& b = in_tensor(nd.inputs[1]);
                if (!a.same_shape(b)) {
                    throw ShapeError("node '" + nd.name + "': add operands " + a.shape().str() + " vs " +
                                     b.shape().str());
                }
                Tensor out(a.shape());
                const float* pa = a.data();
                const float* pb = b.data();
                float* po = out.data();
                for (std::int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
                outs_[id] = {std::move(out)};
                break;
            }
            case OpKind::ScaleChannels: {
                const Tensor& x = in_tensor(nd.inputs[0]);
                const Tensor& gate = in_tensor(nd.inputs[1]);
                Tensor out(x.shape());
                const int hw = x.h() * x.w();
                for (int n = 0; n < x.n(); ++n) {
                    for (int c = 0; c < x.c(); ++c) {
                        const float gv = gate.at(n, c, 0, 0);
                        const float* src = x.channel(n, c);
                        float* dst = out.channel(n, c);
                        for (int q = 0; q < hw; ++q) dst[q] = src[q] * gv;
                    }
                }
                outs_[id] = {std::move(out)};
                break;
            }
            case OpKind::SoftmaxCE: {
                if (labels_.empty()) break;  // inference-only pass
                auto [l, grad] = softmax_cross_entropy(in_tensor(nd.inputs[0]), labels_);
                if (!std::isfinite(l)) throw DivergedError("loss is not finite (training diverged)");
                loss = l;
                loss_grad_ = std::move(grad);
                have_loss_ = true;
                outs_[id] = {Tensor::full(1, 1, 1, 1, l)};
                break;
            }
        }
        if (opts.node_ms) {
            const auto t1 = std::chrono::steady_clock::now();
            (*opts.node_ms)[id] = std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
    }
    return loss;
}

const Tensor& Runner::logits() const {
    const int id = g_.logits_id();
    if (id < 0 || outs_.empty() || outs_[id].empty()) throw StateError("logits requested before forward");
    return outs_[id][0];
}

const Tensor& Runner::output_of(const std::string& name, int slot) const {
    const int id = g_.find(name);
    if (id < 0) throw StateError("no node named '" + name + "'");
    if (outs_.empty() || outs_[id].empty()) throw StateError("forward has not run");
    return outs_[id][static_cast<std::size_t>(slot)];
}

void Runner::backward() {
    if (!have_loss_) throw StateError("backward called before a forward pass with labels");
    const int count = g_.size();

    // One grad buffer per output slot, allocated lazily on first write.
    std::vector<std::vector<Tensor>> grads(count);
    for (int id = 0; id < count; ++id) grads[id].resize(outs_[id].size());

    auto add_grad = [&](const Port& p, const Tensor& g) {
        Tensor& dst = grads[p.node][p.slot];
        if (dst.empty()) {
            dst = g;
            return;
        }
        float* d = dst.data();
        const float* s = g.data();
        for (std::int64_t i = 0; i < dst.size(); ++i) d[i] += s[i];
    };
    auto take_grad = [&](int id, int slot) -> Tensor {
        Tensor& g = grads[id][slot];
        if (g.empty()) g = Tensor(outs_[id][slot].shape());  // no consumer: zero grad
        return std::move(g);
    };

    for (int id = count - 1; id >= 0; --id) {
        Node& nd = g_.node(id);
        switch (nd.kind) {
            case OpKind::Input:
                break;
            case OpKind::SoftmaxCE:
                add_grad(nd.inputs[0], loss_grad_);
                break;
            case OpKind::Conv: {
                Tensor g = take_grad(id, 0);
                add_grad(nd.inputs[0], conv2d_backward(outs_[nd.inputs[0].node][nd.inputs[0].slot], *nd.conv, g));
                break;
            }
            case OpKind::DepthwiseConv: {
                Tensor g = take_grad(id, 0);
                add_grad(nd.inputs[0], depthwise_backward(outs_[nd.inputs[0].node][nd.inputs[0].slot], *nd.dw, g));
                break;
            }
            case OpKind::BatchNorm: {
                if (!trained_forward_) throw StateError("batchnorm backward requires a train-mode forward");
                Tensor g = take_grad(id, 0);
                add_grad(nd.inputs[0], batchnorm_backward(g, *nd.bn, bn_caches_[id]));
                break;
            }
            case OpKind::ReLU: {
                Tensor g = take_grad(id, 0);
                add_grad(nd.inputs[0], relu_backward(outs_[nd.inputs[0].node][nd.inputs[0].slot], g));
                break;
            }
            case OpKind::Sigmoid: {
                Tensor g = take_grad(id, 0);
                add_grad(nd.inputs[0], sigmoid_backward(outs_[id][0], g));
                break;
            }
            case OpKind::Shift: {
                Tensor g = take_grad(id, 0);
                const Tensor& x = outs_[nd.inputs[0].node][nd.inputs[0].slot];
                if (nd.shift_kind != ShiftKind::Grouped) {
                    shift_backward_params(x, *nd.shift, g);
                }
                if (nd.shift_kind == ShiftKind::ActiveBilinear) {
                    add_grad(nd.inputs[0], shift_backward_input_bilinear(*nd.shift, g));
                } else {
                    add_grad(nd.inputs[0], shift_backward_input(*nd.shift, g));
                }
                break;
            }
            case OpKind::MaxPool: {
                Tensor g = take_grad(id, 0);
                const Shape4 in_shape = outs_[nd.inputs[0].node][nd.inputs[0].slot].shape();
                add_grad(nd.inputs[0], maxpool2x2_backward(g, in_shape, pool_argmax_[id]));
                break;
            }
            case OpKind::AvgPool: {
                Tensor g = take_grad(id, 0);
                add_grad(nd.inputs[0], avgpool2x2_backward(g, outs_[nd.inputs[0].node][nd.inputs[0].slot].shape()));
                break;
            }
            case OpKind::GlobalAvgPool: {
                Tensor g = take_grad(id, 0);
                add_grad(nd.inputs[0],
                         global_avg_pool_backward(g, outs_[nd.inputs[0].node][nd.inputs[0].slot].shape()));
                break;
            }
            case OpKind::FC: {
                Tensor g = take_grad(id, 0);
                add_grad(nd.inputs[0], fc_backward(outs_[nd.inputs[0].node][nd.inputs[0].slot], *nd.fc, g));
                break;
            }
            case OpKind::Dropout: {
                Tensor g = take_grad(id, 0);
                if (!trained_forward_ || nd.dropout_rate == 0.0f) {
                    add_grad(nd.inputs[0], g);
                } else {
                    Tensor gi(g.shape());
                    const float* mk = dropout_masks_[id].data();
                    const float* gs = g.data();
                    float* gd = gi.data();
                    for (std::int64_t i = 0; i < g.size(); ++i) gd[i] = gs[i] * mk[i];
                    add_grad(nd.inputs[0], gi);
                }
                break;
            }
            case OpKind::Split: {
                Tensor g0 = take_grad(id, 0);
                Tensor g1 = take_grad(id, 1);
                add_grad(nd.inputs[0], channel_concat(g0, g1));
                break;
            }
            case OpKind::Concat: {
                Tensor g = take_grad(id, 0);
                const int ca = outs_[nd.inputs[0].node][nd.inputs[0].slot].c();
                auto [ga, gb] = channel_split(g, ca);
                add_grad(nd.inputs[0], ga);
                add_grad(nd.inputs[1], gb);
                break;
            }
            case OpKind::Add: {
                Tensor g = take_grad(id, 0);
                add_grad(nd.inputs[0], g);
                add_grad(nd.inputs[1], g);
                break;
            }
            case OpKind::ScaleChannels: {
                Tensor g = take_grad(id, 0);
                const Tensor& x = outs_[nd.inputs[0].node][nd.inputs[0].slot];
                const Tensor& gate = outs_[nd.inputs[1].node][nd.inputs[1].slot];
                Tensor gx(x.shape());
                Tensor ggate(gate.shape());
                const int hw = x.h() * x.w();
                for (int n = 0; n < x.n(); ++n) {
                    for (int c = 0; c < x.c(); ++c) {
                        const float gv = gate.at(n, c, 0, 0);
                        const float* xs = x.channel(n, c);
                        const float* gs = g.channel(n, c);
                        float* gd = gx.channel(n, c);
                        double acc = 0.0;
                        for (int q = 0; q < hw; ++q) {
                            gd[q] = gs[q] * gv;
                            acc += static_cast<double>(gs[q]) * xs[q];
                        }
                        ggate.at(n, c, 0, 0) = static_cast<float>(acc);
                    }
                }
                add_grad(nd.inputs[0], gx);
                add_grad(nd.inputs[1], ggate);
                break;
            }
        }
    }
    have_loss_ = false;
}

float graph_loss_forward(Graph& g, const Tensor& batch, const std::vector<int>& labels, bool train,
                         Rng* dropout_rng) {
    Runner r(g);
    ForwardOptions opts;
    opts.train = train;
    opts.dropout_rng = dropout_rng;
    return r.forward(batch, labels, opts);
}

}  // namespace sslnet
