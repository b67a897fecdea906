#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sslnet/nn_ops.hpp"
#include "sslnet/shift.hpp"

namespace sslnet {

enum class OpKind {
    Input,
    Conv,
    DepthwiseConv,
    BatchNorm,
    ReLU,
    Sigmoid,
    Shift,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    FC,
    Dropout,
    Split,
    Concat,
    Add,
    ScaleChannels,  // out[n,c,i,j] = x[n,c,i,j] * gate[n,c,0,0]
    SoftmaxCE,
};

const char* op_kind_name(OpKind k);

// Reference to one upstream value: node id + output slot (Split has two
// slots, everything else one).
struct Port {
    int node = -1;
    int slot = 0;
};

struct Node {
    OpKind kind = OpKind::Input;
    std::string name;
    std::vector<Port> inputs;

    // Attributes used by some kinds.
    int split_at = 0;
    float dropout_rate = 0.0f;
    ShiftKind shift_kind = ShiftKind::SparseQuantized;

    std::unique_ptr<ConvParams> conv;
    std::unique_ptr<DepthwiseParams> dw;
    std::unique_ptr<BNParams> bn;
    std::unique_ptr<FCParams> fc;
    std::unique_ptr<ShiftParams> shift;

    Node() = default;
    Node(OpKind k, std::string n) : kind(k), name(std::move(n)) {}
};

enum class ParamClass {
    ConvWeight,
    ConvBias,
    DwWeight,
    DwBias,
    BNGamma,
    BNBeta,
    BNRunningMean,
    BNRunningVar,
    FCWeight,
    FCBias,
    ShiftAlpha,
    ShiftBeta,
};

bool param_is_learnable(ParamClass cls);
bool param_takes_weight_decay(ParamClass cls);

struct ParamRef {
    std::string name;
    ParamClass cls;
    std::vector<float>* value = nullptr;
    std::vector<float>* grad = nullptr;  // null for running stats
    const bool* frozen = nullptr;        // shift params only
};

// Differentiable-layer DAG. Nodes are appended in topological order; shapes
// validate at build/inference time against a (c,h,w) input signature.
class Graph {
public:
    int add(Node&& node);

    Node& node(int id) { return nodes_[id]; }
    const Node& node(int id) const { return nodes_[id]; }
    int size() const { return static_cast<int>(nodes_.size()); }
    int find(const std::string& name) const;  // -1 if absent

    int input_id() const { return input_; }
    int logits_id() const { return logits_; }
    int loss_id() const { return loss_; }
    void set_logits(int id) { logits_ = id; }
    void set_loss(int id) { loss_ = id; }

    // Per-node output shapes for a given input shape; slot 1 shapes for Split
    // are derivable from split_at. Throws ShapeError naming node and axis.
    std::vector<Shape4> infer_shapes(Shape4 input) const;

    void visit_params(const std::function<void(const ParamRef&)>& fn);
    void visit_params(const std::function<void(const ParamRef&)>& fn) const;
    void zero_grads();

    std::vector<int> shift_node_ids() const;
    void set_shift_frozen(bool frozen);

    Graph clone() const;

private:
    std::vector<Node> nodes_;
    int input_ = -1;
    int logits_ = -1;
    int loss_ = -1;
};

// Weighted-by-channels sparsity over all shift layers (Table-2 "Total" row).
double mean_shift_sparsity(const Graph& g);

struct ForwardOptions {
    bool train = false;
    Rng* dropout_rng = nullptr;      // required when train and dropout present
    bool inplace_shift = false;      // skip unshifted channels when sole consumer
    std::vector<double>* node_ms = nullptr;  // per-node wall time, for the bench
};

// Executes a graph it does not own. Holds activations and backward caches;
// one Runner per concurrent training run.
class Runner {
public:
    explicit Runner(Graph& g) : g_(g) {}

    // Runs up to the loss node when labels are given, else up to logits.
    // Returns mean loss (0 when labels empty).
    float forward(const Tensor& batch, const std::vector<int>& labels, const ForwardOptions& opts = {});

    // Accumulates gradients for every parameter. Requires a prior forward
    // with labels on this Runner.
    void backward();

    const Tensor& logits() const;
    const Tensor& output_of(const std::string& name, int slot = 0) const;

private:
    Graph& g_;
    std::vector<std::vector<Tensor>> outs_;
    std::vector<BNCache> bn_caches_;
    std::vector<Tensor> dropout_masks_;
    std::vector<std::vector<std::int64_t>> pool_argmax_;
    std::vector<int> labels_;
    Tensor loss_grad_;
    bool have_loss_ = false;
    bool trained_forward_ = false;
};

float graph_loss_forward(Graph& g, const Tensor& batch, const std::vector<int>& labels, bool train,
                         Rng* dropout_rng = nullptr);

}  // namespace sslnet
