#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "sslnet/dataset.hpp"
#include "sslnet/graph.hpp"

namespace sslnet {

struct StepDecay {
    std::vector<int> milestones;  // strictly increasing, < total_iters
    float factor = 0.1f;
};
struct LinearDecay {};

using LrSchedule = std::variant<StepDecay, LinearDecay>;

enum class Augment { None, FlipCrop };

struct TrainConfig {
    int batch_size = 128;
    float base_lr = 0.1f;
    LrSchedule schedule = StepDecay{};
    float momentum = 0.9f;
    float weight_decay = 0.0f;
    PenaltyConfig penalty;
    float shift_freeze_fraction = 0.75f;  // alpha/beta stop updating at this point
    int total_iters = 0;
    std::uint64_t seed = 1;
    Augment augment = Augment::None;
    int metrics_every = 100;
};

float lr_at(const TrainConfig& cfg, int iter);

struct MetricsRow {
    int iter = 0;
    float train_loss = 0.0f;
    float train_acc = 0.0f;
    float eval_acc = 0.0f;
    float sparsity = 0.0f;
    float lr = 0.0f;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// SGD with momentum. Velocities are keyed by parameter enumeration order,
// which is stable for a fixed graph.
class Sgd {
public:
    explicit Sgd(Graph& g);
    // v <- m*v + g (+ wd*w for decayed classes); w <- w - lr(iter)*v.
    // Frozen shift params are skipped entirely.
    void step(Graph& g, const TrainConfig& cfg, int iter);

private:
    std::vector<std::vector<float>> velocity_;
};

void accumulate_penalty(Graph& g, const PenaltyConfig& cfg);

// Top-1 accuracy over a dataset, eval mode.
float evaluate(Graph& g, const Dataset& data, int batch_size = 256);

using TrainHook = std::function<void(int iter, Graph& g)>;

// Full training loop: shuffled epochs, optional flip+pad-crop augmentation,
// displacement penalty, freeze schedule, metrics rows every
// cfg.metrics_every iterations (and at the final iteration). Deterministic
// for a fixed cfg.seed. The hook (if any) runs after every iteration.
std::vector<MetricsRow> train(Graph& g, const Dataset& train_set, const Dataset& eval_set,
                              const TrainConfig& cfg, const TrainHook& hook = {});

}  // namespace sslnet
