#include "sslnet/train.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sslnet {

float lr_at(const TrainConfig& cfg, int iter) {
    if (iter < 0 || (cfg.total_iters > 0 && iter >= cfg.total_iters)) {
        throw ValueError("lr_at: iter " + std::to_string(iter) + " outside [0, total_iters)");
    }
    if (const auto* sd = std::get_if<StepDecay>(&cfg.schedule)) {
        float lr = cfg.base_lr;
        for (int m : sd->milestones) {
            if (iter >= m) lr *= sd->factor;
        }
        return lr;
    }
    return cfg.base_lr * (1.0f - static_cast<float>(iter) / static_cast<float>(cfg.total_iters));
}

namespace {

// Shortest float representation that parses back to the same value.
std::string float_str(float v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void validate_schedule(const TrainConfig& cfg) {
    if (const auto* sd = std::get_if<StepDecay>(&cfg.schedule)) {
        int prev = -1;
        for (int m : sd->milestones) {
            if (m <= prev) throw ValueError("lr milestones must be strictly increasing");
            if (m >= cfg.total_iters) throw ValueError("lr milestone " + std::to_string(m) + " >= total_iters");
            prev = m;
        }
    }
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write metrics csv: " + path);
    out << "iter,train_loss,train_acc,eval_acc,sparsity,lr\n";
    for (const MetricsRow& r : rows) {
        out << r.iter << ',' << float_str(r.train_loss) << ',' << float_str(r.train_acc) << ','
            << float_str(r.eval_acc) << ',' << float_str(r.sparsity) << ',' << float_str(r.lr) << '\n';
    }
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read metrics csv: " + path);
    std::string line;
    std::getline(in, line);
    if (line != "iter,train_loss,train_acc,eval_acc,sparsity,lr") {
        throw DataError("metrics csv has unexpected header: " + line);
    }
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        MetricsRow r;
        std::istringstream ss(line);
        std::string field;
        auto next_f = [&](float& v) {
            if (!std::getline(ss, field, ',')) throw DataError("metrics csv row truncated");
            const char* begin = field.data();
            auto res = std::from_chars(begin, begin + field.size(), v);
            if (res.ec != std::errc{}) throw DataError("metrics csv bad float: " + field);
        };
        if (!std::getline(ss, field, ',')) throw DataError("metrics csv row truncated");
        r.iter = std::stoi(field);
        next_f(r.train_loss);
        next_f(r.train_acc);
        next_f(r.eval_acc);
        next_f(r.sparsity);
        next_f(r.lr);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

Sgd::Sgd(Graph& g) {
    g.visit_params([&](const ParamRef& p) {
        if (!param_is_learnable(p.cls)) return;
        velocity_.emplace_back(p.value->size(), 0.0f);
    });
}

void Sgd::step(Graph& g, const TrainConfig& cfg, int iter) {
    const float lr = lr_at(cfg, iter);
    std::size_t slot = 0;
    g.visit_params([&](const ParamRef& p) {
        if (!param_is_learnable(p.cls)) return;
        std::vector<float>& v = velocity_[slot++];
        if (p.frozen && *p.frozen) return;
        const bool decay = cfg.weight_decay != 0.0f && param_takes_weight_decay(p.cls);
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            float grad = (*p.grad)[i];
            if (decay) grad += cfg.weight_decay * (*p.value)[i];
            v[i] = cfg.momentum * v[i] + grad;
            (*p.value)[i] -= lr * v[i];
        }
    });
}

void accumulate_penalty(Graph& g, const PenaltyConfig& cfg) {
    if (cfg.lambda == 0.0f) return;
    for (int id : g.shift_node_ids()) {
        Node& nd = g.node(id);
        if (nd.shift_kind == ShiftKind::Grouped) continue;
        penalty_grad_accumulate(*nd.shift, cfg);
    }
}

// ---------------------------------------------------------------------------
// Batching / augmentation
// ---------------------------------------------------------------------------

namespace {

Tensor gather_batch(const Dataset& data, const std::vector<int>& idx, std::vector<int>& labels_out) {
    const Tensor& imgs = data.images;
    Tensor batch(static_cast<int>(idx.size()), imgs.c(), imgs.h(), imgs.w());
    labels_out.resize(idx.size());
    const std::size_t sample = static_cast<std::size_t>(imgs.c()) * imgs.h() * imgs.w();
    for (std::size_t k = 0; k < idx.size(); ++k) {
        std::memcpy(batch.data() + k * sample, imgs.data() + static_cast<std::size_t>(idx[k]) * sample,
                    sample * sizeof(float));
        labels_out[k] = data.labels[idx[k]];
    }
    return batch;
}

// Pad 4 zero pixels, random-crop back to the original size, then flip with
// probability 1/2.
void augment_flip_crop(Tensor& batch, Rng& rng) {
    const int h = batch.h(), w = batch.w();
    const int pad = 4;
    std::vector<float> padded(static_cast<std::size_t>(h + 2 * pad) * (w + 2 * pad));
    for (int n = 0; n < batch.n(); ++n) {
        const int di = rng.uniform_int(0, 2 * pad);
        const int dj = rng.uniform_int(0, 2 * pad);
        const bool flip = rng.bernoulli(0.5);
        for (int c = 0; c < batch.c(); ++c) {
            float* chan = batch.channel(n, c);
            std::fill(padded.begin(), padded.end(), 0.0f);
            for (int i = 0; i < h; ++i) {
                std::memcpy(padded.data() + static_cast<std::size_t>(i + pad) * (w + 2 * pad) + pad,
                            chan + static_cast<std::size_t>(i) * w, static_cast<std::size_t>(w) * sizeof(float));
            }
            for (int i = 0; i < h; ++i) {
                const float* src = padded.data() + static_cast<std::size_t>(i + di) * (w + 2 * pad) + dj;
                float* dst = chan + static_cast<std::size_t>(i) * w;
                if (flip) {
                    for (int j = 0; j < w; ++j) dst[j] = src[w - 1 - j];
                } else {
                    std::memcpy(dst, src, static_cast<std::size_t>(w) * sizeof(float));
                }
            }
        }
    }
}

float batch_accuracy(const Tensor& logits, const std::vector<int>& labels) {
    int hits = 0;
    for (int n = 0; n < logits.n(); ++n) {
        int best = 0;
        for (int c = 1; c < logits.c(); ++c) {
            if (logits.at(n, c, 0, 0) > logits.at(n, best, 0, 0)) best = c;
        }
        if (best == labels[n]) ++hits;
    }
    return static_cast<float>(hits) / logits.n();
}

}  // namespace

float evaluate(Graph& g, const Dataset& data, int batch_size) {
    Runner runner(g);
    int hits = 0;
    std::vector<int> idx;
    std::vector<int> labels;
    for (int start = 0; start < data.count(); start += batch_size) {
        const int end = std::min(data.count(), start + batch_size);
        idx.resize(end - start);
        for (int i = start; i < end; ++i) idx[i - start] = i;
        Tensor batch = gather_batch(data, idx, labels);
        runner.forward(batch, {}, {});
        const Tensor& logits = runner.logits();
        for (int n = 0; n < logits.n(); ++n) {
            int best = 0;
            for (int c = 1; c < logits.c(); ++c) {
                if (logits.at(n, c, 0, 0) > logits.at(n, best, 0, 0)) best = c;
            }
            if (best == labels[n]) ++hits;
        }
    }
    return data.count() == 0 ? 0.0f : static_cast<float>(hits) / data.count();
}

std::vector<MetricsRow> train(Graph& g, const Dataset& train_set, const Dataset& eval_set,
                              const TrainConfig& cfg, const TrainHook& hook) {
    if (train_set.count() == 0) throw ValueError("train: dataset is empty");
    validate_schedule(cfg);
    std::vector<MetricsRow> rows;
    if (cfg.total_iters <= 0) return rows;

    Rng master(cfg.seed);
    Rng order_rng = master.fork(1);
    Rng augment_rng = master.fork(2);
    Rng dropout_rng = master.fork(3);

    Sgd sgd(g);
    Runner runner(g);

    const int freeze_at = static_cast<int>(std::ceil(cfg.shift_freeze_fraction * cfg.total_iters));
    std::vector<int> order(train_set.count());
    for (int i = 0; i < train_set.count(); ++i) order[i] = i;
    std::size_t cursor = order.size();  // trigger shuffle on first use

    double loss_acc = 0.0, acc_acc = 0.0;
    int window = 0;
    std::vector<int> idx(cfg.batch_size);
    std::vector<int> labels;

    for (int iter = 0; iter < cfg.total_iters; ++iter) {
        if (iter == freeze_at) g.set_shift_frozen(true);

        for (int k = 0; k < cfg.batch_size; ++k) {
            if (cursor == order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            idx[k] = order[cursor++];
        }
        Tensor batch = gather_batch(train_set, idx, labels);
        if (cfg.augment == Augment::FlipCrop) augment_flip_crop(batch, augment_rng);

        g.zero_grads();
        ForwardOptions opts;
        opts.train = true;
        opts.dropout_rng = &dropout_rng;
        const float loss = runner.forward(batch, labels, opts);
        runner.backward();
        accumulate_penalty(g, cfg.penalty);
        sgd.step(g, cfg, iter);

        loss_acc += loss;
        acc_acc += batch_accuracy(runner.logits(), labels);
        ++window;

        const bool report = (iter + 1) % cfg.metrics_every == 0 || iter + 1 == cfg.total_iters;
        if (report) {
            MetricsRow row;
            row.iter = iter + 1;
            row.train_loss = static_cast<float>(loss_acc / window);
            row.train_acc = static_cast<float>(acc_acc / window);
            row.eval_acc = eval_set.count() > 0 ? evaluate(g, eval_set, cfg.batch_size) : 0.0f;
            row.sparsity = static_cast<float>(mean_shift_sparsity(g));
            row.lr = lr_at(cfg, iter);
            rows.push_back(row);
            loss_acc = acc_acc = 0.0;
            window = 0;
        }
        if (hook) hook(iter, g);
    }
    return rows;
}

}  // namespace sslnet
