#include "sslnet/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>
#include <thread>

namespace sslnet {

namespace {

using Clock = std::chrono::steady_clock;

double timer_tick_ms() {
    // Smallest observable positive delta of the monotonic clock.
    double best = 1e9;
    for (int i = 0; i < 32; ++i) {
        auto t0 = Clock::now();
        auto t1 = Clock::now();
        while (t1 == t0) t1 = Clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream ss;
    ss.precision(prec);
    ss << std::fixed << v;
    return ss.str();
}

struct ShiftAssignment {
    std::vector<int> dy, dx;  // per channel; (0,0) channels are skipped
    int moved = 0;
};

ShiftAssignment make_assignment(int channels, double sparsity, Rng& rng) {
    ShiftAssignment a;
    a.dy.assign(channels, 0);
    a.dx.assign(channels, 0);
    const int unshifted = static_cast<int>(std::lround(sparsity * channels));
    for (int c = unshifted; c < channels; ++c) {
        do {
            a.dy[c] = rng.uniform_int(-2, 2);
            a.dx[c] = rng.uniform_int(-2, 2);
        } while (a.dy[c] == 0 && a.dx[c] == 0);
        ++a.moved;
    }
    return a;
}

// The timed body for dense/sparse shift: in-place row-block movement,
// skipping channels whose displacement is (0,0).
void shift_kernel(Tensor& t, const ShiftAssignment& a) {
    for (int n = 0; n < t.n(); ++n) {
        for (int c = 0; c < t.c(); ++c) {
            if (a.dy[c] == 0 && a.dx[c] == 0) continue;
            shift_channel_inplace(t.channel(n, c), t.h(), t.w(), a.dy[c], a.dx[c]);
        }
    }
}

void depthwise_kernel(const Tensor& x, const std::vector<float>& w, int k, Tensor& out) {
    const int pad = k / 2;
    const int h = x.h(), wid = x.w();
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const float* src = x.channel(n, c);
            const float* wc = w.data() + static_cast<std::size_t>(c) * k * k;
            float* dst = out.channel(n, c);
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < wid; ++j) {
                    float acc = 0.0f;
                    for (int ki = 0; ki < k; ++ki) {
                        const int si = i + ki - pad;
                        if (si < 0 || si >= h) continue;
                        for (int kj = 0; kj < k; ++kj) {
                            const int sj = j + kj - pad;
                            if (sj < 0 || sj >= wid) continue;
                            acc += wc[ki * k + kj] * src[si * wid + sj];
                        }
                    }
                    dst[i * wid + j] = acc;
                }
            }
        }
    }
}

void pointwise_kernel(const Tensor& x, const std::vector<float>& w, Tensor& out) {
    const int hw = x.h() * x.w();
    const int c = x.c();
    for (int n = 0; n < x.n(); ++n) {
        for (int oc = 0; oc < c; ++oc) {
            float* dst = out.channel(n, oc);
            std::memset(dst, 0, static_cast<std::size_t>(hw) * sizeof(float));
            const float* wrow = w.data() + static_cast<std::size_t>(oc) * c;
            for (int ic = 0; ic < c; ++ic) {
                const float wv = wrow[ic];
                const float* src = x.channel(n, ic);
                for (int q = 0; q < hw; ++q) dst[q] += wv * src[q];
            }
        }
    }
}

double relative_diff(const Tensor& a, const Tensor& b) {
    double num = 0.0, den = 1e-30;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        num = std::max(num, static_cast<double>(std::fabs(a.data()[i] - b.data()[i])));
        den = std::max(den, static_cast<double>(std::fabs(b.data()[i])));
    }
    return num / den;
}

}  // namespace

std::string kernel_name(KernelId k) {
    switch (k) {
        case KernelId::DenseShift: return "dense_shift";
        case KernelId::SparseShift: return "sparse_shift";
        case KernelId::DepthwiseConv3: return "depthwise3";
        case KernelId::DepthwiseConv5: return "depthwise5";
        case KernelId::PointwiseConv: return "pointwise";
    }
    return "?";
}

BenchRow run_kernel_bench(const KernelCase& kc, std::uint64_t seed) {
    if (kc.runs < 10) throw ValueError("bench needs runs >= 10");
    if (kc.sparsity < 0.0 || kc.sparsity > 1.0) throw ValueError("sparsity must be in [0,1]");
    Rng rng(seed);
    const Shape4 s = kc.shape;
    Tensor input = Tensor::randn(s, rng);

    BenchRow row;
    row.kernel = kernel_name(kc.kernel);
    row.shape = s;
    row.sparsity = kc.kernel == KernelId::SparseShift ? kc.sparsity : 0.0;

    const std::uint64_t plane = static_cast<std::uint64_t>(s.n) * s.h * s.w * sizeof(float);

    ShiftAssignment assign;
    std::vector<float> weights;
    int k = 0;
    Tensor work = input;
    Tensor out;

    switch (kc.kernel) {
        case KernelId::DenseShift:
        case KernelId::SparseShift: {
            const double sparsity = kc.kernel == KernelId::DenseShift ? 0.0 : kc.sparsity;
            assign = make_assignment(s.c, sparsity, rng);
            row.bytes_read = row.bytes_written = plane * static_cast<std::uint64_t>(assign.moved);
            row.madds = 0;
            // correctness: one application vs the functional shift
            ShiftParams sp = ShiftParams::zeros(s.c);
            for (int c = 0; c < s.c; ++c) {
                sp.alpha[c] = static_cast<float>(assign.dy[c]);
                sp.beta[c] = static_cast<float>(assign.dx[c]);
            }
            const Tensor want = shift_forward_integer(input, sp);
            Tensor got = input;
            shift_kernel(got, assign);
            if (std::memcmp(got.data(), want.data(), static_cast<std::size_t>(got.size()) * 4) != 0) {
                throw StateError("shift bench kernel disagrees with shift_forward_integer");
            }
            break;
        }
        case KernelId::DepthwiseConv3:
        case KernelId::DepthwiseConv5: {
            k = kc.kernel == KernelId::DepthwiseConv3 ? 3 : 5;
            weights.resize(static_cast<std::size_t>(s.c) * k * k);
            for (auto& v : weights) v = rng.normal(0.0f, 0.1f);
            out = Tensor(s);
            row.bytes_read = plane * s.c;
            row.bytes_written = plane * s.c;
            row.madds = static_cast<std::uint64_t>(s.n) * s.c * k * k * s.h * s.w;
            DepthwiseParams p = DepthwiseParams::make(s.c, k, 1, k / 2, false);
            p.weight = weights;
            const Tensor want = depthwise_forward(input, p);
            Tensor got(s);
            depthwise_kernel(input, weights, k, got);
            if (relative_diff(got, want) > 1e-5) {
                throw StateError("depthwise bench kernel disagrees with depthwise_forward");
            }
            break;
        }
        case KernelId::PointwiseConv: {
            weights.resize(static_cast<std::size_t>(s.c) * s.c);
            for (auto& v : weights) v = rng.normal(0.0f, 0.05f);
            out = Tensor(s);
            row.bytes_read = plane * s.c;
            row.bytes_written = plane * s.c;
            row.madds = static_cast<std::uint64_t>(s.n) * s.c * s.c * s.h * s.w;
            ConvParams p = ConvParams::make(s.c, s.c, 1, 1, 0, false);
            p.weight = weights;
            const Tensor want = conv2d_forward(input, p);
            Tensor got(s);
            pointwise_kernel(input, weights, got);
            if (relative_diff(got, want) > 1e-4) {
                throw StateError("pointwise bench kernel disagrees with conv2d_forward");
            }
            break;
        }
    }

    auto run_once = [&]() {
        switch (kc.kernel) {
            case KernelId::DenseShift:
            case KernelId::SparseShift:
                shift_kernel(work, assign);
                break;
            case KernelId::DepthwiseConv3:
            case KernelId::DepthwiseConv5:
                depthwise_kernel(input, weights, k, out);
                break;
            case KernelId::PointwiseConv:
                pointwise_kernel(input, weights, out);
                break;
        }
    };

    for (int i = 0; i < kc.warmup; ++i) run_once();

    // Escalate inner repetitions until a single measurement spans enough
    // timer ticks to be trustworthy.
    const double tick = timer_tick_ms();
    int inner = 1;
    for (;;) {
        const auto t0 = Clock::now();
        for (int i = 0; i < inner; ++i) run_once();
        const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        if (ms >= 100.0 * tick || inner >= (1 << 20)) break;
        inner *= 4;
    }

    std::vector<double> samples(static_cast<std::size_t>(kc.runs));
    for (int r = 0; r < kc.runs; ++r) {
        const auto t0 = Clock::now();
        for (int i = 0; i < inner; ++i) run_once();
        samples[r] = std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / inner;
    }
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= samples.size();
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var /= samples.size();
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    row.mean_ms = mean;
    row.std_ms = std::sqrt(var);
    row.median_ms = sorted[sorted.size() / 2];
    return row;
}

// ---------------------------------------------------------------------------
// BN folding
// ---------------------------------------------------------------------------

Graph fold_batchnorm(const Graph& g) {
    // BN nodes whose single input is a conv/depthwise consumed only by that
    // BN get absorbed; anything else is left alone.
    std::vector<int> consumers(g.size(), 0);
    for (int id = 0; id < g.size(); ++id) {
        for (const Port& p : g.node(id).inputs) consumers[p.node]++;
    }

    std::vector<int> fold_into(g.size(), -1);  // bn id -> producer conv id
    for (int id = 0; id < g.size(); ++id) {
        const Node& nd = g.node(id);
        if (nd.kind != OpKind::BatchNorm) continue;
        const int src = nd.inputs[0].node;
        const OpKind sk = g.node(src).kind;
        if ((sk == OpKind::Conv || sk == OpKind::DepthwiseConv) && consumers[src] == 1) {
            fold_into[id] = src;
        }
    }

    Graph out;
    std::vector<Port> redirect(g.size());
    std::vector<int> new_of(g.size(), -1);
    int new_logits = -1;
    for (int id = 0; id < g.size(); ++id) {
        const Node& nd = g.node(id);
        if (fold_into[id] >= 0) {
            // BN folds into the (already copied) conv.
            const int conv_new = new_of[fold_into[id]];
            Node& conv = out.node(conv_new);
            const BNParams& bn = *nd.bn;
            const int out_c = conv.conv ? conv.conv->out_c : conv.dw->c;
            std::vector<float>& w = conv.conv ? conv.conv->weight : conv.dw->weight;
            std::vector<float>& b = conv.conv ? conv.conv->bias : conv.dw->bias;
            std::vector<float>& gb = conv.conv ? conv.conv->grad_bias : conv.dw->grad_bias;
            if (b.empty()) {
                b.assign(out_c, 0.0f);
                gb.assign(out_c, 0.0f);
            }
            const std::size_t per_out = w.size() / out_c;
            for (int oc = 0; oc < out_c; ++oc) {
                const float scale = bn.gamma[oc] / std::sqrt(bn.running_var[oc] + bn.epsilon);
                for (std::size_t i = 0; i < per_out; ++i) w[oc * per_out + i] *= scale;
                b[oc] = (b[oc] - bn.running_mean[oc]) * scale + bn.beta[oc];
            }
            redirect[id] = Port{conv_new, 0};
            continue;
        }
        Node copy(nd.kind, nd.name);
        copy.split_at = nd.split_at;
        copy.dropout_rate = nd.dropout_rate;
        copy.shift_kind = nd.shift_kind;
        if (nd.conv) copy.conv = std::make_unique<ConvParams>(*nd.conv);
        if (nd.dw) copy.dw = std::make_unique<DepthwiseParams>(*nd.dw);
        if (nd.bn) copy.bn = std::make_unique<BNParams>(*nd.bn);
        if (nd.fc) copy.fc = std::make_unique<FCParams>(*nd.fc);
        if (nd.shift) copy.shift = std::make_unique<ShiftParams>(*nd.shift);
        for (const Port& p : nd.inputs) copy.inputs.push_back(Port{redirect[p.node].node, p.slot});
        new_of[id] = out.add(std::move(copy));
        redirect[id] = Port{new_of[id], 0};
        if (id == g.logits_id()) new_logits = new_of[id];
    }
    if (new_logits >= 0) out.set_logits(new_logits);
    return out;
}

// ---------------------------------------------------------------------------
// Runtime decomposition
// ---------------------------------------------------------------------------

BenchReport run_decomposition(const ArchSpec& arch, Shape4 input_shape, int runs, std::uint64_t seed,
                              double shift_sparsity_level) {
    Rng rng(seed);
    Graph g = build_network(arch, rng);
    if (shift_sparsity_level >= 0.0) {
        Rng srng = rng.fork(7);
        set_uniform_shift_sparsity(g, shift_sparsity_level, srng);
    }
    Graph folded = fold_batchnorm(g);

    Tensor batch = Tensor::randn(input_shape, rng);
    Runner runner(folded);
    ForwardOptions opts;
    opts.inplace_shift = true;
    std::vector<double> node_ms;
    opts.node_ms = &node_ms;

    runner.forward(batch, {}, opts);  // warmup
    std::vector<double> total(folded.size(), 0.0);
    for (int r = 0; r < runs; ++r) {
        runner.forward(batch, {}, opts);
        for (int i = 0; i < folded.size(); ++i) total[i] += node_ms[i];
    }

    double shift = 0.0, conv1x1 = 0.0, depthwise = 0.0, other = 0.0;
    for (int i = 0; i < folded.size(); ++i) {
        const Node& nd = folded.node(i);
        if (nd.kind == OpKind::Input) continue;
        if (nd.kind == OpKind::Shift) {
            shift += total[i];
        } else if (nd.kind == OpKind::Conv && nd.conv->k == 1) {
            conv1x1 += total[i];
        } else if (nd.kind == OpKind::DepthwiseConv) {
            depthwise += total[i];
        } else {
            other += total[i];
        }
    }
    const double sum = std::max(shift + conv1x1 + depthwise + other, 1e-12);

    BenchReport report;
    report.logical_cpus = static_cast<int>(std::thread::hardware_concurrency());
    auto push = [&](const std::string& name, double ms) {
        BenchRow row;
        row.kernel = name;
        row.shape = input_shape;
        row.sparsity = shift_sparsity_level >= 0.0 ? shift_sparsity_level : mean_shift_sparsity(g);
        row.mean_ms = ms / runs;
        row.share_pct = 100.0 * ms / sum;
        report.rows.push_back(row);
    };
    push("shift", shift);
    push("conv1x1", conv1x1);
    push("depthwise", depthwise);
    push("other", other);
    return report;
}

std::string BenchReport::to_csv() const {
    std::ostringstream ss;
    ss << "kernel,shape,sparsity,mean_ms,std_ms,bytes_moved,madds,share_pct\n";
    for (const BenchRow& r : rows) {
        ss << r.kernel << ',' << r.shape.n << 'x' << r.shape.c << 'x' << r.shape.h << 'x' << r.shape.w
           << ',' << fmt(r.sparsity, 3) << ',' << fmt(r.mean_ms, 6) << ',' << fmt(r.std_ms, 6) << ','
           << (r.bytes_read + r.bytes_written) << ',' << r.madds << ',' << fmt(r.share_pct, 2) << '\n';
    }
    return ss.str();
}

std::string BenchReport::to_text() const {
    std::ostringstream ss;
    ss << "logical cpus: " << logical_cpus << "\n";
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    ss << pad("kernel", 14) << pad("shape", 16) << pad("sparsity", 10) << pad("mean_ms", 12)
       << pad("std_ms", 12) << pad("median_ms", 12) << pad("bytes_moved", 14) << pad("madds", 12)
       << pad("share%", 8) << '\n';
    for (const BenchRow& r : rows) {
        const std::string shape = std::to_string(r.shape.n) + "x" + std::to_string(r.shape.c) + "x" +
                                  std::to_string(r.shape.h) + "x" + std::to_string(r.shape.w);
        ss << pad(r.kernel, 14) << pad(shape, 16) << pad(fmt(r.sparsity, 3), 10)
           << pad(fmt(r.mean_ms, 5), 12) << pad(fmt(r.std_ms, 5), 12) << pad(fmt(r.median_ms, 5), 12)
           << pad(std::to_string(r.bytes_read + r.bytes_written), 14) << pad(std::to_string(r.madds), 12)
           << pad(fmt(r.share_pct, 2), 8) << '\n';
    }
    return ss.str();
}

}  // namespace sslnet
