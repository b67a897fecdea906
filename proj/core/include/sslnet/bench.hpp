#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sslnet/arch.hpp"
#include "sslnet/graph.hpp"

namespace sslnet {

enum class KernelId { DenseShift, SparseShift, DepthwiseConv3, DepthwiseConv5, PointwiseConv };

std::string kernel_name(KernelId k);

struct KernelCase {
    KernelId kernel = KernelId::DenseShift;
    Shape4 shape{32, 64, 56, 56};
    double sparsity = 0.0;  // SparseShift only: fraction of unshifted channels
    int runs = 100;
    int warmup = 5;
};

struct BenchRow {
    std::string kernel;
    Shape4 shape{};
    double sparsity = 0.0;
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double median_ms = 0.0;  // median of per-run means
    std::uint64_t bytes_read = 0;
    std::uint64_t bytes_written = 0;
    std::uint64_t madds = 0;
    double share_pct = 0.0;  // used by decomposition rows
};

struct BenchReport {
    int logical_cpus = 0;
    std::vector<BenchRow> rows;

    std::string to_csv() const;   // kernel,shape,sparsity,mean_ms,std_ms,bytes_moved,madds,share_pct
    std::string to_text() const;  // aligned table with the median column
};

// Times one kernel case. The kernel output is checked against the functional
// implementation once before timing; inputs are allocated outside the timed
// region; too-fast cases escalate an inner repetition count until the timed
// region spans at least 100 timer ticks.
BenchRow run_kernel_bench(const KernelCase& kc, std::uint64_t seed);

// Per-op-kind share of a full eval forward pass (BN folded first). Rows
// report kind groups: shift, conv1x1, depthwise, other; percentages sum
// to 100 +- 0.1.
BenchReport run_decomposition(const ArchSpec& arch, Shape4 input_shape, int runs,
                              std::uint64_t seed = 1, double shift_sparsity_level = -1.0);

// Absorbs Conv->BN pairs (conv as sole producer for the BN) into the conv
// weights/bias and drops the BN nodes; eval outputs match the unfolded graph
// to ~1e-5 relative error.
Graph fold_batchnorm(const Graph& g);

}  // namespace sslnet
