#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace sslnet {

// Deterministic RNG threaded explicitly through everything that draws
// randomness (init, dropout, batch sampling, augmentation). Two Rng
// objects with the same seed produce identical streams within one build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(static_cast<std::mt19937::result_type>(seed ^ (seed >> 32))) {}

    float uniform(float lo, float hi) {
        std::uniform_real_distribution<float> d(lo, hi);
        return d(gen_);
    }

    float normal(float mean = 0.0f, float stddev = 1.0f) {
        std::normal_distribution<float> d(mean, stddev);
        return d(gen_);
    }

    // Inclusive bounds.
    int uniform_int(int lo, int hi) {
        std::uniform_int_distribution<int> d(lo, hi);
        return d(gen_);
    }

    bool bernoulli(double p) {
        std::bernoulli_distribution d(p);
        return d(gen_);
    }

    std::uint32_t next() { return gen_(); }

    // Derive an independent stream (e.g. one per purpose) so adding a
    // consumer does not perturb unrelated draws.
    Rng fork(std::uint64_t stream) {
        return Rng((static_cast<std::uint64_t>(gen_()) << 32) ^ (stream * 0x9e3779b97f4a7c15ull));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        std::shuffle(v.begin(), v.end(), gen_);
    }

private:
    std::mt19937 gen_;
};

}  // namespace sslnet
