#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sslnet/errors.hpp"
#include "sslnet/rng.hpp"

namespace sslnet {

struct Shape4 {
    int n = 0, c = 0, h = 0, w = 0;

    bool operator==(const Shape4&) const = default;
    std::int64_t numel() const { return std::int64_t(n) * c * h * w; }
    std::string str() const;
};

// Dense rank-4 float32 feature map, contiguous in (n, c, h, w) order.
// Element (n, c, i, j) lives at flat index ((n*C + c)*H + i)*W + j.
class Tensor {
public:
    Tensor() = default;

    Tensor(int n, int c, int h, int w) : shape_{n, c, h, w} {
        if (n < 1 || c < 1 || h < 1 || w < 1) {
            throw ShapeError("tensor dims must all be >= 1, got " + shape_.str());
        }
        data_.assign(static_cast<std::size_t>(shape_.numel()), 0.0f);
    }

    explicit Tensor(Shape4 s) : Tensor(s.n, s.c, s.h, s.w) {}

    static Tensor full(int n, int c, int h, int w, float v) {
        Tensor t(n, c, h, w);
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor from_values(int n, int c, int h, int w, std::vector<float> values) {
        Tensor t(n, c, h, w);
        if (static_cast<std::int64_t>(values.size()) != t.size()) {
            throw ShapeError("value count " + std::to_string(values.size()) +
                             " does not match shape " + t.shape().str());
        }
        t.data_ = std::move(values);
        return t;
    }

    static Tensor randn(Shape4 s, Rng& rng, float stddev = 1.0f) {
        Tensor t(s);
        for (auto& v : t.data_) v = rng.normal(0.0f, stddev);
        return t;
    }

    bool empty() const { return data_.empty(); }
    int n() const { return shape_.n; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    Shape4 shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& at(int n, int c, int i, int j) {
        return data_[idx(n, c, i, j)];
    }
    float at(int n, int c, int i, int j) const {
        return data_[idx(n, c, i, j)];
    }

    // Pointer to the h*w block of sample n, channel c.
    float* channel(int n, int c) { return data_.data() + idx(n, c, 0, 0); }
    const float* channel(int n, int c) const { return data_.data() + idx(n, c, 0, 0); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    std::size_t idx(int n, int c, int i, int j) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + i) * shape_.w + j;
    }

    Shape4 shape_{};
    std::vector<float> data_;
};

// Throws ShapeError naming `axis` when sizes differ.
void check_dim(int got, int want, const char* axis, const char* where);

}  // namespace sslnet
