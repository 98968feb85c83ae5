#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gdip/stopgrad.hpp"

namespace gdip {

// Row-major dense tensor of doubles. All training math is double precision.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel(shape))
            throw std::invalid_argument("tensor: data length does not match shape");
    }

    static std::size_t numel(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<std::size_t> s, double v) {
        std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<double>(n, v));
    }

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double min() const {
        if (data.empty()) throw std::invalid_argument("tensor: min of empty tensor");
        double m = data[0];
        for (double v : data) m = std::min(m, v);
        return m;
    }

    double max() const {
        if (data.empty()) throw std::invalid_argument("tensor: max of empty tensor");
        double m = data[0];
        for (double v : data) m = std::max(m, v);
        return m;
    }
};

// H x W x 3 image, values in [0,1], row-major (y, x, channel).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // height * width * 3

    Image() = default;
    Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.0) {
        if (h < 1 || w < 1) throw std::invalid_argument("image: dimensions must be >= 1");
    }

    static Image from_data(int h, int w, std::vector<double> d) {
        Image img(h, w);
        if (d.size() != img.data.size())
            throw std::invalid_argument("image: data length does not match dimensions");
        for (double v : d) {
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                throw std::invalid_argument("image: values must be finite and in [0,1]");
        }
        img.data = std::move(d);
        return img;
    }

    // Clamp out-of-range values instead of rejecting; NaN still rejects.
    static Image clamped(int h, int w, std::vector<double> d) {
        Image img(h, w);
        if (d.size() != img.data.size())
            throw std::invalid_argument("image: data length does not match dimensions");
        for (double& v : d) {
            if (!std::isfinite(v)) throw std::invalid_argument("image: non-finite value");
            v = std::clamp(v, 0.0, 1.0);
        }
        img.data = std::move(d);
        return img;
    }

    std::size_t idx(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * 3 + c;
    }
    double at(int y, int x, int c) const { return data[idx(y, x, c)]; }
    double& at(int y, int x, int c) { return data[idx(y, x, c)]; }
    std::size_t size() const { return data.size(); }

    Tensor to_tensor() const {
        return Tensor({static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3},
                      data);
    }
};

constexpr double kDegenerateRange = 1e-12;

// Min-max rescale of the whole tensor to [0,1]. Constant tensors map to zeros.
// The extremal scalars are stop-gradient constants and go on the tape.
inline Tensor normalize_minmax(const Tensor& t) {
    if (t.size() == 0) throw std::invalid_argument("normalize_minmax: empty tensor");
    if (!t.all_finite()) throw std::invalid_argument("normalize_minmax: non-finite input");
    auto stats = stopgrad::frozen([&] { return std::vector<double>{t.min(), t.max()}; });
    double lo = stats[0], hi = stats[1];
    Tensor out = Tensor::zeros(t.shape);
    double range = hi - lo;
    if (range < kDegenerateRange) return out;
    double inv = 1.0 / range;
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = (t[i] - lo) * inv;
    return out;
}

// Backward of normalize_minmax with min/max treated as constants.
inline Tensor normalize_minmax_vjp(const Tensor& t, const Tensor& g_out) {
    if (!t.same_shape(g_out))
        throw std::invalid_argument("normalize_minmax_vjp: shape mismatch");
    double range = t.max() - t.min();
    Tensor g_in = Tensor::zeros(t.shape);
    if (range < kDegenerateRange) return g_in;
    double inv = 1.0 / range;
    for (std::size_t i = 0; i < t.size(); ++i) g_in[i] = g_out[i] * inv;
    return g_in;
}

inline Image normalize_minmax(const Image& img) {
    Tensor t = normalize_minmax(img.to_tensor());
    Image out(img.height, img.width);
    out.data = std::move(t.data);
    return out;
}

inline Image clamp01(int h, int w, std::vector<double> d) {
    return Image::clamped(h, w, std::move(d));
}

// Clamp to [0,1] with the clamp decision treated as a constant: pixels on the
// boundary stay at their recorded value, strictly interior pixels pass
// through. Matches a backward pass that zeroes gradients at boundary pixels.
inline std::vector<double> clamp01_frozen(const std::vector<double>& v) {
    auto rec = stopgrad::frozen([&] {
        std::vector<double> c(v);
        for (auto& x : c) x = std::clamp(x, 0.0, 1.0);
        return c;
    });
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = (rec[i] > 0.0 && rec[i] < 1.0) ? v[i] : rec[i];
    return out;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

}  // namespace gdip
