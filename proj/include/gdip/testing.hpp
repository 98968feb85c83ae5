#pragma once

// Shared fixtures and DiffOp adapters used by the test suites and the
// gradcheck command.

#include <algorithm>
#include <vector>

#include "gdip/detect.hpp"
#include "gdip/encoder.hpp"
#include "gdip/gdip_block.hpp"
#include "gdip/gradcheck.hpp"
#include "gdip/ip_ops.hpp"
#include "gdip/mgdip.hpp"
#include "gdip/tensor.hpp"

namespace gdip::testing {

// Random image with values kept away from the clamp boundaries so finite
// differences stay on one side of every kink.
inline Image random_image(int h, int w, std::uint64_t seed, double lo = 0.05, double hi = 0.95) {
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> d(static_cast<std::size_t>(h) * w * 3);
    for (auto& v : d) v = dist(rng);
    return Image::from_data(h, w, std::move(d));
}

inline std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                      double hi = 1.0) {
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

// Adapter for a single IP operation: input is the image tensor, params are
// the (already range-mapped) op parameters.
struct IpOpDiff : DiffOp {
    IpKind kind;
    int h, w;
    IpOpDiff(IpKind k, int height, int width) : kind(k), h(height), w(width) {}

    Tensor forward(const Tensor& input, const Tensor& params) const override {
        Image img = Image::clamped(h, w, input.data);
        return apply_ip_op(kind, img, params.data).to_tensor();
    }
    void vjp(const Tensor& input, const Tensor& params, const Tensor& g_out, Tensor& g_input,
             Tensor& g_params) const override {
        Image img = Image::clamped(h, w, input.data);
        ip_op_vjp(kind, img, params.data, g_out.data, g_input.data, g_params.data);
    }
};

struct IdentityDiff : DiffOp {
    Tensor forward(const Tensor& input, const Tensor&) const override { return input; }
    void vjp(const Tensor&, const Tensor&, const Tensor& g_out, Tensor& g_input,
             Tensor&) const override {
        g_input = g_out;
    }
};

// Shifted-tanh gate as a one-coordinate DiffOp.
struct GateDiff : DiffOp {
    Tensor forward(const Tensor& input, const Tensor&) const override {
        return Tensor({1}, {gate(input[0])});
    }
    void vjp(const Tensor& input, const Tensor&, const Tensor& g_out, Tensor& g_input,
             Tensor&) const override {
        g_input[0] = g_out[0] * gate_deriv(input[0]);
    }
};

struct NormalizeDiff : DiffOp {
    Tensor forward(const Tensor& input, const Tensor&) const override {
        return normalize_minmax(input);
    }
    void vjp(const Tensor& input, const Tensor&, const Tensor& g_out, Tensor& g_input,
             Tensor&) const override {
        g_input = normalize_minmax_vjp(input, g_out);
    }
};

// Adapter for a whole GDIP block. The parameter tensor packs the embedding
// followed by each Gb module's weight matrix and bias.
struct GdipDiff : DiffOp {
    GdipConfig cfg;
    mutable std::vector<GbModule> gbs;  // weights overwritten from params
    int h, w;

    GdipDiff(GdipConfig c, std::vector<GbModule> g, int height, int width)
        : cfg(std::move(c)), gbs(std::move(g)), h(height), w(width) {}

    Tensor pack(const std::vector<double>& embedding) const {
        std::vector<double> p(embedding);
        for (const auto& gb : gbs) {
            p.insert(p.end(), gb.w.data.begin(), gb.w.data.end());
            p.insert(p.end(), gb.b.data.begin(), gb.b.data.end());
        }
        return Tensor({p.size()}, p);
    }

    void unpack(const Tensor& params, std::vector<double>& embedding) const {
        std::size_t off = static_cast<std::size_t>(cfg.embedding_dim);
        embedding.assign(params.data.begin(), params.data.begin() + off);
        for (auto& gb : gbs) {
            std::copy_n(params.data.begin() + off, gb.w.size(), gb.w.data.begin());
            off += gb.w.size();
            std::copy_n(params.data.begin() + off, gb.b.size(), gb.b.data.begin());
            off += gb.b.size();
        }
    }

    Tensor forward(const Tensor& input, const Tensor& params) const override {
        std::vector<double> e;
        unpack(params, e);
        Image img = Image::clamped(h, w, input.data);
        return gdip_forward(cfg, gbs, img, e).to_tensor();
    }

    void vjp(const Tensor& input, const Tensor& params, const Tensor& g_out, Tensor& g_input,
             Tensor& g_params) const override {
        std::vector<double> e;
        unpack(params, e);
        Image img = Image::clamped(h, w, input.data);
        GdipCache cache;
        gdip_forward(cfg, gbs, img, e, nullptr, &cache);
        std::vector<double> g_img, g_e;
        std::vector<GbGrads> g_gbs;
        gdip_vjp(cfg, gbs, img, e, cache, g_out.data, g_img, g_e, g_gbs);
        g_input.data = g_img;
        std::size_t off = 0;
        std::copy(g_e.begin(), g_e.end(), g_params.data.begin());
        off += g_e.size();
        for (const auto& gg : g_gbs) {
            std::copy(gg.w.data.begin(), gg.w.data.end(), g_params.data.begin() + off);
            off += gg.w.size();
            std::copy(gg.b.data.begin(), gg.b.data.end(), g_params.data.begin() + off);
            off += gg.b.size();
        }
    }
};

// Adapter for the vision encoder: output is the embedding.
struct EncoderDiff : DiffOp {
    EncoderConfig cfg;
    mutable EncoderParams params_store;

    EncoderDiff(EncoderConfig c, EncoderParams p) : cfg(c), params_store(std::move(p)) {}

    Tensor pack() const {
        std::vector<double> p;
        for (const auto& l : params_store.layers) {
            p.insert(p.end(), l.w.data.begin(), l.w.data.end());
            p.insert(p.end(), l.b.data.begin(), l.b.data.end());
        }
        p.insert(p.end(), params_store.fc_w.data.begin(), params_store.fc_w.data.end());
        p.insert(p.end(), params_store.fc_b.data.begin(), params_store.fc_b.data.end());
        return Tensor({p.size()}, p);
    }

    void unpack(const Tensor& p) const {
        std::size_t off = 0;
        for (auto& l : params_store.layers) {
            std::copy_n(p.data.begin() + off, l.w.size(), l.w.data.begin());
            off += l.w.size();
            std::copy_n(p.data.begin() + off, l.b.size(), l.b.data.begin());
            off += l.b.size();
        }
        std::copy_n(p.data.begin() + off, params_store.fc_w.size(),
                    params_store.fc_w.data.begin());
        off += params_store.fc_w.size();
        std::copy_n(p.data.begin() + off, params_store.fc_b.size(),
                    params_store.fc_b.data.begin());
    }

    Tensor forward(const Tensor& input, const Tensor& p) const override {
        unpack(p);
        Image img = Image::clamped(cfg.input_size, cfg.input_size, input.data);
        EncoderTaps taps = encoder_forward(cfg, params_store, img);
        return Tensor({taps.embedding.size()}, taps.embedding);
    }

    void vjp(const Tensor& input, const Tensor& p, const Tensor& g_out, Tensor& g_input,
             Tensor& g_params) const override {
        unpack(p);
        Image img = Image::clamped(cfg.input_size, cfg.input_size, input.data);
        EncoderCache cache;
        encoder_forward(cfg, params_store, img, &cache);
        EncoderGrads grads = make_encoder_grads(params_store);
        std::vector<double> g_img;
        encoder_vjp(cfg, params_store, cache, {}, g_out.data, g_img, grads);
        g_input.data = g_img;
        std::size_t off = 0;
        for (const auto& l : grads.layers) {
            std::copy(l.w.data.begin(), l.w.data.end(), g_params.data.begin() + off);
            off += l.w.size();
            std::copy(l.b.data.begin(), l.b.data.end(), g_params.data.begin() + off);
            off += l.b.size();
        }
        std::copy(grads.fc_w.data.begin(), grads.fc_w.data.end(), g_params.data.begin() + off);
        off += grads.fc_w.size();
        std::copy(grads.fc_b.data.begin(), grads.fc_b.data.end(), g_params.data.begin() + off);
    }
};

// Adapter for MGDIP over all parameters (encoder + projections + blocks).
struct MgdipDiff : DiffOp {
    mutable MgdipModel model;

    explicit MgdipDiff(MgdipModel m) : model(std::move(m)) {}

    Tensor pack() const {
        std::vector<double> p;
        auto push = [&](const Tensor& t) { p.insert(p.end(), t.data.begin(), t.data.end()); };
        for (const auto& l : model.enc.layers) {
            push(l.w);
            push(l.b);
        }
        for (std::size_t l = 0; l < model.chain.levels(); ++l) {
            push(model.chain.proj_w[l]);
            push(model.chain.proj_b[l]);
            for (const auto& gb : model.chain.blocks[l]) {
                push(gb.w);
                push(gb.b);
            }
        }
        return Tensor({p.size()}, p);
    }

    void unpack(const Tensor& p) const {
        std::size_t off = 0;
        auto pull = [&](Tensor& t) {
            std::copy_n(p.data.begin() + off, t.size(), t.data.begin());
            off += t.size();
        };
        for (auto& l : model.enc.layers) {
            pull(l.w);
            pull(l.b);
        }
        for (std::size_t l = 0; l < model.chain.levels(); ++l) {
            pull(model.chain.proj_w[l]);
            pull(model.chain.proj_b[l]);
            for (auto& gb : model.chain.blocks[l]) {
                pull(gb.w);
                pull(gb.b);
            }
        }
    }

    Tensor forward(const Tensor& input, const Tensor& p) const override {
        unpack(p);
        Image img = Image::clamped(model.enc_cfg.input_size, model.enc_cfg.input_size, input.data);
        return mgdip_forward(model, img).to_tensor();
    }

    void vjp(const Tensor& input, const Tensor& p, const Tensor& g_out, Tensor& g_input,
             Tensor& g_params) const override {
        unpack(p);
        Image img = Image::clamped(model.enc_cfg.input_size, model.enc_cfg.input_size, input.data);
        MgdipCache cache;
        mgdip_forward(model, img, nullptr, &cache);
        MgdipGrads grads = make_mgdip_grads(model);
        std::vector<double> g_img;
        mgdip_vjp(model, img, cache, g_out.data, g_img, grads);
        g_input.data = g_img;
        std::size_t off = 0;
        auto put = [&](const Tensor& t) {
            std::copy(t.data.begin(), t.data.end(), g_params.data.begin() + off);
            off += t.size();
        };
        for (const auto& l : grads.enc.layers) {
            put(l.w);
            put(l.b);
        }
        for (std::size_t l = 0; l < model.chain.levels(); ++l) {
            put(grads.chain.proj_w[l]);
            put(grads.chain.proj_b[l]);
            for (const auto& gg : grads.chain.blocks[l]) {
                put(gg.w);
                put(gg.b);
            }
        }
    }
};

// Adapter for the detection head: input is the (flattened) C5 tensor.
struct HeadDiff : DiffOp {
    mutable DetectHead head;
    std::vector<std::size_t> c5_shape;

    HeadDiff(DetectHead h, std::vector<std::size_t> shape)
        : head(std::move(h)), c5_shape(std::move(shape)) {}

    Tensor pack() const {
        std::vector<double> p(head.w.data);
        p.insert(p.end(), head.b.data.begin(), head.b.data.end());
        return Tensor({p.size()}, p);
    }
    void unpack(const Tensor& p) const {
        std::copy_n(p.data.begin(), head.w.size(), head.w.data.begin());
        std::copy_n(p.data.begin() + head.w.size(), head.b.size(), head.b.data.begin());
    }

    Tensor forward(const Tensor& input, const Tensor& p) const override {
        unpack(p);
        Tensor c5(c5_shape, input.data);
        return head_forward(head, c5);
    }
    void vjp(const Tensor& input, const Tensor& p, const Tensor& g_out, Tensor& g_input,
             Tensor& g_params) const override {
        unpack(p);
        Tensor c5(c5_shape, input.data);
        HeadCache cache;
        head_forward(head, c5, &cache);
        Tensor g_c5 = Tensor::zeros(c5_shape);
        HeadGrads grads{Tensor::zeros(head.w.shape), Tensor::zeros(head.b.shape)};
        head_vjp(head, c5, cache, g_out, g_c5, grads);
        g_input.data = g_c5.data;
        std::copy(grads.w.data.begin(), grads.w.data.end(), g_params.data.begin());
        std::copy(grads.b.data.begin(), grads.b.data.end(),
                  g_params.data.begin() + grads.w.size());
    }
};

// Full regularizer-variant loss as a scalar DiffOp: input is the adverse
// image, parameters pack encoder + head + chain weights.
struct RegLossDiff : DiffOp {
    mutable RegularizerModel model;
    Image clear;
    DetectionTarget target;
    double alpha;

    RegLossDiff(RegularizerModel m, Image c, DetectionTarget t, double a)
        : model(std::move(m)), clear(std::move(c)), target(std::move(t)), alpha(a) {}

    Tensor pack() const {
        std::vector<double> p;
        auto push = [&](const Tensor& t) { p.insert(p.end(), t.data.begin(), t.data.end()); };
        for (const auto& l : model.enc.layers) {
            push(l.w);
            push(l.b);
        }
        push(model.head.w);
        push(model.head.b);
        for (std::size_t l = 0; l < model.chain.levels(); ++l) {
            push(model.chain.proj_w[l]);
            push(model.chain.proj_b[l]);
            for (const auto& gb : model.chain.blocks[l]) {
                push(gb.w);
                push(gb.b);
            }
        }
        return Tensor({p.size()}, p);
    }
    void unpack(const Tensor& p) const {
        std::size_t off = 0;
        auto pull = [&](Tensor& t) {
            std::copy_n(p.data.begin() + off, t.size(), t.data.begin());
            off += t.size();
        };
        for (auto& l : model.enc.layers) {
            pull(l.w);
            pull(l.b);
        }
        pull(model.head.w);
        pull(model.head.b);
        for (std::size_t l = 0; l < model.chain.levels(); ++l) {
            pull(model.chain.proj_w[l]);
            pull(model.chain.proj_b[l]);
            for (auto& gb : model.chain.blocks[l]) {
                pull(gb.w);
                pull(gb.b);
            }
        }
    }

    Tensor forward(const Tensor& input, const Tensor& p) const override {
        unpack(p);
        Image img = Image::clamped(clear.height, clear.width, input.data);
        LossBreakdown lb = regularizer_forward(model, img, &clear, target, alpha);
        return Tensor({1}, {lb.l_total});
    }
    void vjp(const Tensor& input, const Tensor& p, const Tensor& g_out, Tensor& g_input,
             Tensor& g_params) const override {
        unpack(p);
        Image img = Image::clamped(clear.height, clear.width, input.data);
        RegCache cache;
        regularizer_forward(model, img, &clear, target, alpha, &cache);
        RegGrads grads = make_reg_grads(model);
        std::vector<double> g_img;
        regularizer_vjp(model, img, &clear, target, alpha, cache, grads, &g_img);
        double g = g_out[0];
        for (std::size_t i = 0; i < g_img.size(); ++i) g_input[i] = g * g_img[i];
        std::size_t off = 0;
        auto put = [&](const Tensor& t) {
            for (std::size_t i = 0; i < t.size(); ++i) g_params[off + i] = g * t[i];
            off += t.size();
        };
        for (const auto& l : grads.enc.layers) {
            put(l.w);
            put(l.b);
        }
        put(grads.head.w);
        put(grads.head.b);
        for (std::size_t l = 0; l < model.chain.levels(); ++l) {
            put(grads.chain.proj_w[l]);
            put(grads.chain.proj_b[l]);
            for (const auto& gg : grads.chain.blocks[l]) {
                put(gg.w);
                put(gg.b);
            }
        }
    }
};

}  // namespace gdip::testing
