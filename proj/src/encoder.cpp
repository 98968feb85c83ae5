#include "gdip/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace gdip {

namespace {

constexpr double kLeakySlope = 0.1;

int pooled_size(int s) { return (s - 1) / 2 + 1; }

inline double leaky(double v) { return v > 0.0 ? v : kLeakySlope * v; }
inline double leaky_deriv(double v) { return v > 0.0 ? 1.0 : kLeakySlope; }


// 3x3 stride-1 zero-padded convolution plus bias.
Tensor conv3x3(const Tensor& x, const Tensor& w, const Tensor& b) {
    int in_ch = static_cast<int>(x.shape[0]);
    int h = static_cast<int>(x.shape[1]);
    int wd = static_cast<int>(x.shape[2]);
    int out_ch = static_cast<int>(w.shape[0]);
    if (static_cast<int>(w.shape[1]) != in_ch)
        throw std::invalid_argument("conv_layer: channel mismatch with weights");
    Tensor out = Tensor::zeros({static_cast<std::size_t>(out_ch), static_cast<std::size_t>(h),
                                static_cast<std::size_t>(wd)});
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    for (int oc = 0; oc < out_ch; ++oc) {
        double* op = out.data.data() + oc * plane;
        for (std::size_t i = 0; i < plane; ++i) op[i] = b[oc];
        for (int ic = 0; ic < in_ch; ++ic) {
            const double* ip = x.data.data() + ic * plane;
            const double* wk = w.data.data() + ((static_cast<std::size_t>(oc) * in_ch) + ic) * 9;
            for (int ky = -1; ky <= 1; ++ky) {
                for (int kx = -1; kx <= 1; ++kx) {
                    double wv = wk[(ky + 1) * 3 + (kx + 1)];
                    if (wv == 0.0) continue;
                    int y0 = std::max(0, -ky), y1 = std::min(h, h - ky);
                    int x0 = std::max(0, -kx), x1 = std::min(wd, wd - kx);
                    for (int y = y0; y < y1; ++y) {
                        double* orow = op + static_cast<std::size_t>(y) * wd;
                        const double* irow = ip + static_cast<std::size_t>(y + ky) * wd + kx;
                        for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
                    }
                }
            }
        }
    }
    return out;
}

// Backward of conv3x3: accumulate input gradient and weight/bias gradients.
void conv3x3_vjp(const Tensor& x, const Tensor& w, const Tensor& g_out, Tensor& g_x, Tensor& g_w,
                 Tensor& g_b) {
    int in_ch = static_cast<int>(x.shape[0]);
    int h = static_cast<int>(x.shape[1]);
    int wd = static_cast<int>(x.shape[2]);
    int out_ch = static_cast<int>(w.shape[0]);
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    for (int oc = 0; oc < out_ch; ++oc) {
        const double* gp = g_out.data.data() + oc * plane;
        for (std::size_t i = 0; i < plane; ++i) g_b[oc] += gp[i];
        for (int ic = 0; ic < in_ch; ++ic) {
            const double* ip = x.data.data() + ic * plane;
            double* gip = g_x.data.data() + ic * plane;
            const std::size_t wbase = ((static_cast<std::size_t>(oc) * in_ch) + ic) * 9;
            for (int ky = -1; ky <= 1; ++ky) {
                for (int kx = -1; kx <= 1; ++kx) {
                    double wv = w.data[wbase + (ky + 1) * 3 + (kx + 1)];
                    double gw = 0.0;
                    int y0 = std::max(0, -ky), y1 = std::min(h, h - ky);
                    int x0 = std::max(0, -kx), x1 = std::min(wd, wd - kx);
                    for (int y = y0; y < y1; ++y) {
                        const double* grow = gp + static_cast<std::size_t>(y) * wd;
                        const double* irow = ip + static_cast<std::size_t>(y + ky) * wd + kx;
                        double* girow = gip + static_cast<std::size_t>(y + ky) * wd + kx;
                        for (int xx = x0; xx < x1; ++xx) {
                            gw += grow[xx] * irow[xx];
                            girow[xx] += grow[xx] * wv;
                        }
                    }
                    g_w.data[wbase + (ky + 1) * 3 + (kx + 1)] += gw;
                }
            }
        }
    }
}

}  // namespace

// 3x3 stride-2 average pooling with padding 1; mean over in-bounds taps.
Tensor avg_pool3x3s2(const Tensor& x) {
    int ch = static_cast<int>(x.shape[0]);
    int h = static_cast<int>(x.shape[1]);
    int wd = static_cast<int>(x.shape[2]);
    int oh = pooled_size(h), ow = pooled_size(wd);
    Tensor out = Tensor::zeros({static_cast<std::size_t>(ch), static_cast<std::size_t>(oh),
                                static_cast<std::size_t>(ow)});
    for (int c = 0; c < ch; ++c) {
        const double* ip = x.data.data() + static_cast<std::size_t>(c) * h * wd;
        double* op = out.data.data() + static_cast<std::size_t>(c) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            int iy0 = std::max(0, 2 * y - 1), iy1 = std::min(h, 2 * y + 2);
            for (int xo = 0; xo < ow; ++xo) {
                int ix0 = std::max(0, 2 * xo - 1), ix1 = std::min(wd, 2 * xo + 2);
                double acc = 0.0;
                for (int iy = iy0; iy < iy1; ++iy)
                    for (int ix = ix0; ix < ix1; ++ix)
                        acc += ip[static_cast<std::size_t>(iy) * wd + ix];
                op[static_cast<std::size_t>(y) * ow + xo] =
                    acc / static_cast<double>((iy1 - iy0) * (ix1 - ix0));
            }
        }
    }
    return out;
}

void avg_pool3x3s2_vjp(const Tensor& x, const Tensor& g_out, Tensor& g_x) {
    int ch = static_cast<int>(x.shape[0]);
    int h = static_cast<int>(x.shape[1]);
    int wd = static_cast<int>(x.shape[2]);
    int oh = pooled_size(h), ow = pooled_size(wd);
    for (int c = 0; c < ch; ++c) {
        double* gip = g_x.data.data() + static_cast<std::size_t>(c) * h * wd;
        const double* gop = g_out.data.data() + static_cast<std::size_t>(c) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            int iy0 = std::max(0, 2 * y - 1), iy1 = std::min(h, 2 * y + 2);
            for (int xo = 0; xo < ow; ++xo) {
                int ix0 = std::max(0, 2 * xo - 1), ix1 = std::min(wd, 2 * xo + 2);
                double g = gop[static_cast<std::size_t>(y) * ow + xo] /
                           static_cast<double>((iy1 - iy0) * (ix1 - ix0));
                for (int iy = iy0; iy < iy1; ++iy)
                    for (int ix = ix0; ix < ix1; ++ix)
                        gip[static_cast<std::size_t>(iy) * wd + ix] += g;
            }
        }
    }
}

void EncoderConfig::validate() const {
    if (num_layers != 5) throw std::invalid_argument("encoder: num_layers must be 5");
    if (input_size < 4) throw std::invalid_argument("encoder: input_size too small");
    if (base_channels < 1 || embedding_dim < 1)
        throw std::invalid_argument("encoder: invalid channel configuration");
}

EncoderParams make_encoder(const EncoderConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    EncoderParams p;
    for (int l = 0; l < cfg.num_layers; ++l) {
        int in = cfg.in_channels(l), out = cfg.out_channels(l);
        ConvLayer layer;
        layer.w = Tensor::zeros({static_cast<std::size_t>(out), static_cast<std::size_t>(in), 3,
                                 3});
        layer.b = Tensor::zeros({static_cast<std::size_t>(out)});
        double bound = std::sqrt(6.0 / (in * 9));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : layer.w.data) v = dist(rng);
        p.layers.push_back(std::move(layer));
    }
    int last = cfg.out_channels(cfg.num_layers - 1);
    p.fc_w = Tensor::zeros({static_cast<std::size_t>(cfg.embedding_dim),
                            static_cast<std::size_t>(last)});
    p.fc_b = Tensor::zeros({static_cast<std::size_t>(cfg.embedding_dim)});
    double bound = std::sqrt(6.0 / last);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p.fc_w.data) v = dist(rng);
    return p;
}

Tensor image_to_chw(const Image& img) {
    Tensor t = Tensor::zeros({3, static_cast<std::size_t>(img.height),
                              static_cast<std::size_t>(img.width)});
    std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                t.data[c * plane + static_cast<std::size_t>(y) * img.width + x] = img.at(y, x, c);
    return t;
}

Tensor conv_layer_forward(const EncoderConfig& cfg, const ConvLayer& layer, const Tensor& x,
                          int layer_index, Tensor* conv_out) {
    if (static_cast<int>(x.shape[0]) != cfg.in_channels(layer_index))
        throw std::invalid_argument("conv_layer: channel mismatch");
    Tensor conv = conv3x3(x, layer.w, layer.b);
    if (conv_out) *conv_out = conv;
    Tensor act = conv;
    for (auto& v : act.data) v = leaky(v);
    return avg_pool3x3s2(act);
}

EncoderTaps encoder_forward(const EncoderConfig& cfg, const EncoderParams& p, const Image& img,
                            EncoderCache* cache, bool compute_embedding) {
    cfg.validate();
    if (img.height != cfg.input_size || img.width != cfg.input_size)
        throw std::invalid_argument("encoder: image size does not match config input_size");
    EncoderCache local;
    EncoderCache& c = cache ? *cache : local;
    c.input = image_to_chw(img);
    c.conv_out.clear();
    c.taps.clear();

    Tensor x = c.input;
    for (int l = 0; l < cfg.num_layers; ++l) {
        Tensor conv;
        Tensor pooled = conv_layer_forward(cfg, p.layers[l], x, l, &conv);
        c.conv_out.push_back(std::move(conv));
        c.taps.push_back(pooled);
        x = std::move(pooled);
    }

    EncoderTaps out;
    out.taps = c.taps;

    const Tensor& c5 = c.taps.back();
    int ch = static_cast<int>(c5.shape[0]);
    std::size_t plane = c5.shape[1] * c5.shape[2];
    c.gap.assign(ch, 0.0);
    for (int i = 0; i < ch; ++i) {
        const double* cp = c5.data.data() + i * plane;
        double acc = 0.0;
        for (std::size_t k = 0; k < plane; ++k) acc += cp[k];
        c.gap[i] = acc / static_cast<double>(plane);
    }

    if (compute_embedding) {
        out.embedding.assign(cfg.embedding_dim, 0.0);
        for (int i = 0; i < cfg.embedding_dim; ++i) {
            double acc = p.fc_b[i];
            const double* row = p.fc_w.data.data() + static_cast<std::size_t>(i) * ch;
            for (int j = 0; j < ch; ++j) acc += row[j] * c.gap[j];
            out.embedding[i] = acc;
        }
    }
    return out;
}

EncoderGrads make_encoder_grads(const EncoderParams& p) {
    EncoderGrads g;
    for (const auto& l : p.layers) g.layers.push_back({Tensor::zeros(l.w.shape), Tensor::zeros(l.b.shape)});
    g.fc_w = Tensor::zeros(p.fc_w.shape);
    g.fc_b = Tensor::zeros(p.fc_b.shape);
    return g;
}

void encoder_vjp(const EncoderConfig& cfg, const EncoderParams& p, const EncoderCache& cache,
                 const std::vector<std::vector<double>>& g_taps,
                 const std::vector<double>& g_embedding, std::vector<double>& g_img,
                 EncoderGrads& grads) {
    const Tensor& c5 = cache.taps.back();
    int ch = static_cast<int>(c5.shape[0]);
    std::size_t plane = c5.shape[1] * c5.shape[2];

    // gradient flowing into each tap, starting from the top
    Tensor g_x = Tensor::zeros(c5.shape);

    if (!g_embedding.empty()) {
        if (static_cast<int>(g_embedding.size()) != cfg.embedding_dim)
            throw std::invalid_argument("encoder_vjp: embedding gradient length mismatch");
        std::vector<double> g_gap(ch, 0.0);
        for (int i = 0; i < cfg.embedding_dim; ++i) {
            double ge = g_embedding[i];
            if (ge == 0.0) continue;
            grads.fc_b[i] += ge;
            double* wrow = grads.fc_w.data.data() + static_cast<std::size_t>(i) * ch;
            const double* prow = p.fc_w.data.data() + static_cast<std::size_t>(i) * ch;
            for (int j = 0; j < ch; ++j) {
                wrow[j] += ge * cache.gap[j];
                g_gap[j] += ge * prow[j];
            }
        }
        double inv = 1.0 / static_cast<double>(plane);
        for (int i = 0; i < ch; ++i) {
            double g = g_gap[i] * inv;
            double* gp = g_x.data.data() + i * plane;
            for (std::size_t k = 0; k < plane; ++k) gp[k] += g;
        }
    }

    for (int l = cfg.num_layers - 1; l >= 0; --l) {
        if (l < static_cast<int>(g_taps.size()) && !g_taps[l].empty()) {
            if (g_taps[l].size() != cache.taps[l].size())
                throw std::invalid_argument("encoder_vjp: tap gradient shape mismatch");
            for (std::size_t k = 0; k < g_x.size(); ++k) g_x[k] += g_taps[l][k];
        }
        const Tensor& below = l == 0 ? cache.input : cache.taps[l - 1];
        const Tensor& conv = cache.conv_out[l];

        Tensor g_act = Tensor::zeros(conv.shape);
        avg_pool3x3s2_vjp(conv, g_x, g_act);
        for (std::size_t k = 0; k < g_act.size(); ++k) g_act[k] *= leaky_deriv(conv.data[k]);

        Tensor g_below = Tensor::zeros(below.shape);
        conv3x3_vjp(below, p.layers[l].w, g_act, g_below, grads.layers[l].w, grads.layers[l].b);
        g_x = std::move(g_below);
    }

    // back to HxWx3 image layout
    int h = static_cast<int>(cache.input.shape[1]);
    int w = static_cast<int>(cache.input.shape[2]);
    if (g_img.size() != static_cast<std::size_t>(h) * w * 3)
        g_img.assign(static_cast<std::size_t>(h) * w * 3, 0.0);
    std::size_t iplane = static_cast<std::size_t>(h) * w;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                g_img[(static_cast<std::size_t>(y) * w + x) * 3 + c] +=
                    g_x.data[c * iplane + static_cast<std::size_t>(y) * w + x];
}

}  // namespace gdip
