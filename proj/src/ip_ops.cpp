#include "gdip/ip_ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gdip/stopgrad.hpp"

namespace gdip {

namespace {

constexpr double kLumR = 0.27, kLumG = 0.67, kLumB = 0.06;
constexpr double kContrastEps = 1e-6;
constexpr double kGammaEps = 1e-8;
constexpr double kTransmissionFloor = 0.1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double clamp_mask(double unclamped) {
    return (unclamped > 0.0 && unclamped < 1.0) ? 1.0 : 0.0;
}

// 5x5 Gaussian, sigma = 1, normalized.
const std::array<double, 5>& gauss5() {
    static const std::array<double, 5> k = [] {
        std::array<double, 5> w{};
        double s = 0.0;
        for (int i = -2; i <= 2; ++i) {
            w[i + 2] = std::exp(-0.5 * i * i);
            s += w[i + 2];
        }
        for (double& v : w) v /= s;
        return w;
    }();
    return k;
}

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

// 5x5 Gaussian blur with replicate-edge padding.
std::vector<double> gaussian_blur(const Image& img) {
    const auto& k = gauss5();
    std::vector<double> out(img.data.size(), 0.0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int dy = -2; dy <= 2; ++dy) {
                    int yy = clampi(y + dy, 0, img.height - 1);
                    for (int dx = -2; dx <= 2; ++dx) {
                        int xx = clampi(x + dx, 0, img.width - 1);
                        acc += k[dy + 2] * k[dx + 2] * img.at(yy, xx, c);
                    }
                }
                out[img.idx(y, x, c)] = acc;
            }
        }
    }
    return out;
}

// Adjoint of gaussian_blur (scatter with the same clamped indexing).
std::vector<double> gaussian_blur_adjoint(const Image& img, const std::vector<double>& g) {
    const auto& k = gauss5();
    std::vector<double> out(img.data.size(), 0.0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double gv = g[img.idx(y, x, c)];
                if (gv == 0.0) continue;
                for (int dy = -2; dy <= 2; ++dy) {
                    int yy = clampi(y + dy, 0, img.height - 1);
                    for (int dx = -2; dx <= 2; ++dx) {
                        int xx = clampi(x + dx, 0, img.width - 1);
                        out[img.idx(yy, xx, c)] += k[dy + 2] * k[dx + 2] * gv;
                    }
                }
            }
        }
    }
    return out;
}

std::vector<double> luminance(const Image& img) {
    std::vector<double> lum(static_cast<std::size_t>(img.height) * img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            lum[static_cast<std::size_t>(y) * img.width + x] =
                kLumR * img.at(y, x, 0) + kLumG * img.at(y, x, 1) + kLumB * img.at(y, x, 2);
    return lum;
}

// Tone curve value and derivatives. curve holds K positive weights.
struct ToneEval {
    double value;
    double dvalue_dx;
};

ToneEval tone_curve(double x, const std::vector<double>& curve, double inv_sum) {
    const int K = static_cast<int>(curve.size());
    double acc = 0.0, dacc = 0.0;
    for (int j = 0; j < K; ++j) {
        double a = K * x - j;
        if (a <= 0.0) continue;
        if (a >= 1.0) {
            acc += curve[j];
        } else {
            acc += a * curve[j];
            dacc += K * curve[j];
        }
    }
    return {acc * inv_sum, dacc * inv_sum};
}

}  // namespace

int param_count(IpKind kind) {
    switch (kind) {
        case IpKind::Tone: return kToneCurveSegments;
        case IpKind::Contrast: return 1;
        case IpKind::Sharpen: return 1;
        case IpKind::Defog: return 1;
        case IpKind::Gamma: return 1;
        case IpKind::WhiteBalance: return 3;
        case IpKind::Identity: return 0;
    }
    throw std::invalid_argument("unknown IpKind");
}

std::string kind_tag(IpKind kind) {
    switch (kind) {
        case IpKind::Tone: return "T";
        case IpKind::Contrast: return "C";
        case IpKind::Sharpen: return "S";
        case IpKind::Defog: return "DF";
        case IpKind::Gamma: return "G";
        case IpKind::WhiteBalance: return "WB";
        case IpKind::Identity: return "I";
    }
    throw std::invalid_argument("unknown IpKind");
}

std::string kind_name(IpKind kind) {
    switch (kind) {
        case IpKind::Tone: return "tone";
        case IpKind::Contrast: return "contrast";
        case IpKind::Sharpen: return "sharpen";
        case IpKind::Defog: return "defog";
        case IpKind::Gamma: return "gamma";
        case IpKind::WhiteBalance: return "white_balance";
        case IpKind::Identity: return "identity";
    }
    throw std::invalid_argument("unknown IpKind");
}

MappedParams map_raw_params(IpKind kind, const std::vector<double>& raw) {
    if (static_cast<int>(raw.size()) != param_count(kind))
        throw std::invalid_argument("map_raw_params: wrong raw length for " + kind_name(kind));
    MappedParams out;
    out.value.resize(raw.size());
    out.dvalue_draw.resize(raw.size());
    const double ln3 = std::log(3.0), ln2 = std::log(2.0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double r = raw[i], v = 0.0, d = 0.0;
        switch (kind) {
            case IpKind::Tone: {
                // softplus(r) + 1e-3, numerically stable for large |r|
                double sp = r > 30.0 ? r : std::log1p(std::exp(r));
                v = sp + 1e-3;
                d = sigmoid(r);
                break;
            }
            case IpKind::Contrast: {
                double s = sigmoid(r);
                v = s;
                d = s * (1.0 - s);
                break;
            }
            case IpKind::Sharpen: {
                double s = sigmoid(r);
                v = 2.0 * s;
                d = 2.0 * s * (1.0 - s);
                break;
            }
            case IpKind::Defog: {
                double s = sigmoid(r);
                v = 0.1 + 0.9 * s;
                d = 0.9 * s * (1.0 - s);
                break;
            }
            case IpKind::Gamma: {
                double t = std::tanh(r);
                v = std::exp(t * ln3);
                d = v * ln3 * (1.0 - t * t);
                break;
            }
            case IpKind::WhiteBalance: {
                double t = std::tanh(r);
                v = std::exp(t * ln2);
                d = v * ln2 * (1.0 - t * t);
                break;
            }
            case IpKind::Identity: break;
        }
        out.value[i] = v;
        out.dvalue_draw[i] = d;
    }
    return out;
}

Image apply_tone(const Image& img, const std::vector<double>& curve) {
    if (curve.size() < 2) throw std::invalid_argument("apply_tone: need at least 2 weights");
    for (double t : curve)
        if (t <= 0.0) throw std::invalid_argument("apply_tone: weights must be positive");
    double inv_sum = 1.0 / std::accumulate(curve.begin(), curve.end(), 0.0);
    std::vector<double> out(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out[i] = tone_curve(img.data[i], curve, inv_sum).value;
    return Image::clamped(img.height, img.width, std::move(out));
}

Image apply_contrast(const Image& img, double alpha) {
    std::vector<double> lum = luminance(img);
    auto stats = stopgrad::frozen([&] {
        double lo = *std::min_element(lum.begin(), lum.end());
        double hi = *std::max_element(lum.begin(), lum.end());
        return std::vector<double>{lo, hi};
    });
    double lo = stats[0], hi = stats[1], range = hi - lo;
    std::vector<double> out(img.data.size());
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * img.width + x;
            double en_lum = range < kDegenerateRange ? 0.0 : (lum[p] - lo) / range;
            double ratio = en_lum / (lum[p] + kContrastEps);
            for (int c = 0; c < 3; ++c) {
                double v = img.at(y, x, c);
                out[img.idx(y, x, c)] = alpha * v * ratio + (1.0 - alpha) * v;
            }
        }
    }
    return Image::clamped(img.height, img.width, std::move(out));
}

Image apply_sharpen(const Image& img, double lambda) {
    std::vector<double> blur = gaussian_blur(img);
    std::vector<double> out(img.data.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = img.data[i] + lambda * (img.data[i] - blur[i]);
    return Image::clamped(img.height, img.width, std::move(out));
}

Image apply_gamma(const Image& img, double gamma) {
    std::vector<double> out(img.data.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::exp(gamma * std::log(img.data[i] + kGammaEps));
    return Image::clamped(img.height, img.width, std::move(out));
}

Image apply_white_balance(const Image& img, const std::array<double, 3>& w) {
    std::vector<double> out(img.data.size());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out[img.idx(y, x, c)] = w[c] * img.at(y, x, c);
    return Image::clamped(img.height, img.width, std::move(out));
}

Image apply_identity(const Image& img) { return img; }

Tensor dark_channel(const Image& img, int patch) {
    if (patch < 1 || patch % 2 == 0)
        throw std::invalid_argument("dark_channel: patch must be odd and positive");
    int half = patch / 2;
    std::size_t n = static_cast<std::size_t>(img.height) * img.width;
    std::vector<double> chan_min(n);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            chan_min[static_cast<std::size_t>(y) * img.width + x] =
                std::min({img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)});
    std::vector<double> out(n);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double m = 1e300;
            for (int dy = -half; dy <= half; ++dy) {
                int yy = clampi(y + dy, 0, img.height - 1);
                for (int dx = -half; dx <= half; ++dx) {
                    int xx = clampi(x + dx, 0, img.width - 1);
                    m = std::min(m, chan_min[static_cast<std::size_t>(yy) * img.width + xx]);
                }
            }
            out[static_cast<std::size_t>(y) * img.width + x] = m;
        }
    }
    return Tensor({static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)},
                  std::move(out));
}

std::array<double, 3> estimate_atmospheric_light(const Image& img) {
    Tensor dc = dark_channel(img);
    std::size_t n = dc.size();
    std::size_t take = std::max<std::size_t>(1, n / 1000);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::nth_element(order.begin(), order.begin() + take - 1, order.end(),
                     [&](std::size_t a, std::size_t b) { return dc[a] > dc[b]; });
    std::array<double, 3> a{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < take; ++i) {
        std::size_t p = order[i];
        int y = static_cast<int>(p / img.width);
        int x = static_cast<int>(p % img.width);
        for (int c = 0; c < 3; ++c) a[c] += img.at(y, x, c);
    }
    for (int c = 0; c < 3; ++c) a[c] /= static_cast<double>(take);
    return a;
}

namespace {

// A and the dark channel of I/A are stop-gradient: freeze them together.
struct DefogStats {
    std::array<double, 3> a;
    std::vector<double> dc;  // H*W
};

DefogStats defog_stats(const Image& img) {
    auto blob = stopgrad::frozen([&] {
        std::array<double, 3> a = estimate_atmospheric_light(img);
        std::vector<double> norm(img.data.size());
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c)
                    norm[img.idx(y, x, c)] =
                        std::clamp(img.at(y, x, c) / std::max(a[c], 1e-3), 0.0, 1.0);
        Image scaled = Image::from_data(img.height, img.width, std::move(norm));
        Tensor dc = dark_channel(scaled);
        std::vector<double> out;
        out.reserve(3 + dc.size());
        out.insert(out.end(), a.begin(), a.end());
        out.insert(out.end(), dc.data.begin(), dc.data.end());
        return out;
    });
    DefogStats s;
    s.a = {blob[0], blob[1], blob[2]};
    s.dc.assign(blob.begin() + 3, blob.end());
    return s;
}

}  // namespace

Image apply_defog(const Image& img, double omega) {
    DefogStats s = defog_stats(img);
    std::vector<double> out(img.data.size());
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double t = 1.0 - omega * s.dc[static_cast<std::size_t>(y) * img.width + x];
            double te = std::max(t, kTransmissionFloor);
            for (int c = 0; c < 3; ++c)
                out[img.idx(y, x, c)] = (img.at(y, x, c) - s.a[c]) / te + s.a[c];
        }
    }
    return Image::clamped(img.height, img.width, std::move(out));
}

namespace {
std::atomic<std::uint64_t> g_enhancement_ops{0};
}  // namespace

std::uint64_t enhancement_op_count() { return g_enhancement_ops.load(); }
void reset_enhancement_op_count() { g_enhancement_ops.store(0); }

Image apply_ip_op(IpKind kind, const Image& img, const std::vector<double>& params) {
    if (static_cast<int>(params.size()) != param_count(kind))
        throw std::invalid_argument("apply_ip_op: wrong parameter count for " + kind_name(kind));
    g_enhancement_ops.fetch_add(1, std::memory_order_relaxed);
    switch (kind) {
        case IpKind::Tone: return apply_tone(img, params);
        case IpKind::Contrast: return apply_contrast(img, params[0]);
        case IpKind::Sharpen: return apply_sharpen(img, params[0]);
        case IpKind::Defog: return apply_defog(img, params[0]);
        case IpKind::Gamma: return apply_gamma(img, params[0]);
        case IpKind::WhiteBalance:
            return apply_white_balance(img, {params[0], params[1], params[2]});
        case IpKind::Identity: return apply_identity(img);
    }
    throw std::invalid_argument("unknown IpKind");
}

void ip_op_vjp(IpKind kind, const Image& img, const std::vector<double>& params,
               const std::vector<double>& g_out, std::vector<double>& g_img,
               std::vector<double>& g_params) {
    if (g_out.size() != img.data.size()) throw std::invalid_argument("ip_op_vjp: shape mismatch");
    g_img.assign(img.data.size(), 0.0);
    g_params.assign(params.size(), 0.0);

    switch (kind) {
        case IpKind::Identity: {
            g_img = g_out;
            return;
        }
        case IpKind::Tone: {
            const auto& curve = params;
            double sum = std::accumulate(curve.begin(), curve.end(), 0.0);
            double inv_sum = 1.0 / sum;
            const int K = static_cast<int>(curve.size());
            for (std::size_t i = 0; i < img.data.size(); ++i) {
                double x = img.data[i];
                ToneEval ev = tone_curve(x, curve, inv_sum);
                double m = clamp_mask(ev.value);
                double g = g_out[i] * m;
                if (g == 0.0) continue;
                g_img[i] = g * ev.dvalue_dx;
                for (int j = 0; j < K; ++j) {
                    double a = std::clamp(K * x - j, 0.0, 1.0);
                    g_params[j] += g * (a - ev.value) * inv_sum;
                }
            }
            return;
        }
        case IpKind::Contrast: {
            double alpha = params[0];
            std::vector<double> lum = luminance(img);
            auto stats = stopgrad::frozen([&] {
                double lo = *std::min_element(lum.begin(), lum.end());
                double hi = *std::max_element(lum.begin(), lum.end());
                return std::vector<double>{lo, hi};
            });
            double lo = stats[0], range = stats[1] - stats[0];
            bool degen = range < kDegenerateRange;
            const double wch[3] = {kLumR, kLumG, kLumB};
            for (int y = 0; y < img.height; ++y) {
                for (int x = 0; x < img.width; ++x) {
                    std::size_t p = static_cast<std::size_t>(y) * img.width + x;
                    double en_lum = degen ? 0.0 : (lum[p] - lo) / range;
                    double denom = lum[p] + kContrastEps;
                    double ratio = en_lum / denom;
                    double dratio_dlum =
                        degen ? 0.0 : ((1.0 / range) * denom - en_lum) / (denom * denom);
                    double glum = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        std::size_t i = img.idx(y, x, c);
                        double v = img.data[i];
                        double unc = alpha * v * ratio + (1.0 - alpha) * v;
                        double g = g_out[i] * clamp_mask(unc);
                        if (g == 0.0) continue;
                        g_params[0] += g * (v * ratio - v);
                        g_img[i] += g * (alpha * ratio + 1.0 - alpha);
                        glum += g * alpha * v;
                    }
                    if (glum != 0.0 && dratio_dlum != 0.0) {
                        for (int c = 0; c < 3; ++c)
                            g_img[img.idx(y, x, c)] += glum * dratio_dlum * wch[c];
                    }
                }
            }
            return;
        }
        case IpKind::Sharpen: {
            double lambda = params[0];
            std::vector<double> blur = gaussian_blur(img);
            std::vector<double> gm(img.data.size());
            for (std::size_t i = 0; i < gm.size(); ++i) {
                double unc = img.data[i] + lambda * (img.data[i] - blur[i]);
                gm[i] = g_out[i] * clamp_mask(unc);
                g_params[0] += gm[i] * (img.data[i] - blur[i]);
            }
            std::vector<double> gb = gaussian_blur_adjoint(img, gm);
            for (std::size_t i = 0; i < gm.size(); ++i)
                g_img[i] = (1.0 + lambda) * gm[i] - lambda * gb[i];
            return;
        }
        case IpKind::Gamma: {
            double gamma = params[0];
            for (std::size_t i = 0; i < img.data.size(); ++i) {
                double lg = std::log(img.data[i] + kGammaEps);
                double unc = std::exp(gamma * lg);
                double g = g_out[i] * clamp_mask(unc);
                if (g == 0.0) continue;
                g_img[i] = g * unc * gamma / (img.data[i] + kGammaEps);
                g_params[0] += g * unc * lg;
            }
            return;
        }
        case IpKind::WhiteBalance: {
            for (int y = 0; y < img.height; ++y) {
                for (int x = 0; x < img.width; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        std::size_t i = img.idx(y, x, c);
                        double unc = params[c] * img.data[i];
                        double g = g_out[i] * clamp_mask(unc);
                        if (g == 0.0) continue;
                        g_img[i] = g * params[c];
                        g_params[c] += g * img.data[i];
                    }
                }
            }
            return;
        }
        case IpKind::Defog: {
            double omega = params[0];
            DefogStats s = defog_stats(img);
            for (int y = 0; y < img.height; ++y) {
                for (int x = 0; x < img.width; ++x) {
                    std::size_t p = static_cast<std::size_t>(y) * img.width + x;
                    double t = 1.0 - omega * s.dc[p];
                    double te = std::max(t, kTransmissionFloor);
                    bool floored = t <= kTransmissionFloor;
                    for (int c = 0; c < 3; ++c) {
                        std::size_t i = img.idx(y, x, c);
                        double unc = (img.data[i] - s.a[c]) / te + s.a[c];
                        double g = g_out[i] * clamp_mask(unc);
                        if (g == 0.0) continue;
                        g_img[i] = g / te;
                        if (!floored)
                            g_params[0] += g * (img.data[i] - s.a[c]) * s.dc[p] / (te * te);
                    }
                }
            }
            return;
        }
    }
    throw std::invalid_argument("unknown IpKind");
}

}  // namespace gdip
