#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gdip/tensor.hpp"

namespace gdip {

// The seven differentiable image processing operations.
enum class IpKind { Tone, Contrast, Sharpen, Defog, Gamma, WhiteBalance, Identity };

inline constexpr std::array<IpKind, 7> kAllIpKinds = {
    IpKind::Tone,    IpKind::Contrast,     IpKind::Sharpen, IpKind::Defog,
    IpKind::Gamma,   IpKind::WhiteBalance, IpKind::Identity};

inline constexpr int kToneCurveSegments = 8;
inline constexpr int kDarkChannelPatch = 7;

int param_count(IpKind kind);
// Short tag used in gate CSV columns: T, C, S, DF, G, WB, I.
std::string kind_tag(IpKind kind);
std::string kind_name(IpKind kind);

// Smooth strictly monotone mapping from raw linear-layer outputs to each
// operation's admissible parameter range, with elementwise derivatives.
struct MappedParams {
    std::vector<double> value;
    std::vector<double> dvalue_draw;
};
MappedParams map_raw_params(IpKind kind, const std::vector<double>& raw);

Image apply_tone(const Image& img, const std::vector<double>& curve);
Image apply_contrast(const Image& img, double alpha);
Image apply_sharpen(const Image& img, double lambda);
Image apply_gamma(const Image& img, double gamma);
Image apply_white_balance(const Image& img, const std::array<double, 3>& w);
Image apply_identity(const Image& img);
Image apply_defog(const Image& img, double omega);

// Per-pixel min over channels then over a patch neighborhood (replicate
// padding). Returns an H x W tensor.
Tensor dark_channel(const Image& img, int patch = kDarkChannelPatch);

// Mean color of the brightest 0.1% dark-channel pixels (at least one).
std::array<double, 3> estimate_atmospheric_light(const Image& img);

// Running count of enhancement-op applications, used to verify that a
// detector's inference path performs no image processing.
std::uint64_t enhancement_op_count();
void reset_enhancement_op_count();

// Uniform entry points used by the GDIP block. Gradients follow the declared
// stop-gradient rules (defog's A and dark channel, range stats in contrast).
Image apply_ip_op(IpKind kind, const Image& img, const std::vector<double>& params);
void ip_op_vjp(IpKind kind, const Image& img, const std::vector<double>& params,
               const std::vector<double>& g_out, std::vector<double>& g_img,
               std::vector<double>& g_params);

}  // namespace gdip
