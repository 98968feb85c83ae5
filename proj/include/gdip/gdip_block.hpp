#pragma once

#include <cmath>
#include <vector>

#include "gdip/ip_ops.hpp"
#include "gdip/tensor.hpp"

namespace gdip {

enum class GdipMode { Full, Max, Unnormalized, NoGates };

GdipMode parse_gdip_mode(const std::string& s);
std::string gdip_mode_name(GdipMode m);

struct GdipConfig {
    std::vector<IpKind> ops{kAllIpKinds.begin(), kAllIpKinds.end()};
    GdipMode mode = GdipMode::Full;
    int embedding_dim = 64;

    void validate() const;
};

// One gated sub-unit: linear layer -> (op parameters, gate scalar).
struct GbModule {
    IpKind kind;
    Tensor w;  // (param_count + 1) x embedding_dim
    Tensor b;  // param_count + 1
};

GbModule make_gb(IpKind kind, int embedding_dim, std::mt19937_64& rng);
std::vector<GbModule> make_gbs(const GdipConfig& cfg, std::mt19937_64& rng);

// Shifted tanh gate, value in (0,1).
inline double gate(double s) { return (std::tanh(s) + 1.0) * 0.5; }
inline double gate_deriv(double s) {
    double t = std::tanh(s);
    return 0.5 * (1.0 - t * t);
}

struct GateReport {
    std::vector<double> weights;  // one per op, in config order
};

struct GbForward {
    Image enhanced;  // inner-normalized op output
    double w = 0.0;
    std::vector<double> raw;
};

GbForward gb_forward(const GbModule& gb, const Image& img, const std::vector<double>& embedding);

// Cached intermediates of one GDIP forward pass, consumed by gdip_vjp.
struct GdipCache {
    struct Branch {
        std::vector<double> raw;
        MappedParams mapped;
        Image op_out;             // f_i(x)
        std::vector<double> inner;  // N(f_i(x)) (or f_i(x) in Unnormalized mode)
        double gate_s = 0.0;
        double w = 0.0;
    };
    std::vector<Branch> branches;
    Tensor pre_outer;
    std::size_t argmax = 0;
};

Image gdip_forward(const GdipConfig& cfg, const std::vector<GbModule>& gbs, const Image& img,
                   const std::vector<double>& embedding, GateReport* report = nullptr,
                   GdipCache* cache = nullptr);

struct GbGrads {
    Tensor w;
    Tensor b;
};

// Backward of gdip_forward. g_img and g_embedding are accumulated into.
void gdip_vjp(const GdipConfig& cfg, const std::vector<GbModule>& gbs, const Image& img,
              const std::vector<double>& embedding, const GdipCache& cache,
              const std::vector<double>& g_z, std::vector<double>& g_img,
              std::vector<double>& g_embedding, std::vector<GbGrads>& g_gbs);

}  // namespace gdip
