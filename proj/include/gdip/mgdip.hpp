#pragma once

#include <vector>

#include "gdip/encoder.hpp"
#include "gdip/gdip_block.hpp"

namespace gdip {

// A chain of GDIP blocks, one per selected encoder tap, progressively
// enhancing one image. MGDIP uses all five taps; the regularizer variant
// attaches to a subset of a detector backbone's taps.
struct GdipChain {
    GdipConfig block_cfg;
    std::vector<int> tap_indices;           // encoder tap (0-based) guiding each level
    std::vector<Tensor> proj_w;             // embedding_dim x channels(tap)
    std::vector<Tensor> proj_b;             // embedding_dim
    std::vector<std::vector<GbModule>> blocks;

    std::size_t levels() const { return tap_indices.size(); }
};

GdipChain make_chain(const GdipConfig& block_cfg, const EncoderConfig& enc_cfg,
                     std::vector<int> tap_indices, std::mt19937_64& rng);

struct ChainCache {
    struct Level {
        Image input;  // x_{l-1}
        std::vector<double> gap;
        std::vector<double> embedding;
        GdipCache gdip;
    };
    std::vector<Level> levels;
};

Image chain_forward(const GdipChain& chain, const std::vector<Tensor>& taps, const Image& x0,
                    std::vector<GateReport>* reports = nullptr, ChainCache* cache = nullptr);

struct ChainGrads {
    std::vector<Tensor> proj_w, proj_b;
    std::vector<std::vector<GbGrads>> blocks;
};

ChainGrads make_chain_grads(const GdipChain& chain);

// Backward through the chain. Accumulates into g_x0 (image-layout gradient
// of the chain input) and g_taps (per encoder tap, CHW layout).
void chain_vjp(const GdipChain& chain, const std::vector<Tensor>& taps, const ChainCache& cache,
               const std::vector<double>& g_z, std::vector<double>& g_x0,
               std::vector<std::vector<double>>& g_taps, ChainGrads& grads);

// Multi-level GDIP: encoder run once on the adverse image, taps C1..C5
// guiding a five-block chain over the image.
struct MgdipModel {
    EncoderConfig enc_cfg;
    EncoderParams enc;
    GdipChain chain;
};

MgdipModel make_mgdip(const EncoderConfig& enc_cfg, const GdipConfig& block_cfg,
                      std::mt19937_64& rng, std::vector<int> tap_indices = {0, 1, 2, 3, 4});

struct MgdipCache {
    EncoderCache enc;
    ChainCache chain;
    std::vector<Tensor> taps;
};

Image mgdip_forward(const MgdipModel& m, const Image& img,
                    std::vector<GateReport>* reports = nullptr, MgdipCache* cache = nullptr);

struct MgdipGrads {
    EncoderGrads enc;
    ChainGrads chain;
};

MgdipGrads make_mgdip_grads(const MgdipModel& m);

void mgdip_vjp(const MgdipModel& m, const Image& img, const MgdipCache& cache,
               const std::vector<double>& g_z, std::vector<double>& g_img, MgdipGrads& grads);

}  // namespace gdip
