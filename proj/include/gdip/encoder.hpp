#pragma once

#include <random>
#include <vector>

#include "gdip/tensor.hpp"

namespace gdip {

// Five conv layers, channels doubling per layer. Each layer: 3x3 stride-1
// convolution (zero padding 1), leaky ReLU (slope 0.1), 3x3 stride-2 average
// pooling (padding 1, mean over valid taps).
struct EncoderConfig {
    int input_size = 128;
    int base_channels = 8;
    int num_layers = 5;
    int embedding_dim = 64;

    static EncoderConfig paper() { return {448, 64, 5, 256}; }

    int in_channels(int layer) const { return layer == 0 ? 3 : out_channels(layer - 1); }
    int out_channels(int layer) const { return base_channels << layer; }
    // spatial side length after `layer` pooling steps (layer = -1 is the input)
    int spatial(int layer) const {
        int s = input_size;
        for (int l = 0; l <= layer; ++l) s = (s - 1) / 2 + 1;
        return s;
    }
    void validate() const;
};

struct ConvLayer {
    Tensor w;  // out_ch x in_ch x 3 x 3
    Tensor b;  // out_ch
};

struct EncoderParams {
    std::vector<ConvLayer> layers;
    Tensor fc_w;  // embedding_dim x last_channels
    Tensor fc_b;  // embedding_dim
};

EncoderParams make_encoder(const EncoderConfig& cfg, std::mt19937_64& rng);

struct EncoderTaps {
    std::vector<Tensor> taps;  // C1..C5, each ch x h x w (post pooling)
    std::vector<double> embedding;
};

struct EncoderCache {
    Tensor input;                  // 3 x H x W
    std::vector<Tensor> conv_out;  // pre-activation per layer
    std::vector<Tensor> taps;      // post-pool per layer
    std::vector<double> gap;
};

// 3x3 stride-2 average pooling, padding 1, mean over in-bounds taps.
Tensor avg_pool3x3s2(const Tensor& x);
void avg_pool3x3s2_vjp(const Tensor& x, const Tensor& g_out, Tensor& g_x);

// Single conv+activation+pool layer (the building block, exposed for tests).
Tensor conv_layer_forward(const EncoderConfig& cfg, const ConvLayer& layer, const Tensor& x,
                          int layer_index, Tensor* conv_out = nullptr);

Tensor image_to_chw(const Image& img);

EncoderTaps encoder_forward(const EncoderConfig& cfg, const EncoderParams& p, const Image& img,
                            EncoderCache* cache = nullptr, bool compute_embedding = true);

struct EncoderGrads {
    std::vector<ConvLayer> layers;
    Tensor fc_w, fc_b;
};

EncoderGrads make_encoder_grads(const EncoderParams& p);

// Reverse-mode through the encoder. g_taps may contain an empty vector for a
// layer that receives no direct gradient; g_embedding may be empty when the
// fully connected head was unused. g_img accumulates HxWx3 image gradients.
void encoder_vjp(const EncoderConfig& cfg, const EncoderParams& p, const EncoderCache& cache,
                 const std::vector<std::vector<double>>& g_taps,
                 const std::vector<double>& g_embedding, std::vector<double>& g_img,
                 EncoderGrads& grads);

}  // namespace gdip
