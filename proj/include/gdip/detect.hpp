#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "gdip/mgdip.hpp"
#include "gdip/tensor.hpp"

namespace gdip {

inline constexpr int kNumClasses = 3;
inline constexpr std::array<const char*, kNumClasses> kClassNames = {"circle", "square",
                                                                    "triangle"};
inline constexpr double kLambdaCoord = 5.0;
inline constexpr double kLambdaNoobj = 0.5;

// One ground-truth box in normalized image coordinates (box center + size).
struct GtBox {
    int cls = 0;
    double cx = 0, cy = 0, w = 0, h = 0;
};

struct DetectionTarget {
    std::vector<GtBox> boxes;
    void validate() const;
};

// Text serialization: one line "class cx cy w h" per box.
DetectionTarget read_target(std::istream& in);
void write_target(std::ostream& out, const DetectionTarget& t);
DetectionTarget load_target(const std::string& path);
void save_target(const std::string& path, const DetectionTarget& t);

// Single-scale grid head: C5 adaptively average-pooled to G x G, then a 1x1
// convolution producing per-cell (objectness, tx, ty, tw, th, class logits).
struct HeadConfig {
    int grid = 8;
    int num_classes = kNumClasses;
    int cell_channels() const { return 5 + num_classes; }
    void validate() const;
};

struct DetectHead {
    HeadConfig cfg;
    Tensor w;  // cell_channels x in_channels
    Tensor b;  // cell_channels
};

DetectHead make_head(const HeadConfig& cfg, int in_channels, std::mt19937_64& rng);

// Adaptive average pooling of a CHW tensor to a G x G spatial grid (G <= S).
Tensor adaptive_avg_pool(const Tensor& x, int grid);
void adaptive_avg_pool_vjp(const Tensor& x, const Tensor& g_out, Tensor& g_x);

struct HeadCache {
    Tensor pooled;  // ch x G x G
};

// Output layout: G x G x cell_channels, cells row-major.
Tensor head_forward(const DetectHead& head, const Tensor& c5, HeadCache* cache = nullptr);

struct HeadGrads {
    Tensor w, b;
};

void head_vjp(const DetectHead& head, const Tensor& c5, const HeadCache& cache,
              const Tensor& g_out, Tensor& g_c5, HeadGrads& grads);

// Sigmoid-decoded view of one cell: objectness, in-cell offsets, sqrt sizes,
// and class scores, all in (0,1).
struct DecodedCell {
    double obj = 0, x = 0, y = 0, sw = 0, sh = 0;
    std::array<double, kNumClasses> cls{};
};

std::vector<DecodedCell> decode_output(const HeadConfig& cfg, const Tensor& out);

// Responsible ground-truth box per cell (-1 when none); when two boxes land
// in one cell the larger-area box takes it.
std::vector<int> assign_cells(const DetectionTarget& target, int grid);

// Yolo-style sum-squared detection loss over the decoded cells.
double loss_obj_decoded(const HeadConfig& cfg, const std::vector<DecodedCell>& cells,
                        const DetectionTarget& target);
double loss_obj(const HeadConfig& cfg, const Tensor& out, const DetectionTarget& target);
void loss_obj_vjp(const HeadConfig& cfg, const Tensor& out, const DetectionTarget& target,
                  double g_loss, Tensor& g_out);

// Reconstruction loss pair: mean L1 and mean squared error.
void loss_rec(const Image& z, const Image& clear, double& l1, double& mse);
void loss_rec_vjp(const Image& z, const Image& clear, double g_l1, double g_mse,
                  std::vector<double>& g_z);

double loss_total(double l_obj, double l_reg, double alpha);
inline constexpr double kDefaultAlpha = 1e-4;

struct LossBreakdown {
    double l_obj = 0, l_rec_l1 = 0, l_rec_mse = 0, l_reg = 0, l_total = 0, alpha = 0;
};

// Detector with GDIP blocks attached to backbone taps during training only;
// the inference path is the plain backbone + head.
struct RegularizerModel {
    EncoderConfig enc_cfg;
    EncoderParams enc;
    DetectHead head;
    GdipChain chain;
};

RegularizerModel make_regularizer(const EncoderConfig& enc_cfg, const HeadConfig& head_cfg,
                                  const GdipConfig& block_cfg, std::mt19937_64& rng,
                                  std::vector<int> tap_indices = {1, 3});

struct RegCache {
    EncoderCache enc;
    HeadCache head;
    Tensor head_out;
    ChainCache chain;
    Image recon;       // reconstructed image (valid when alpha != 0)
    Image norm_clear;  // N(clear), the reconstruction target
};

// Detection on the raw adverse image plus the reconstruction byproduct.
// clear may be null only when alpha = 0.
LossBreakdown regularizer_forward(const RegularizerModel& m, const Image& adverse,
                                  const Image* clear, const DetectionTarget& target, double alpha,
                                  RegCache* cache = nullptr);

struct RegGrads {
    EncoderGrads enc;
    HeadGrads head;
    ChainGrads chain;
};

RegGrads make_reg_grads(const RegularizerModel& m);

void regularizer_vjp(const RegularizerModel& m, const Image& adverse, const Image* clear,
                     const DetectionTarget& target, double alpha, const RegCache& cache,
                     RegGrads& grads, std::vector<double>* g_adverse = nullptr);

// Inference path of the regularizer variant: plain detection, no enhancement.
Tensor detector_forward(const EncoderConfig& enc_cfg, const EncoderParams& enc,
                        const DetectHead& head, const Image& img, EncoderCache* enc_cache = nullptr,
                        HeadCache* head_cache = nullptr);

}  // namespace gdip
