#pragma once

#include <string>
#include <vector>

#include "gdip/detect.hpp"
#include "gdip/mgdip.hpp"

namespace gdip {

// The four architecture variants. Baseline is a plain detector; gdip puts a
// single embedding-guided GDIP block in front of it; mgdip a five-level chain;
// regularizer attaches GDIP blocks to the detector backbone during training
// only (reconstruction loss), leaving the inference path untouched.
enum class Variant { Baseline, Gdip, Mgdip, Regularizer };

Variant parse_variant(const std::string& s);
std::string variant_name(Variant v);

struct ModelConfig {
    Variant variant = Variant::Gdip;
    GdipMode mode = GdipMode::Full;
    int image_size = 96;
    int base_channels = 8;
    int embedding_dim = 64;
    int grid = 3;
    std::vector<int> reg_taps = {1, 3};  // regularizer variant only

    EncoderConfig encoder() const { return {image_size, base_channels, 5, embedding_dim}; }
    HeadConfig head() const { return {grid, kNumClasses}; }
    // enhancement chain taps: top-level embedding only for gdip, all five
    // encoder levels for mgdip
    std::vector<int> enh_taps() const;
    void validate() const;
};

// `det` carries the detector (backbone + head) for every variant; its chain is
// empty except for the regularizer variant. `enh` carries the enhancement
// front end and is empty (zero chain levels) for baseline/regularizer.
struct Model {
    ModelConfig cfg;
    MgdipModel enh;
    RegularizerModel det;

    bool has_enhancer() const { return !enh.chain.tap_indices.empty(); }
};

Model make_model(const ModelConfig& cfg, std::uint64_t seed);

struct ModelGrads {
    MgdipGrads enh;
    RegGrads det;
};

ModelGrads make_model_grads(const Model& m);
void zero_grads(const Model& m, ModelGrads& g);

// Flat named view over every parameter tensor, in a fixed order shared with
// grad_views; drives SGD, checkpoints, and gradient accumulation.
struct ParamRef {
    std::string name;
    Tensor* t = nullptr;
    bool bias = false;
};

std::vector<ParamRef> param_views(Model& m);
std::vector<ParamRef> grad_views(const Model& m, ModelGrads& g);

struct ModelCache {
    MgdipCache enh;
    Image enhanced;
    RegCache det;
};

// Training-path loss. `clear` may be null unless the variant is regularizer
// with alpha != 0. Non-regularizer variants ignore alpha (pure L_obj).
LossBreakdown model_loss(const Model& m, const Image& img, const Image* clear,
                         const DetectionTarget& target, double alpha,
                         ModelCache* cache = nullptr);

void model_vjp(const Model& m, const Image& img, const Image* clear,
               const DetectionTarget& target, double alpha, const ModelCache& cache,
               ModelGrads& grads);

// Inference. Enhancement exists only for gdip/mgdip checkpoints.
Image model_enhance(const Model& m, const Image& img,
                    std::vector<GateReport>* reports = nullptr);
Tensor model_detect(const Model& m, const Image& img);

// First-level gate weights for an input image (gdip/mgdip only).
std::vector<double> model_gates(const Model& m, const Image& img);

// Detector-only copy of any model (drops enhancement and regularizer groups).
Model to_baseline(const Model& m);

// Binary checkpoint container: magic "GDIP1", config block, named tensors.
void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

}  // namespace gdip
