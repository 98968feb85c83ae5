#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gdip/detect.hpp"
#include "gdip/gdip_block.hpp"

namespace gdip {

// One decoded detection, box in normalized center coordinates.
struct Detection {
    int image = 0;
    int cls = 0;
    double cx = 0, cy = 0, w = 0, h = 0;
    double conf = 0;
};

// Intersection over union of two center-format boxes; zero-area boxes give 0.
double iou(double acx, double acy, double aw, double ah, double bcx, double bcy, double bw,
           double bh);
double iou(const Detection& a, const GtBox& b);

// Greedy class-wise non-maximum suppression.
inline constexpr double kNmsIou = 0.45;
std::vector<Detection> nms(std::vector<Detection> dets, double iou_thr = kNmsIou);

// Head output -> detections for one image: per cell, class by highest score,
// confidence = objectness; class-wise NMS applied.
std::vector<Detection> decode_detections(const HeadConfig& cfg, const Tensor& out, int image = 0,
                                         double iou_thr = kNmsIou);

// All-point interpolated average precision for one class over a dataset
// (targets indexed by image). Detections of other classes are ignored.
double average_precision(const std::vector<Detection>& dets,
                         const std::vector<DetectionTarget>& gts, int cls, double iou_thr = 0.5);

double mean_average_precision(const std::vector<Detection>& dets,
                              const std::vector<DetectionTarget>& gts, double iou_thr = 0.5);

struct CurvePoint {
    double threshold = 0;
    int tp = 0, fp = 0, fn = 0;
};

std::vector<double> default_thresholds();  // 0.05 .. 0.95 step 0.05

std::vector<CurvePoint> tp_fp_fn_curves(const std::vector<Detection>& dets,
                                        const std::vector<DetectionTarget>& gts,
                                        const std::vector<double>& thresholds,
                                        double iou_thr = 0.5);

// 10*log10(1/mse); identical images give +infinity.
double psnr(const Image& a, const Image& b);

struct EvalSummary {
    std::array<double, kNumClasses> ap{};
    double map = 0;
    std::vector<CurvePoint> curves;
    double psnr_mean = 0;  // NaN when no reference pairs were evaluated
};

EvalSummary evaluate(const std::vector<Detection>& dets, const std::vector<DetectionTarget>& gts,
                     const std::vector<double>& psnr_values);

void write_eval_csv(const std::string& path, const EvalSummary& s);

// Mean gate activations per IP op, grouped by condition family
// (clear / fog / dark). `gates` maps an image to the model's first-level
// gate report.
struct GateSummaryRow {
    std::string condition;
    std::vector<double> mean_w;  // aligned with ops
};

std::vector<GateSummaryRow> gate_summary(
    const std::vector<std::string>& conditions, const std::vector<Image>& images,
    const std::function<std::vector<double>(const Image&)>& gates);

void write_gate_csv(const std::string& path, const std::vector<IpKind>& ops,
                    const std::vector<GateSummaryRow>& rows);

}  // namespace gdip
