#include "gdip/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "gdip/ip_ops.hpp"

namespace gdip {

double iou(double acx, double acy, double aw, double ah, double bcx, double bcy, double bw,
           double bh) {
    if (aw <= 0.0 || ah <= 0.0 || bw <= 0.0 || bh <= 0.0) return 0.0;
    double ax0 = acx - aw / 2, ax1 = acx + aw / 2, ay0 = acy - ah / 2, ay1 = acy + ah / 2;
    double bx0 = bcx - bw / 2, bx1 = bcx + bw / 2, by0 = bcy - bh / 2, by1 = bcy + bh / 2;
    double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    double inter = ix * iy;
    double uni = aw * ah + bw * bh - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double iou(const Detection& a, const GtBox& b) {
    return iou(a.cx, a.cy, a.w, a.h, b.cx, b.cy, b.w, b.h);
}

namespace {

// Sort detections by descending confidence, earlier index breaking ties.
std::vector<std::size_t> conf_order(const std::vector<Detection>& dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].conf > dets[b].conf;
    });
    return order;
}

}  // namespace

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thr) {
    std::vector<std::size_t> order = conf_order(dets);
    std::vector<bool> kept(dets.size(), false);
    std::vector<Detection> out;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const Detection& d = dets[order[oi]];
        bool suppressed = false;
        for (std::size_t oj = 0; oj < oi && !suppressed; ++oj) {
            if (!kept[order[oj]]) continue;
            const Detection& k = dets[order[oj]];
            if (k.cls != d.cls || k.image != d.image) continue;
            if (iou(d.cx, d.cy, d.w, d.h, k.cx, k.cy, k.w, k.h) > iou_thr) suppressed = true;
        }
        if (!suppressed) {
            kept[order[oi]] = true;
            out.push_back(d);
        }
    }
    return out;
}

std::vector<Detection> decode_detections(const HeadConfig& cfg, const Tensor& out, int image,
                                         double iou_thr) {
    std::vector<DecodedCell> cells = decode_output(cfg, out);
    int grid = cfg.grid;
    std::vector<Detection> dets;
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            const auto& c = cells[static_cast<std::size_t>(gy) * grid + gx];
            Detection d;
            d.image = image;
            d.conf = c.obj;
            d.cx = (gx + c.x) / grid;
            d.cy = (gy + c.y) / grid;
            d.w = c.sw * c.sw;
            d.h = c.sh * c.sh;
            int best = 0;
            for (int j = 1; j < cfg.num_classes; ++j)
                if (c.cls[j] > c.cls[best]) best = j;
            d.cls = best;
            dets.push_back(d);
        }
    }
    return nms(std::move(dets), iou_thr);
}

namespace {

// Greedy matching of one class's detections (already confidence-ordered)
// against ground truths; returns per-detection TP flags and the gt count.
struct MatchResult {
    std::vector<bool> tp;
    std::size_t num_gt = 0;
};

MatchResult greedy_match(const std::vector<Detection>& dets,
                         const std::vector<std::size_t>& order,
                         const std::vector<DetectionTarget>& gts, int cls, double iou_thr) {
    MatchResult res;
    res.tp.assign(order.size(), false);
    std::vector<std::vector<bool>> used(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) {
        used[i].assign(gts[i].boxes.size(), false);
        for (const auto& b : gts[i].boxes)
            if (b.cls == cls) ++res.num_gt;
    }
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const Detection& d = dets[order[oi]];
        if (d.image < 0 || static_cast<std::size_t>(d.image) >= gts.size()) continue;
        const auto& boxes = gts[d.image].boxes;
        double best_iou = 0.0;
        int best = -1;
        for (std::size_t j = 0; j < boxes.size(); ++j) {
            if (boxes[j].cls != cls || used[d.image][j]) continue;
            double v = iou(d, boxes[j]);
            if (v > best_iou) {  // strict: ties keep the earlier gt index
                best_iou = v;
                best = static_cast<int>(j);
            }
        }
        if (best >= 0 && best_iou >= iou_thr) {
            used[d.image][best] = true;
            res.tp[oi] = true;
        }
    }
    return res;
}

}  // namespace

double average_precision(const std::vector<Detection>& dets,
                         const std::vector<DetectionTarget>& gts, int cls, double iou_thr) {
    std::vector<Detection> cd;
    for (const auto& d : dets)
        if (d.cls == cls) cd.push_back(d);
    std::vector<std::size_t> order = conf_order(cd);
    MatchResult m = greedy_match(cd, order, gts, cls, iou_thr);
    if (m.num_gt == 0) return cd.empty() ? 1.0 : 0.0;
    if (cd.empty()) return 0.0;

    // precision/recall points in confidence order
    std::vector<double> prec(cd.size()), rec(cd.size());
    std::size_t tp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (m.tp[i]) ++tp;
        prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        rec[i] = static_cast<double>(tp) / static_cast<double>(m.num_gt);
    }
    // precision envelope, integrated over recall (all-point interpolation)
    double ap = 0.0;
    for (std::size_t i = prec.size(); i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
    double prev_rec = 0.0;
    for (std::size_t i = 0; i < prec.size(); ++i) {
        ap += (rec[i] - prev_rec) * prec[i];
        prev_rec = rec[i];
    }
    return ap;
}

double mean_average_precision(const std::vector<Detection>& dets,
                              const std::vector<DetectionTarget>& gts, double iou_thr) {
    double acc = 0.0;
    for (int c = 0; c < kNumClasses; ++c) acc += average_precision(dets, gts, c, iou_thr);
    return acc / kNumClasses;
}

std::vector<double> default_thresholds() {
    std::vector<double> t;
    for (int i = 1; i <= 19; ++i) t.push_back(0.05 * i);
    return t;
}

std::vector<CurvePoint> tp_fp_fn_curves(const std::vector<Detection>& dets,
                                        const std::vector<DetectionTarget>& gts,
                                        const std::vector<double>& thresholds, double iou_thr) {
    for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
        if (thresholds[i] > thresholds[i + 1])
            throw std::invalid_argument("curves: thresholds must be ascending");
    std::size_t total_gt = 0;
    for (const auto& t : gts) total_gt += t.boxes.size();
    std::vector<CurvePoint> out;
    for (double thr : thresholds) {
        CurvePoint p;
        p.threshold = thr;
        for (int cls = 0; cls < kNumClasses; ++cls) {
            std::vector<Detection> cd;
            for (const auto& d : dets)
                if (d.cls == cls && d.conf >= thr) cd.push_back(d);
            std::vector<std::size_t> order = conf_order(cd);
            MatchResult m = greedy_match(cd, order, gts, cls, iou_thr);
            for (bool tp : m.tp) (tp ? p.tp : p.fp)++;
        }
        p.fn = static_cast<int>(total_gt) - p.tp;
        out.push_back(p);
    }
    return out;
}

double psnr(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("psnr: dimension mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

EvalSummary evaluate(const std::vector<Detection>& dets, const std::vector<DetectionTarget>& gts,
                     const std::vector<double>& psnr_values) {
    EvalSummary s;
    for (int c = 0; c < kNumClasses; ++c) s.ap[c] = average_precision(dets, gts, c);
    s.map = std::accumulate(s.ap.begin(), s.ap.end(), 0.0) / kNumClasses;
    s.curves = tp_fp_fn_curves(dets, gts, default_thresholds());
    if (psnr_values.empty()) {
        s.psnr_mean = std::numeric_limits<double>::quiet_NaN();
    } else {
        s.psnr_mean = std::accumulate(psnr_values.begin(), psnr_values.end(), 0.0) /
                      static_cast<double>(psnr_values.size());
    }
    return s;
}

void write_eval_csv(const std::string& path, const EvalSummary& s) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write eval csv: " + path);
    out << "metric,value\n";
    for (int c = 0; c < kNumClasses; ++c)
        out << "ap_" << kClassNames[c] << ',' << s.ap[c] << '\n';
    out << "map," << s.map << '\n';
    out << "psnr_mean," << s.psnr_mean << '\n';
    out << "threshold,tp,fp,fn\n";
    for (const auto& p : s.curves)
        out << p.threshold << ',' << p.tp << ',' << p.fp << ',' << p.fn << '\n';
}

std::vector<GateSummaryRow> gate_summary(
    const std::vector<std::string>& conditions, const std::vector<Image>& images,
    const std::function<std::vector<double>(const Image&)>& gates) {
    if (conditions.size() != images.size())
        throw std::invalid_argument("gate_summary: condition/image count mismatch");
    std::map<std::string, std::pair<std::vector<double>, int>> acc;
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::string family = conditions[i].substr(0, conditions[i].find(':'));
        std::vector<double> w = gates(images[i]);
        auto& slot = acc[family];
        if (slot.first.empty()) slot.first.assign(w.size(), 0.0);
        if (slot.first.size() != w.size())
            throw std::invalid_argument("gate_summary: inconsistent gate count");
        for (std::size_t j = 0; j < w.size(); ++j) slot.first[j] += w[j];
        slot.second++;
    }
    std::vector<GateSummaryRow> rows;
    for (auto& [family, slot] : acc) {
        GateSummaryRow r;
        r.condition = family;
        for (double v : slot.first) r.mean_w.push_back(v / slot.second);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_gate_csv(const std::string& path, const std::vector<IpKind>& ops,
                    const std::vector<GateSummaryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write gate csv: " + path);
    out << "condition";
    for (IpKind k : ops) out << ',' << kind_tag(k);
    out << '\n';
    for (const auto& r : rows) {
        out << r.condition;
        for (double v : r.mean_w) out << ',' << v;
        out << '\n';
    }
}

}  // namespace gdip
