#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gdip/metrics.hpp"
#include "gdip/testing.hpp"

using namespace gdip;

TEST_CASE("iou fixtures") {
    CHECK(iou(0.5, 0.5, 0.2, 0.4, 0.5, 0.5, 0.2, 0.4) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(iou(0.2, 0.2, 0.1, 0.1, 0.8, 0.8, 0.1, 0.1) == 0.0);
    // corners (0,0)-(2,2) and (1,1)-(3,3) on a 4-unit canvas
    CHECK(iou(0.25, 0.25, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5) == 1.0 / 7.0);
    CHECK(iou(0.5, 0.5, 0.0, 0.3, 0.5, 0.5, 0.2, 0.2) == 0.0);  // zero-area
}

namespace {

DetectionTarget gt_of(std::vector<GtBox> boxes) {
    DetectionTarget t;
    t.boxes = std::move(boxes);
    return t;
}

Detection det(int image, int cls, const GtBox& b, double conf) {
    return {image, cls, b.cx, b.cy, b.w, b.h, conf};
}

}  // namespace

TEST_CASE("average precision endpoints") {
    GtBox a{0, 0.3, 0.3, 0.2, 0.2}, b{0, 0.7, 0.7, 0.2, 0.2};
    std::vector<DetectionTarget> gts = {gt_of({a, b})};

    std::vector<Detection> perfect = {det(0, 0, a, 0.6), det(0, 0, b, 0.4)};
    CHECK(average_precision(perfect, gts, 0) == 1.0);
    CHECK(average_precision({}, gts, 0) == 0.0);

    // no ground truth for class 2
    CHECK(average_precision({}, gts, 2) == 1.0);
    CHECK(average_precision({det(0, 2, a, 0.9)}, gts, 2) == 0.0);
}

TEST_CASE("average precision hand fixture 0.8333") {
    GtBox a{0, 0.3, 0.3, 0.2, 0.2}, b{0, 0.7, 0.7, 0.2, 0.2};
    std::vector<DetectionTarget> gts = {gt_of({a, b})};
    GtBox far{0, 0.1, 0.9, 0.05, 0.05};  // overlaps nothing
    std::vector<Detection> dets = {det(0, 0, a, 0.9), det(0, 0, far, 0.8), det(0, 0, b, 0.7)};
    double ap = average_precision(dets, gts, 0);
    CHECK(ap == doctest::Approx(1.0 * 0.5 + (2.0 / 3.0) * 0.5).epsilon(1e-9));
    CHECK(ap == doctest::Approx(0.8333).epsilon(1e-4));
}

TEST_CASE("ap is invariant under monotone confidence transforms") {
    auto rng = make_rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<DetectionTarget> gts;
    std::vector<Detection> dets;
    for (int img = 0; img < 4; ++img) {
        DetectionTarget t;
        for (int k = 0; k < 3; ++k) {
            GtBox b{0, 0.15 + 0.3 * k, 0.2 + 0.18 * img, 0.12, 0.12};
            t.boxes.push_back(b);
            GtBox jitter = b;
            jitter.cx += (u(rng) - 0.5) * 0.02;
            jitter.cy += (u(rng) - 0.5) * 0.02;
            dets.push_back(det(img, 0, jitter, u(rng)));
        }
        // two false positives overlapping nothing
        dets.push_back(det(img, 0, GtBox{0, 0.9, 0.05, 0.04, 0.04}, u(rng)));
        dets.push_back(det(img, 0, GtBox{0, 0.05, 0.95, 0.04, 0.04}, u(rng)));
        gts.push_back(t);
    }
    double ap1 = average_precision(dets, gts, 0);
    for (auto& d : dets) d.conf = d.conf * d.conf * 0.5;  // strictly monotone
    double ap2 = average_precision(dets, gts, 0);
    CHECK(ap1 == doctest::Approx(ap2).epsilon(1e-12));
    CHECK(ap1 > 0.0);
    CHECK(ap1 < 1.0);
}

TEST_CASE("map is the unweighted mean of class aps") {
    GtBox a{0, 0.3, 0.3, 0.2, 0.2}, b{1, 0.7, 0.7, 0.2, 0.2};
    std::vector<DetectionTarget> gts = {gt_of({a, b})};
    std::vector<Detection> dets = {det(0, 0, a, 0.9)};  // class 0 found, class 1 missed
    double m = mean_average_precision(dets, gts);
    double expect = (average_precision(dets, gts, 0) + average_precision(dets, gts, 1) +
                     average_precision(dets, gts, 2)) /
                    3.0;
    CHECK(m == doctest::Approx(expect).epsilon(1e-12));
    CHECK(m == doctest::Approx((1.0 + 0.0 + 1.0) / 3.0).epsilon(1e-12));
}

TEST_CASE("tp/fp/fn curves: endpoints, conservation, monotonicity") {
    GtBox a{0, 0.3, 0.3, 0.2, 0.2}, b{1, 0.7, 0.7, 0.2, 0.2};
    std::vector<DetectionTarget> gts = {gt_of({a}), gt_of({b})};
    std::vector<Detection> dets = {det(0, 0, a, 0.6), det(1, 1, b, 0.3),
                                   det(1, 0, GtBox{0, 0.1, 0.1, 0.1, 0.1}, 0.2)};
    auto curves = tp_fp_fn_curves(dets, gts, default_thresholds());
    REQUIRE(curves.size() == 19);
    int prev_tp = 1 << 30, prev_fn = -1;
    for (const auto& p : curves) {
        CHECK(p.tp + p.fn == 2);
        CHECK(p.tp <= prev_tp);
        CHECK(p.fn >= prev_fn);
        prev_tp = p.tp;
        prev_fn = p.fn;
    }
    CHECK(curves.front().tp == 2);   // threshold 0.05 keeps everything
    CHECK(curves.front().fp == 1);
    CHECK(curves.back().tp == 0);    // 0.95 above every confidence
    CHECK(curves.back().fp == 0);
    CHECK(curves.back().fn == 2);
    CHECK_THROWS(tp_fp_fn_curves(dets, gts, {0.5, 0.1}));
}

TEST_CASE("psnr fixtures and oracle") {
    Image a = testing::random_image(6, 6, 7);
    CHECK(std::isinf(psnr(a, a)));

    Image z(4, 4), c(4, 4);
    for (auto& v : z.data) v = 0.6;
    for (auto& v : c.data) v = 0.5;
    CHECK(psnr(z, c) == doctest::Approx(20.0).epsilon(1e-9));

    Image r = testing::random_image(6, 6, 8);
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - r.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    CHECK(psnr(a, r) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-9));
    CHECK_THROWS(psnr(a, z));
}

TEST_CASE("nms keeps the best box per overlapping cluster, class-wise") {
    std::vector<Detection> dets = {
        {0, 0, 0.5, 0.5, 0.2, 0.2, 0.9},
        {0, 0, 0.52, 0.5, 0.2, 0.2, 0.7},   // overlaps the first, same class
        {0, 1, 0.52, 0.5, 0.2, 0.2, 0.6},   // overlaps but different class
        {0, 0, 0.85, 0.85, 0.1, 0.1, 0.5},  // disjoint
    };
    auto kept = nms(dets);
    REQUIRE(kept.size() == 3);
    CHECK(kept[0].conf == 0.9);
    CHECK(kept[1].cls == 1);
    CHECK(kept[2].conf == 0.5);
}

TEST_CASE("decoding a zero head output gives 0.5-confidence cells") {
    HeadConfig cfg{2, 3};
    Tensor out = Tensor::zeros({2, 2, 8});
    auto dets = decode_detections(cfg, out, 3);
    REQUIRE(dets.size() == 4);
    for (const auto& d : dets) {
        CHECK(d.image == 3);
        CHECK(d.conf == doctest::Approx(0.5));
        CHECK(d.w == doctest::Approx(0.25));
        CHECK(d.cls == 0);
    }
    CHECK(dets[0].cx == doctest::Approx(0.25));
    CHECK(dets[3].cy == doctest::Approx(0.75));
}

TEST_CASE("evaluate on a perfect-detection fixture reports map 1") {
    GtBox a{1, 0.3, 0.3, 0.2, 0.2};
    std::vector<DetectionTarget> gts = {gt_of({a})};
    std::vector<Detection> dets = {det(0, 1, a, 0.99)};
    EvalSummary s = evaluate(dets, gts, {20.0, 30.0});
    CHECK(s.map == 1.0);
    CHECK(s.ap[1] == 1.0);
    CHECK(s.psnr_mean == doctest::Approx(25.0));
    CHECK(s.curves.size() == 19);

    EvalSummary none = evaluate(dets, gts, {});
    CHECK(std::isnan(none.psnr_mean));
}

TEST_CASE("gate summary groups condition families and writes csv") {
    std::vector<std::string> conds = {"clear", "fog:3", "fog:7", "dark:2.5"};
    std::vector<Image> imgs(4, Image(2, 2));
    imgs[1].data[0] = 1.0;  // distinguish fog images
    imgs[2].data[0] = 0.5;
    auto gates = [](const Image& im) {
        return std::vector<double>{im.data[0], 1.0 - im.data[0]};
    };
    auto rows = gate_summary(conds, imgs, gates);
    REQUIRE(rows.size() == 3);  // clear, dark, fog (sorted)
    CHECK(rows[0].condition == "clear");
    CHECK(rows[0].mean_w[0] == doctest::Approx(0.0));
    CHECK(rows[1].condition == "dark");
    CHECK(rows[2].condition == "fog");
    CHECK(rows[2].mean_w[0] == doctest::Approx(0.75));
    CHECK(rows[2].mean_w[1] == doctest::Approx(0.25));

    auto path = (std::filesystem::temp_directory_path() / "gdip_gates_test.csv").string();
    write_gate_csv(path, {IpKind::Gamma, IpKind::Defog}, rows);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "condition,G,DF");
    std::filesystem::remove(path);
}
