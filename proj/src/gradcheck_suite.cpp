#include "gdip/gradcheck_suite.hpp"

#include <algorithm>
#include <stdexcept>

#include "gdip/testing.hpp"

namespace gdip {

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;

void check_ops(std::vector<SuiteEntry>& out) {
    Image img = testing::random_image(8, 8, 101, 0.08, 0.92);
    Tensor input = img.to_tensor();
    auto rng = make_rng(102);
    std::uniform_real_distribution<double> raw(-0.8, 0.8);
    for (IpKind k : kAllIpKinds) {
        std::vector<double> r(param_count(k));
        for (auto& v : r) v = raw(rng);
        Tensor params({r.size()}, map_raw_params(k, r).value);
        testing::IpOpDiff op(k, 8, 8);
        out.push_back({"op/" + kind_name(k), grad_check(op, input, params, kStep, kTol)});
    }
    out.push_back({"gate", grad_check(testing::GateDiff{}, Tensor({1}, {0.3}), Tensor({0}, {}),
                                      kStep, kTol)});
    Tensor t({48}, testing::random_vec(48, 103, 0.0, 1.0));
    out.push_back(
        {"normalize_minmax", grad_check(testing::NormalizeDiff{}, t, Tensor({0}, {}), kStep, kTol)});
}

void check_gdip(std::vector<SuiteEntry>& out) {
    GdipConfig cfg;
    cfg.mode = GdipMode::Full;
    cfg.embedding_dim = 8;
    auto rng = make_rng(104);
    testing::GdipDiff op(cfg, make_gbs(cfg, rng), 8, 8);
    Tensor input = testing::random_image(8, 8, 105, 0.08, 0.92).to_tensor();
    Tensor params = op.pack(testing::random_vec(8, 106, -0.5, 0.5));
    out.push_back({"gdip/full", grad_check(op, input, params, kStep, kTol)});
}

void check_encoder(std::vector<SuiteEntry>& out) {
    EncoderConfig cfg{12, 2, 5, 4};
    auto rng = make_rng(107);
    testing::EncoderDiff op(cfg, make_encoder(cfg, rng));
    Tensor input = testing::random_image(12, 12, 108, 0.08, 0.92).to_tensor();
    out.push_back({"encoder", grad_check(op, input, op.pack(), kStep, kTol)});
}

void check_mgdip(std::vector<SuiteEntry>& out) {
    EncoderConfig cfg{12, 2, 5, 4};
    GdipConfig block;
    block.mode = GdipMode::Full;
    block.embedding_dim = 8;
    auto rng = make_rng(109);
    testing::MgdipDiff op(make_mgdip(cfg, block, rng, {0, 1}));  // 2-level desk config
    Tensor input = testing::random_image(12, 12, 110, 0.08, 0.92).to_tensor();
    out.push_back({"mgdip/2-level", grad_check(op, input, op.pack(), kStep, kTol)});
}

void check_losses(std::vector<SuiteEntry>& out) {
    // detection loss wrt raw head output
    HeadConfig hcfg{2, kNumClasses};
    Tensor head_out({2, 2, 8}, testing::random_vec(2 * 2 * 8, 111, -1.5, 1.5));
    DetectionTarget target;
    target.boxes.push_back({1, 0.3, 0.6, 0.2, 0.25});
    target.boxes.push_back({0, 0.8, 0.2, 0.3, 0.3});
    {
        Tensor g = Tensor::zeros(head_out.shape);
        loss_obj_vjp(hcfg, head_out, target, 1.0, g);
        auto eval = [&] { return loss_obj(hcfg, head_out, target); };
        out.push_back({"loss/obj", grad_check_scalar(eval, head_out.data.data(), head_out.size(),
                                                     g.data.data(), kStep, kTol)});
    }
    // reconstruction loss wrt the reconstruction
    {
        Image z = testing::random_image(6, 6, 112);
        Image clear = testing::random_image(6, 6, 113);
        std::vector<double> g;
        loss_rec_vjp(z, clear, 0.7, 1.3, g);
        auto eval = [&] {
            double l1, mse;
            loss_rec(z, clear, l1, mse);
            return 0.7 * l1 + 1.3 * mse;
        };
        out.push_back({"loss/rec", grad_check_scalar(eval, z.data.data(), z.data.size(), g.data(),
                                                     kStep, kTol)});
    }
    // detection head (pooling + 1x1 conv)
    {
        auto rng = make_rng(114);
        HeadConfig cfg{2, kNumClasses};
        testing::HeadDiff op(make_head(cfg, 6, rng), {6, 5, 5});
        Tensor input({6 * 5 * 5}, testing::random_vec(6 * 5 * 5, 115, -1.0, 1.0));
        out.push_back({"loss/head", grad_check(op, input, op.pack(), kStep, kTol)});
    }
    // combined regularizer-variant objective
    {
        EncoderConfig cfg{12, 2, 5, 4};
        GdipConfig block;
        block.embedding_dim = 8;
        auto rng = make_rng(116);
        RegularizerModel m = make_regularizer(cfg, {1, kNumClasses}, block, rng, {1, 3});
        Image clear = testing::random_image(12, 12, 117);
        clear.data[0] = 0.0;
        clear.data[1] = 1.0;  // full-range reconstruction target
        DetectionTarget t;
        t.boxes.push_back({2, 0.5, 0.5, 0.4, 0.4});
        testing::RegLossDiff op(m, clear, t, 0.05);
        Tensor input = testing::random_image(12, 12, 118, 0.08, 0.92).to_tensor();
        out.push_back({"loss/regularizer_total", grad_check(op, input, op.pack(), kStep, kTol)});
    }
}

}  // namespace

std::vector<std::string> gradcheck_scopes() {
    return {"ops", "gdip", "encoder", "mgdip", "losses", "all"};
}

std::vector<SuiteEntry> run_gradcheck_suite(const std::string& scope) {
    auto scopes = gradcheck_scopes();
    if (std::find(scopes.begin(), scopes.end(), scope) == scopes.end())
        throw std::invalid_argument("gradcheck: unknown scope " + scope);
    bool all = scope == "all";
    std::vector<SuiteEntry> out;
    if (all || scope == "ops") check_ops(out);
    if (all || scope == "gdip") check_gdip(out);
    if (all || scope == "encoder") check_encoder(out);
    if (all || scope == "mgdip") check_mgdip(out);
    if (all || scope == "losses") check_losses(out);
    return out;
}

bool suite_passed(const std::vector<SuiteEntry>& entries) {
    if (entries.empty()) return false;
    for (const auto& e : entries)
        if (!e.report.pass) return false;
    return true;
}

}  // namespace gdip
