#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>

#include "gdip/datagen.hpp"
#include "gdip/gradcheck_suite.hpp"
#include "gdip/image_io.hpp"
#include "gdip/metrics.hpp"
#include "gdip/model.hpp"
#include "gdip/trainer.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using namespace gdip;

int cmd_gen_data(const std::string& out, int count, const std::string& condition,
                 std::uint64_t seed, int size) {
    auto rows = generate_dataset(out, count, condition, seed, size);
    std::cout << "wrote " << rows.size() << " samples to " << out << '\n';
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides) {
    TrainConfig cfg = load_train_config(config_path);
    for (const auto& kv : overrides) apply_override(cfg, kv);
    cfg.validate();
    auto manifest = load_manifest(cfg.data_dir + "/manifest.csv");
    TrainResult res = train(cfg, manifest);
    {
        std::ofstream meta(cfg.out_dir + "/meta.txt");
        meta << "version " << kVersion << '\n'
             << "variant " << variant_name(cfg.model.variant) << '\n'
             << "mode " << gdip_mode_name(cfg.model.mode) << '\n'
             << "seed " << cfg.seed << '\n'
             << "data " << cfg.data_dir << '\n';
    }
    std::cout << "epochs " << res.log.size() << " best_val_map " << res.best_val_map
              << " final_train_loss " << res.final_train_loss << '\n';
    if (res.rejected_steps > 0)
        std::cerr << "warning: " << res.rejected_steps << " rejected steps\n";
    return 0;
}

int cmd_enhance(const std::string& ckpt, const std::string& in, const std::string& out,
                const std::string& gates_csv) {
    Model m = load_checkpoint(ckpt);
    Image img = read_image(in);
    std::vector<GateReport> reports;
    Image enhanced = model_enhance(m, img, &reports);
    write_image(enhanced, out);
    if (!gates_csv.empty()) {
        std::ofstream g(gates_csv);
        if (!g) throw std::runtime_error("cannot write gates csv: " + gates_csv);
        const auto& ops = m.enh.chain.block_cfg.ops;
        for (std::size_t i = 0; i < ops.size(); ++i) g << (i ? "," : "") << kind_tag(ops[i]);
        g << '\n';
        const auto& w = reports.front().weights;
        for (std::size_t i = 0; i < w.size(); ++i) g << (i ? "," : "") << w[i];
        g << '\n';
    }
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& out_csv) {
    Model m = load_checkpoint(ckpt);
    auto manifest = load_manifest(data + "/manifest.csv");
    std::vector<Detection> dets;
    std::vector<DetectionTarget> gts;
    std::vector<double> psnrs;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& row = manifest[i];
        Image img = read_image(row.image);
        Tensor head_out = model_detect(m, img);
        auto d = decode_detections(m.det.head.cfg, head_out, static_cast<int>(i));
        dets.insert(dets.end(), d.begin(), d.end());
        gts.push_back(load_target(row.target));
        if (!row.clear.empty() && row.clear != row.image) {
            Image clear = read_image(row.clear);
            Image restored = m.has_enhancer() ? model_enhance(m, img) : img;
            psnrs.push_back(psnr(restored, clear));
        }
    }
    EvalSummary s = evaluate(dets, gts, psnrs);
    write_eval_csv(out_csv, s);
    std::cout << "map " << s.map << " psnr_mean " << s.psnr_mean << '\n';
    return 0;
}

int cmd_gradcheck(const std::string& scope) {
    auto entries = run_gradcheck_suite(scope);
    for (const auto& e : entries)
        std::cout << (e.report.pass ? "pass" : "FAIL") << "  " << e.name << "  max_rel_err "
                  << e.report.max_rel_error << '\n';
    return suite_passed(entries) ? 0 : 1;
}

int cmd_gates(const std::string& ckpt, const std::string& data, const std::string& out_csv) {
    Model m = load_checkpoint(ckpt);
    auto manifest = load_manifest(data + "/manifest.csv");
    std::vector<std::string> conditions;
    std::vector<Image> images;
    for (const auto& row : manifest) {
        conditions.push_back(row.condition);
        images.push_back(read_image(row.image));
    }
    auto rows = gate_summary(conditions, images,
                             [&](const Image& img) { return model_gates(m, img); });
    write_gate_csv(out_csv, m.enh.chain.block_cfg.ops, rows);
    std::cout << "wrote gate summary for " << rows.size() << " condition groups\n";
    return 0;
}

int cmd_bench(const std::string& ckpt, int iters) {
    Model m = load_checkpoint(ckpt);
    int s = m.cfg.image_size;
    auto rng = make_rng(42);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    std::vector<double> d(static_cast<std::size_t>(s) * s * 3);
    for (auto& v : d) v = dist(rng);
    Image img = Image::from_data(s, s, std::move(d));

    for (int i = 0; i < 10; ++i) model_detect(m, img);
    std::vector<double> ms(iters);
    for (int i = 0; i < iters; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        model_detect(m, img);
        auto t1 = std::chrono::steady_clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / iters;
    double var = 0.0;
    for (double v : ms) var += (v - mean) * (v - mean);
    double std_ms = iters > 1 ? std::sqrt(var / (iters - 1)) : 0.0;
    std::cout << "mean_ms=" << mean << " std_ms=" << std_ms << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gated differentiable image processing"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    std::string gen_out = "data";
    int gen_count = 100, gen_size = 96;
    std::string gen_condition = "mixed";
    std::uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--count", gen_count, "number of samples")->required();
    gen->add_option("--condition", gen_condition, "clear|fog|dark|mixed");
    gen->add_option("--seed", gen_seed, "rng seed");
    gen->add_option("--size", gen_size, "image side length");

    auto* tr = app.add_subcommand("train", "train a model");
    std::string tr_config;
    std::vector<std::string> tr_overrides;
    tr->add_option("--config", tr_config, "json config file")->required();
    tr->add_option("--override", tr_overrides, "key=value overrides");

    auto* enh = app.add_subcommand("enhance", "enhance an image with a gdip/mgdip checkpoint");
    std::string enh_ckpt, enh_in, enh_out, enh_gates;
    enh->add_option("--ckpt", enh_ckpt)->required();
    enh->add_option("--in", enh_in)->required();
    enh->add_option("--out", enh_out)->required();
    enh->add_option("--gates", enh_gates, "write first-level gate weights as csv");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_out;
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--out", ev_out)->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_scope = "all";
    gc->add_option("--scope", gc_scope, "ops|gdip|encoder|mgdip|losses|all");

    auto* ga = app.add_subcommand("gates", "per-condition mean gate activations");
    std::string ga_ckpt, ga_data, ga_out;
    ga->add_option("--ckpt", ga_ckpt)->required();
    ga->add_option("--data", ga_data)->required();
    ga->add_option("--out", ga_out)->required();

    auto* be = app.add_subcommand("bench", "per-image detection latency");
    std::string be_ckpt;
    int be_iters = 100;
    be->add_option("--ckpt", be_ckpt)->required();
    be->add_option("--iters", be_iters, "timed iterations after 10 warmup");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // usage/config errors
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_out, gen_count, gen_condition, gen_seed,
                                               gen_size);
        if (tr->parsed()) return cmd_train(tr_config, tr_overrides);
        if (enh->parsed()) return cmd_enhance(enh_ckpt, enh_in, enh_out, enh_gates);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_out);
        if (gc->parsed()) return cmd_gradcheck(gc_scope);
        if (ga->parsed()) return cmd_gates(ga_ckpt, ga_data, ga_out);
        if (be->parsed()) return cmd_bench(be_ckpt, be_iters);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
