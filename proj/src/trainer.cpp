#include "gdip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gdip/image_io.hpp"
#include "gdip/metrics.hpp"

namespace gdip {

void TrainConfig::validate() const {
    model.validate();
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (lr_min > lr_max) throw std::invalid_argument("train: lr_min must be <= lr_max");
    if (lr_min < 0.0) throw std::invalid_argument("train: learning rates must be >= 0");
    if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train: momentum in [0,1)");
    if (clip_norm < 0.0) throw std::invalid_argument("train: clip_norm must be >= 0");
    if (enh_lr_scale < 0.0) throw std::invalid_argument("train: enh_lr_scale must be >= 0");
    if (alpha < 0.0) throw std::invalid_argument("train: alpha must be >= 0");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("train: val_fraction in [0,1)");
}

namespace {

void apply_json_key(TrainConfig& cfg, const std::string& key, const nlohmann::json& v) {
    if (key == "variant")
        cfg.model.variant = parse_variant(v.get<std::string>());
    else if (key == "mode")
        cfg.model.mode = parse_gdip_mode(v.get<std::string>());
    else if (key == "image_size")
        cfg.model.image_size = v.get<int>();
    else if (key == "base_channels")
        cfg.model.base_channels = v.get<int>();
    else if (key == "embedding_dim")
        cfg.model.embedding_dim = v.get<int>();
    else if (key == "grid")
        cfg.model.grid = v.get<int>();
    else if (key == "reg_taps")
        cfg.model.reg_taps = v.get<std::vector<int>>();
    else if (key == "batch_size")
        cfg.batch_size = v.get<int>();
    else if (key == "epochs")
        cfg.epochs = v.get<int>();
    else if (key == "lr_min")
        cfg.lr_min = v.get<double>();
    else if (key == "lr_max")
        cfg.lr_max = v.get<double>();
    else if (key == "weight_decay")
        cfg.weight_decay = v.get<double>();
    else if (key == "momentum")
        cfg.momentum = v.get<double>();
    else if (key == "clip_norm")
        cfg.clip_norm = v.get<double>();
    else if (key == "enh_lr_scale")
        cfg.enh_lr_scale = v.get<double>();
    else if (key == "alpha")
        cfg.alpha = v.get<double>();
    else if (key == "val_fraction")
        cfg.val_fraction = v.get<double>();
    else if (key == "seed")
        cfg.seed = v.get<std::uint64_t>();
    else if (key == "data")
        cfg.data_dir = v.get<std::string>();
    else if (key == "out")
        cfg.out_dir = v.get<std::string>();
    else
        throw std::invalid_argument("train config: unknown key " + key);
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config parse error: " + std::string(e.what()));
    }
    TrainConfig cfg;
    for (auto it = j.begin(); it != j.end(); ++it) apply_json_key(cfg, it.key(), it.value());
    return cfg;
}

void apply_override(TrainConfig& cfg, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must be key=value: " + kv);
    std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    nlohmann::json v;
    if (key == "variant" || key == "mode" || key == "data" || key == "out") {
        v = val;
    } else {
        try {
            v = nlohmann::json::parse(val);
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument("cannot parse override value: " + kv);
        }
    }
    apply_json_key(cfg, key, v);
}

void save_train_config(const std::string& path, const TrainConfig& cfg) {
    nlohmann::json j;
    j["variant"] = variant_name(cfg.model.variant);
    j["mode"] = gdip_mode_name(cfg.model.mode);
    j["image_size"] = cfg.model.image_size;
    j["base_channels"] = cfg.model.base_channels;
    j["embedding_dim"] = cfg.model.embedding_dim;
    j["grid"] = cfg.model.grid;
    j["reg_taps"] = cfg.model.reg_taps;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["lr_min"] = cfg.lr_min;
    j["lr_max"] = cfg.lr_max;
    j["weight_decay"] = cfg.weight_decay;
    j["momentum"] = cfg.momentum;
    j["clip_norm"] = cfg.clip_norm;
    j["enh_lr_scale"] = cfg.enh_lr_scale;
    j["alpha"] = cfg.alpha;
    j["val_fraction"] = cfg.val_fraction;
    j["seed"] = cfg.seed;
    j["data"] = cfg.data_dir;
    j["out"] = cfg.out_dir;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config: " + path);
    out << j.dump(2) << '\n';
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_min, double lr_max) {
    if (total_steps == 0) throw std::invalid_argument("cosine_lr: total_steps must be > 0");
    if (step > total_steps) throw std::invalid_argument("cosine_lr: step out of range");
    double phase = std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps));
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + phase);
}

void sgd_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads, double lr,
              double weight_decay) {
    if (params.size() != grads.size()) throw std::invalid_argument("sgd_step: view mismatch");
    for (const auto& g : grads)
        if (!g.t->all_finite())
            throw std::invalid_argument("sgd_step: non-finite gradient in " + g.name);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].t;
        const Tensor& g = *grads[i].t;
        if (!p.same_shape(g)) throw std::invalid_argument("sgd_step: shape mismatch");
        double wd = params[i].bias ? 0.0 : weight_decay;
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * (g[k] + wd * p[k]);
    }
}

int worker_threads() {
    const char* env = std::getenv("GDIP_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return std::clamp(n, 1, 64);
}

namespace {

struct Sample {
    Image img;
    DetectionTarget target;
    Image clear;  // valid when paired
    bool paired = false;  // clear image exists and differs from img
    bool has_clear = false;
};

std::vector<Sample> load_samples(const std::vector<ManifestRow>& manifest) {
    std::vector<Sample> out;
    out.reserve(manifest.size());
    for (const auto& r : manifest) {
        Sample s;
        s.img = read_image(r.image);
        s.target = load_target(r.target);
        s.has_clear = !r.clear.empty();
        s.paired = s.has_clear && r.clear != r.image;
        if (s.paired)
            s.clear = read_image(r.clear);
        else if (s.has_clear)
            s.clear = s.img;
        out.push_back(std::move(s));
    }
    return out;
}

// Accumulate per-sample losses and gradients for a contiguous span of batch
// indices; grads must be zeroed by the caller.
void span_backward(const Model& m, const std::vector<Sample>& samples,
                   const std::vector<std::size_t>& batch, std::size_t begin, std::size_t end,
                   double alpha, ModelGrads& grads, LossBreakdown& sum) {
    for (std::size_t i = begin; i < end; ++i) {
        const Sample& s = samples[batch[i]];
        const Image* clear = s.has_clear ? &s.clear : nullptr;
        ModelCache cache;
        LossBreakdown lb = model_loss(m, s.img, clear, s.target, alpha, &cache);
        model_vjp(m, s.img, clear, s.target, alpha, cache, grads);
        sum.l_obj += lb.l_obj;
        sum.l_reg += lb.l_reg;
        sum.l_total += lb.l_total;
    }
}

void add_grads(const Model& m, ModelGrads& acc, ModelGrads& part) {
    auto a = grad_views(m, acc), p = grad_views(m, part);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < a[i].t->size(); ++k) (*a[i].t)[k] += (*p[i].t)[k];
}

struct ValReport {
    double map = 0;
    double psnr_mean = std::numeric_limits<double>::quiet_NaN();
};

ValReport validate_model(const Model& m, const std::vector<Sample>& samples,
                         const std::vector<std::size_t>& val_idx) {
    std::vector<Detection> dets;
    std::vector<DetectionTarget> gts;
    std::vector<double> psnrs;
    for (std::size_t i = 0; i < val_idx.size(); ++i) {
        const Sample& s = samples[val_idx[i]];
        Tensor out = model_detect(m, s.img);
        auto d = decode_detections(m.det.head.cfg, out, static_cast<int>(i));
        dets.insert(dets.end(), d.begin(), d.end());
        gts.push_back(s.target);
        if (s.paired) {
            Image restored = m.has_enhancer() ? model_enhance(m, s.img) : s.img;
            psnrs.push_back(psnr(restored, s.clear));
        }
    }
    ValReport r;
    r.map = mean_average_precision(dets, gts);
    if (!psnrs.empty())
        r.psnr_mean = std::accumulate(psnrs.begin(), psnrs.end(), 0.0) /
                      static_cast<double>(psnrs.size());
    return r;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace

void write_train_log(const std::string& path, const std::vector<EpochRow>& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write log: " + path);
    out << "epoch,step,lr,l_obj,l_reg,l_total,val_map,val_psnr\n";
    for (const auto& r : log)
        out << r.epoch << ',' << r.step << ',' << fmt(r.lr) << ',' << fmt(r.l_obj) << ','
            << fmt(r.l_reg) << ',' << fmt(r.l_total) << ',' << fmt(r.val_map) << ','
            << fmt(r.val_psnr) << '\n';
}

TrainResult train(const TrainConfig& cfg, const std::vector<ManifestRow>& manifest) {
    cfg.validate();
    if (manifest.empty()) throw std::invalid_argument("train: empty manifest");
    bool needs_pairs = cfg.model.variant == Variant::Regularizer && cfg.alpha != 0.0;
    if (needs_pairs)
        for (const auto& r : manifest)
            if (r.clear.empty())
                throw std::invalid_argument("train: regularizer variant needs paired clear images");

    std::vector<Sample> samples = load_samples(manifest);
    double eff_alpha = cfg.model.variant == Variant::Regularizer ? cfg.alpha : 0.0;

    auto rng = make_rng(cfg.seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto n_val = static_cast<std::size_t>(
        std::lround(cfg.val_fraction * static_cast<double>(samples.size())));
    if (cfg.val_fraction > 0.0 && n_val == 0 && samples.size() > 1) n_val = 1;
    if (n_val >= samples.size()) n_val = samples.size() - 1;
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());

    Model model = make_model(cfg.model, cfg.seed);
    auto params = param_views(model);
    ModelGrads grads = make_model_grads(model);
    auto gviews = grad_views(model, grads);

    std::size_t steps_per_epoch = (train_idx.size() + cfg.batch_size - 1) / cfg.batch_size;
    std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);

    // momentum velocity buffers (all-zero when momentum = 0)
    std::vector<Tensor> vel;
    for (const auto& p : params) vel.push_back(Tensor::zeros(p.t->shape));

    std::filesystem::create_directories(cfg.out_dir);
    TrainResult res;
    res.best_ckpt = cfg.out_dir + "/best.ckpt";
    res.final_ckpt = cfg.out_dir + "/final.ckpt";
    double best_map = -1.0;
    std::size_t step = 0;
    int threads = worker_threads();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        LossBreakdown epoch_sum;
        double last_lr = 0.0;
        for (std::size_t off = 0; off < train_idx.size(); off += cfg.batch_size) {
            std::size_t bn = std::min<std::size_t>(cfg.batch_size, train_idx.size() - off);
            std::vector<std::size_t> batch(train_idx.begin() + static_cast<long>(off),
                                           train_idx.begin() + static_cast<long>(off + bn));
            zero_grads(model, grads);
            LossBreakdown bsum;
            int nt = static_cast<int>(std::min<std::size_t>(threads, bn));
            if (nt <= 1) {
                span_backward(model, samples, batch, 0, bn, eff_alpha, grads, bsum);
            } else {
                std::vector<ModelGrads> partial;
                std::vector<LossBreakdown> psum(nt);
                partial.reserve(nt);
                for (int t = 0; t < nt; ++t) partial.push_back(make_model_grads(model));
                std::vector<std::thread> pool;
                for (int t = 0; t < nt; ++t) {
                    std::size_t b = bn * t / nt, e = bn * (t + 1) / nt;
                    pool.emplace_back([&, t, b, e] {
                        span_backward(model, samples, batch, b, e, eff_alpha, partial[t],
                                      psum[t]);
                    });
                }
                for (auto& th : pool) th.join();
                for (int t = 0; t < nt; ++t) {  // fixed merge order
                    add_grads(model, grads, partial[t]);
                    bsum.l_obj += psum[t].l_obj;
                    bsum.l_reg += psum[t].l_reg;
                    bsum.l_total += psum[t].l_total;
                }
            }
            double inv = 1.0 / static_cast<double>(bn);
            for (auto& g : gviews)
                for (auto& v : g.t->data) v *= inv;
            if (cfg.enh_lr_scale != 1.0) {
                for (auto& g : gviews)
                    if (g.name.rfind("enh.", 0) == 0)
                        for (auto& v : g.t->data) v *= cfg.enh_lr_scale;
            }
            if (cfg.clip_norm > 0.0) {
                double sq = 0.0;
                for (const auto& g : gviews)
                    for (double v : g.t->data) sq += v * v;
                double norm = std::sqrt(sq);
                if (norm > cfg.clip_norm) {
                    double scale = cfg.clip_norm / norm;
                    for (auto& g : gviews)
                        for (auto& v : g.t->data) v *= scale;
                }
            }
            if (cfg.momentum > 0.0) {
                for (std::size_t i = 0; i < gviews.size(); ++i) {
                    Tensor& g = *gviews[i].t;
                    for (std::size_t k = 0; k < g.size(); ++k) {
                        vel[i][k] = cfg.momentum * vel[i][k] + g[k];
                        g[k] = vel[i][k];
                    }
                }
            }
            last_lr = cosine_lr(step, total_steps, cfg.lr_min, cfg.lr_max);
            try {
                sgd_step(params, gviews, last_lr, cfg.weight_decay);
            } catch (const std::invalid_argument& e) {
                ++res.rejected_steps;
                std::cerr << "step " << step << " rejected: " << e.what() << '\n';
            }
            ++step;
            epoch_sum.l_obj += bsum.l_obj;
            epoch_sum.l_reg += bsum.l_reg;
            epoch_sum.l_total += bsum.l_total;
        }

        ValReport val = validate_model(model, samples, val_idx);
        double inv_n = train_idx.empty() ? 0.0 : 1.0 / static_cast<double>(train_idx.size());
        EpochRow row;
        row.epoch = epoch;
        row.step = step;
        row.lr = last_lr;
        row.l_obj = epoch_sum.l_obj * inv_n;
        row.l_reg = epoch_sum.l_reg * inv_n;
        row.l_total = epoch_sum.l_total * inv_n;
        row.val_map = val.map;
        row.val_psnr = val.psnr_mean;
        res.log.push_back(row);
        if (val.map > best_map) {
            best_map = val.map;
            save_checkpoint(res.best_ckpt, model);
        }
    }

    res.best_val_map = best_map;
    save_checkpoint(res.final_ckpt, model);

    double final_loss = 0.0;
    for (std::size_t i : train_idx) {
        const Sample& s = samples[i];
        const Image* clear = s.has_clear ? &s.clear : nullptr;
        final_loss += model_loss(model, s.img, clear, s.target, eff_alpha).l_total;
    }
    res.final_train_loss =
        train_idx.empty() ? 0.0 : final_loss / static_cast<double>(train_idx.size());

    write_train_log(cfg.out_dir + "/log.csv", res.log);
    save_train_config(cfg.out_dir + "/config.json", cfg);
    return res;
}

}  // namespace gdip
