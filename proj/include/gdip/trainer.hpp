#pragma once

#include <string>
#include <vector>

#include "gdip/datagen.hpp"
#include "gdip/model.hpp"

namespace gdip {

struct TrainConfig {
    ModelConfig model;
    int batch_size = 4;
    int epochs = 10;
    double lr_min = 1e-6;
    double lr_max = 1e-4;
    double weight_decay = 5e-4;
    double momentum = 0.0;
    double clip_norm = 10.0;      // global gradient-norm clip, 0 disables
    double enh_lr_scale = 1.0;    // gradient scale for the enhancement group
    double alpha = kDefaultAlpha;
    double val_fraction = 0.2;
    std::uint64_t seed = 1;
    std::string data_dir;
    std::string out_dir = "run";

    void validate() const;
};

TrainConfig load_train_config(const std::string& path);
// Flat "key=value" override, e.g. "variant=gdip" or "lr_max=5e-5".
void apply_override(TrainConfig& cfg, const std::string& kv);
void save_train_config(const std::string& path, const TrainConfig& cfg);

// lr = lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total)) / 2
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_min, double lr_max);

// p <- p - lr * (g + wd * p), weight decay skipped for biases. Throws on a
// non-finite gradient (the caller rejects the whole step).
void sgd_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads, double lr,
              double weight_decay);

struct EpochRow {
    int epoch = 0;
    std::size_t step = 0;  // global optimizer step count at epoch end
    double lr = 0, l_obj = 0, l_reg = 0, l_total = 0, val_map = 0, val_psnr = 0;
};

struct TrainResult {
    std::vector<EpochRow> log;
    double best_val_map = 0;
    double final_train_loss = 0;  // l_total of the final parameters on the train split
    std::string best_ckpt;
    std::string final_ckpt;
    std::size_t rejected_steps = 0;
};

// Worker-thread cap for batch-parallel gradients (from GDIP_THREADS, >= 1).
int worker_threads();

TrainResult train(const TrainConfig& cfg, const std::vector<ManifestRow>& manifest);

void write_train_log(const std::string& path, const std::vector<EpochRow>& log);

}  // namespace gdip
