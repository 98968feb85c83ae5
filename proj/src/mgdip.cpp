#include "gdip/mgdip.hpp"

#include <stdexcept>

namespace gdip {

GdipChain make_chain(const GdipConfig& block_cfg, const EncoderConfig& enc_cfg,
                     std::vector<int> tap_indices, std::mt19937_64& rng) {
    block_cfg.validate();
    GdipChain chain;
    chain.block_cfg = block_cfg;
    chain.tap_indices = std::move(tap_indices);
    for (int tap : chain.tap_indices) {
        if (tap < 0 || tap >= enc_cfg.num_layers)
            throw std::invalid_argument("make_chain: tap index out of range");
        int ch = enc_cfg.out_channels(tap);
        Tensor w = Tensor::zeros({static_cast<std::size_t>(block_cfg.embedding_dim),
                                  static_cast<std::size_t>(ch)});
        double bound = std::sqrt(6.0 / ch);
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : w.data) v = dist(rng);
        chain.proj_w.push_back(std::move(w));
        chain.proj_b.push_back(Tensor::zeros({static_cast<std::size_t>(block_cfg.embedding_dim)}));
        chain.blocks.push_back(make_gbs(block_cfg, rng));
    }
    return chain;
}

namespace {

std::vector<double> gap_chw(const Tensor& t) {
    int ch = static_cast<int>(t.shape[0]);
    std::size_t plane = t.shape[1] * t.shape[2];
    std::vector<double> out(ch, 0.0);
    for (int c = 0; c < ch; ++c) {
        const double* p = t.data.data() + c * plane;
        double acc = 0.0;
        for (std::size_t k = 0; k < plane; ++k) acc += p[k];
        out[c] = acc / static_cast<double>(plane);
    }
    return out;
}

}  // namespace

Image chain_forward(const GdipChain& chain, const std::vector<Tensor>& taps, const Image& x0,
                    std::vector<GateReport>* reports, ChainCache* cache) {
    ChainCache local;
    ChainCache& c = cache ? *cache : local;
    c.levels.clear();
    c.levels.resize(chain.levels());
    if (reports) reports->clear();

    Image x = x0;
    for (std::size_t l = 0; l < chain.levels(); ++l) {
        auto& lv = c.levels[l];
        lv.input = x;
        const Tensor& tap = taps.at(chain.tap_indices[l]);
        lv.gap = gap_chw(tap);
        int embed = chain.block_cfg.embedding_dim;
        int ch = static_cast<int>(lv.gap.size());
        lv.embedding.assign(embed, 0.0);
        for (int i = 0; i < embed; ++i) {
            double acc = chain.proj_b[l][i];
            const double* row = chain.proj_w[l].data.data() + static_cast<std::size_t>(i) * ch;
            for (int j = 0; j < ch; ++j) acc += row[j] * lv.gap[j];
            lv.embedding[i] = acc;
        }
        GateReport rep;
        x = gdip_forward(chain.block_cfg, chain.blocks[l], x, lv.embedding,
                         reports ? &rep : nullptr, &lv.gdip);
        if (reports) reports->push_back(std::move(rep));
    }
    return x;
}

ChainGrads make_chain_grads(const GdipChain& chain) {
    ChainGrads g;
    for (std::size_t l = 0; l < chain.levels(); ++l) {
        g.proj_w.push_back(Tensor::zeros(chain.proj_w[l].shape));
        g.proj_b.push_back(Tensor::zeros(chain.proj_b[l].shape));
        std::vector<GbGrads> bg;
        for (const auto& gb : chain.blocks[l])
            bg.push_back({Tensor::zeros(gb.w.shape), Tensor::zeros(gb.b.shape)});
        g.blocks.push_back(std::move(bg));
    }
    return g;
}

void chain_vjp(const GdipChain& chain, const std::vector<Tensor>& taps, const ChainCache& cache,
               const std::vector<double>& g_z, std::vector<double>& g_x0,
               std::vector<std::vector<double>>& g_taps, ChainGrads& grads) {
    if (g_taps.size() < taps.size()) g_taps.resize(taps.size());
    std::vector<double> g = g_z;
    for (int l = static_cast<int>(chain.levels()) - 1; l >= 0; --l) {
        const auto& lv = cache.levels[l];
        std::vector<double> g_x(lv.input.data.size(), 0.0);
        std::vector<double> g_e(lv.embedding.size(), 0.0);
        gdip_vjp(chain.block_cfg, chain.blocks[l], lv.input, lv.embedding, lv.gdip, g, g_x, g_e,
                 grads.blocks[l]);

        // projection backward
        int ch = static_cast<int>(lv.gap.size());
        std::vector<double> g_gap(ch, 0.0);
        for (std::size_t i = 0; i < g_e.size(); ++i) {
            double ge = g_e[i];
            if (ge == 0.0) continue;
            grads.proj_b[l][i] += ge;
            double* wrow = grads.proj_w[l].data.data() + i * ch;
            const double* prow = chain.proj_w[l].data.data() + i * ch;
            for (int j = 0; j < ch; ++j) {
                wrow[j] += ge * lv.gap[j];
                g_gap[j] += ge * prow[j];
            }
        }
        const Tensor& tap = taps[chain.tap_indices[l]];
        std::size_t plane = tap.shape[1] * tap.shape[2];
        auto& gt = g_taps[chain.tap_indices[l]];
        if (gt.empty()) gt.assign(tap.size(), 0.0);
        double inv = 1.0 / static_cast<double>(plane);
        for (int c = 0; c < ch; ++c) {
            double gv = g_gap[c] * inv;
            if (gv == 0.0) continue;
            double* p = gt.data() + c * plane;
            for (std::size_t k = 0; k < plane; ++k) p[k] += gv;
        }
        g = std::move(g_x);
    }
    if (g_x0.size() != g.size()) g_x0.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) g_x0[i] += g[i];
}

MgdipModel make_mgdip(const EncoderConfig& enc_cfg, const GdipConfig& block_cfg,
                      std::mt19937_64& rng, std::vector<int> tap_indices) {
    MgdipModel m;
    m.enc_cfg = enc_cfg;
    m.enc = make_encoder(enc_cfg, rng);
    m.chain = make_chain(block_cfg, enc_cfg, std::move(tap_indices), rng);
    return m;
}

Image mgdip_forward(const MgdipModel& m, const Image& img, std::vector<GateReport>* reports,
                    MgdipCache* cache) {
    MgdipCache local;
    MgdipCache& c = cache ? *cache : local;
    EncoderTaps taps = encoder_forward(m.enc_cfg, m.enc, img, &c.enc, false);
    c.taps = taps.taps;
    return chain_forward(m.chain, c.taps, img, reports, &c.chain);
}

MgdipGrads make_mgdip_grads(const MgdipModel& m) {
    return {make_encoder_grads(m.enc), make_chain_grads(m.chain)};
}

void mgdip_vjp(const MgdipModel& m, const Image& img, const MgdipCache& cache,
               const std::vector<double>& g_z, std::vector<double>& g_img, MgdipGrads& grads) {
    std::vector<std::vector<double>> g_taps;
    if (g_img.size() != img.data.size()) g_img.assign(img.data.size(), 0.0);
    chain_vjp(m.chain, cache.taps, cache.chain, g_z, g_img, g_taps, grads.chain);
    encoder_vjp(m.enc_cfg, m.enc, cache.enc, g_taps, {}, g_img, grads.enc);
}

}  // namespace gdip
