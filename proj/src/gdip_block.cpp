#include "gdip/gdip_block.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace gdip {

GdipMode parse_gdip_mode(const std::string& s) {
    if (s == "Full" || s == "full") return GdipMode::Full;
    if (s == "Max" || s == "max") return GdipMode::Max;
    if (s == "Unnormalized" || s == "unnormalized") return GdipMode::Unnormalized;
    if (s == "NoGates" || s == "nogates" || s == "no-gates") return GdipMode::NoGates;
    throw std::invalid_argument("unknown GDIP mode: " + s);
}

std::string gdip_mode_name(GdipMode m) {
    switch (m) {
        case GdipMode::Full: return "Full";
        case GdipMode::Max: return "Max";
        case GdipMode::Unnormalized: return "Unnormalized";
        case GdipMode::NoGates: return "NoGates";
    }
    throw std::invalid_argument("unknown GDIP mode");
}

void GdipConfig::validate() const {
    if (ops.empty()) throw std::invalid_argument("GdipConfig: op list must be non-empty");
    std::set<IpKind> seen(ops.begin(), ops.end());
    if (seen.size() != ops.size())
        throw std::invalid_argument("GdipConfig: duplicate ops not allowed");
    if (embedding_dim < 1) throw std::invalid_argument("GdipConfig: embedding_dim must be >= 1");
}

GbModule make_gb(IpKind kind, int embedding_dim, std::mt19937_64& rng) {
    int out = param_count(kind) + 1;
    GbModule gb;
    gb.kind = kind;
    gb.w = Tensor::zeros({static_cast<std::size_t>(out), static_cast<std::size_t>(embedding_dim)});
    gb.b = Tensor::zeros({static_cast<std::size_t>(out)});
    std::uniform_real_distribution<double> dist(-0.01, 0.01);
    for (auto& v : gb.w.data) v = dist(rng);
    return gb;
}

std::vector<GbModule> make_gbs(const GdipConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    std::vector<GbModule> gbs;
    gbs.reserve(cfg.ops.size());
    for (IpKind k : cfg.ops) gbs.push_back(make_gb(k, cfg.embedding_dim, rng));
    return gbs;
}

namespace {

std::vector<double> linear_forward(const GbModule& gb, const std::vector<double>& e) {
    std::size_t out = gb.b.size(), in = gb.w.shape[1];
    if (e.size() != in) throw std::invalid_argument("gb_forward: embedding length mismatch");
    std::vector<double> raw(out);
    for (std::size_t i = 0; i < out; ++i) {
        double acc = gb.b[i];
        const double* row = gb.w.data.data() + i * in;
        for (std::size_t j = 0; j < in; ++j) acc += row[j] * e[j];
        raw[i] = acc;
    }
    return raw;
}

}  // namespace

GbForward gb_forward(const GbModule& gb, const Image& img, const std::vector<double>& embedding) {
    std::vector<double> raw = linear_forward(gb, embedding);
    int pc = param_count(gb.kind);
    std::vector<double> praw(raw.begin(), raw.begin() + pc);
    MappedParams mapped = map_raw_params(gb.kind, praw);
    Image enhanced = normalize_minmax(apply_ip_op(gb.kind, img, mapped.value));
    return {std::move(enhanced), gate(raw[pc]), std::move(raw)};
}

Image gdip_forward(const GdipConfig& cfg, const std::vector<GbModule>& gbs, const Image& img,
                   const std::vector<double>& embedding, GateReport* report, GdipCache* cache) {
    cfg.validate();
    if (gbs.size() != cfg.ops.size())
        throw std::invalid_argument("gdip_forward: gb list does not match config ops");

    const std::size_t n = img.data.size();
    GdipCache local;
    GdipCache& c = cache ? *cache : local;
    c.branches.clear();
    c.branches.resize(gbs.size());

    for (std::size_t i = 0; i < gbs.size(); ++i) {
        const GbModule& gb = gbs[i];
        if (gb.kind != cfg.ops[i])
            throw std::invalid_argument("gdip_forward: gb kind does not match config op");
        auto& br = c.branches[i];
        br.raw = linear_forward(gb, embedding);
        int pc = param_count(gb.kind);
        std::vector<double> praw(br.raw.begin(), br.raw.begin() + pc);
        br.mapped = map_raw_params(gb.kind, praw);
        br.op_out = apply_ip_op(gb.kind, img, br.mapped.value);
        br.gate_s = br.raw[pc];
        br.w = gate(br.gate_s);
        if (cfg.mode == GdipMode::Unnormalized) {
            br.inner = br.op_out.data;
        } else {
            br.inner = normalize_minmax(br.op_out.to_tensor()).data;
        }
    }

    c.argmax = 0;
    for (std::size_t i = 1; i < c.branches.size(); ++i)
        if (c.branches[i].w > c.branches[c.argmax].w) c.argmax = i;

    Tensor s = Tensor::zeros({static_cast<std::size_t>(img.height),
                              static_cast<std::size_t>(img.width), 3});
    switch (cfg.mode) {
        case GdipMode::Full:
        case GdipMode::Unnormalized:
            for (const auto& br : c.branches)
                for (std::size_t k = 0; k < n; ++k) s[k] += br.w * br.inner[k];
            break;
        case GdipMode::NoGates:
            for (const auto& br : c.branches)
                for (std::size_t k = 0; k < n; ++k) s[k] += br.inner[k];
            break;
        case GdipMode::Max: {
            const auto& br = c.branches[c.argmax];
            for (std::size_t k = 0; k < n; ++k) s[k] = br.inner[k];
            break;
        }
    }
    c.pre_outer = s;

    if (report) {
        report->weights.clear();
        for (const auto& br : c.branches) report->weights.push_back(br.w);
    }

    Tensor z = normalize_minmax(s);
    Image out(img.height, img.width);
    out.data = clamp01_frozen(z.data);
    return out;
}

void gdip_vjp(const GdipConfig& cfg, const std::vector<GbModule>& gbs, const Image& img,
              const std::vector<double>& embedding, const GdipCache& cache,
              const std::vector<double>& g_z, std::vector<double>& g_img,
              std::vector<double>& g_embedding, std::vector<GbGrads>& g_gbs) {
    const std::size_t n = img.data.size();
    if (g_z.size() != n) throw std::invalid_argument("gdip_vjp: upstream gradient size mismatch");
    if (g_img.size() != n) g_img.assign(n, 0.0);
    if (g_embedding.size() != embedding.size()) g_embedding.assign(embedding.size(), 0.0);
    if (g_gbs.size() != gbs.size()) {
        g_gbs.clear();
        for (const auto& gb : gbs)
            g_gbs.push_back({Tensor::zeros(gb.w.shape), Tensor::zeros(gb.b.shape)});
    }

    Tensor g_z_t({static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width), 3},
                 g_z);
    // the output clamp passes gradient only at strictly interior pixels
    Tensor z = normalize_minmax(cache.pre_outer);
    for (std::size_t k = 0; k < n; ++k)
        if (z[k] <= 0.0 || z[k] >= 1.0) g_z_t[k] = 0.0;
    Tensor g_s = normalize_minmax_vjp(cache.pre_outer, g_z_t);

    for (std::size_t i = 0; i < gbs.size(); ++i) {
        const auto& br = cache.branches[i];
        const GbModule& gb = gbs[i];
        int pc = param_count(gb.kind);

        bool active = cfg.mode != GdipMode::Max || i == cache.argmax;
        std::vector<double> g_raw(br.raw.size(), 0.0);

        if (active) {
            double branch_w;
            double g_w = 0.0;
            switch (cfg.mode) {
                case GdipMode::Full:
                case GdipMode::Unnormalized:
                    branch_w = br.w;
                    for (std::size_t k = 0; k < n; ++k) g_w += g_s[k] * br.inner[k];
                    break;
                case GdipMode::NoGates:
                    branch_w = 1.0;
                    break;
                case GdipMode::Max:
                    branch_w = 1.0;  // selected branch passes through un-weighted
                    break;
            }

            std::vector<double> g_inner(n);
            for (std::size_t k = 0; k < n; ++k) g_inner[k] = branch_w * g_s[k];

            std::vector<double> g_y;
            if (cfg.mode == GdipMode::Unnormalized) {
                g_y = std::move(g_inner);
            } else {
                Tensor g_inner_t(
                    {static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width), 3},
                    std::move(g_inner));
                g_y = normalize_minmax_vjp(br.op_out.to_tensor(), g_inner_t).data;
            }

            std::vector<double> g_img_i, g_params;
            ip_op_vjp(gb.kind, img, br.mapped.value, g_y, g_img_i, g_params);
            for (std::size_t k = 0; k < n; ++k) g_img[k] += g_img_i[k];
            for (int j = 0; j < pc; ++j) g_raw[j] = g_params[j] * br.mapped.dvalue_draw[j];
            if (cfg.mode == GdipMode::Full || cfg.mode == GdipMode::Unnormalized)
                g_raw[pc] = g_w * gate_deriv(br.gate_s);
        }

        // linear layer backward (no-op when g_raw is all zero)
        std::size_t in = gb.w.shape[1];
        for (std::size_t r = 0; r < g_raw.size(); ++r) {
            double gr = g_raw[r];
            if (gr == 0.0) continue;
            g_gbs[i].b[r] += gr;
            double* wrow = g_gbs[i].w.data.data() + r * in;
            const double* prow = gb.w.data.data() + r * in;
            for (std::size_t j = 0; j < in; ++j) {
                wrow[j] += gr * embedding[j];
                g_embedding[j] += gr * prow[j];
            }
        }
    }
}

}  // namespace gdip
