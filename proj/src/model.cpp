#include "gdip/model.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace gdip {

Variant parse_variant(const std::string& s) {
    if (s == "baseline") return Variant::Baseline;
    if (s == "gdip") return Variant::Gdip;
    if (s == "mgdip") return Variant::Mgdip;
    if (s == "regularizer") return Variant::Regularizer;
    throw std::invalid_argument("unknown variant: " + s);
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Baseline: return "baseline";
        case Variant::Gdip: return "gdip";
        case Variant::Mgdip: return "mgdip";
        case Variant::Regularizer: return "regularizer";
    }
    throw std::invalid_argument("unknown variant");
}

std::vector<int> ModelConfig::enh_taps() const {
    if (variant == Variant::Gdip) return {4};
    if (variant == Variant::Mgdip) return {0, 1, 2, 3, 4};
    return {};
}

void ModelConfig::validate() const {
    encoder().validate();
    head().validate();
    if (grid > encoder().spatial(4))
        throw std::invalid_argument("model: grid exceeds C5 spatial size");
    if (variant == Variant::Regularizer && reg_taps.empty())
        throw std::invalid_argument("model: regularizer variant needs at least one tap");
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    GdipConfig block;
    block.mode = cfg.mode;
    block.embedding_dim = cfg.embedding_dim;
    auto rng = make_rng(seed);
    m.enh = make_mgdip(cfg.encoder(), block, rng, cfg.enh_taps());
    std::vector<int> det_taps =
        cfg.variant == Variant::Regularizer ? cfg.reg_taps : std::vector<int>{};
    m.det = make_regularizer(cfg.encoder(), cfg.head(), block, rng, det_taps);
    return m;
}

ModelGrads make_model_grads(const Model& m) {
    return {make_mgdip_grads(m.enh), make_reg_grads(m.det)};
}

void zero_grads(const Model& m, ModelGrads& g) {
    for (ParamRef r : grad_views(m, g)) std::fill(r.t->data.begin(), r.t->data.end(), 0.0);
}

namespace {

// Shared traversal over the parameter structure; Enc/Chain/Head types differ
// between the parameter and gradient structs but have identical layouts.
template <class Enc, class Chain, class Head>
void visit_params(const std::string& prefix_enh, Enc& enh_enc, Chain& enh_chain,
                  const std::string& prefix_det, Enc& det_enc, Head& head, Chain& reg_chain,
                  std::vector<ParamRef>& out) {
    auto add_encoder = [&](const std::string& prefix, Enc& e) {
        for (std::size_t l = 0; l < e.layers.size(); ++l) {
            out.push_back({prefix + ".conv" + std::to_string(l) + ".w", &e.layers[l].w, false});
            out.push_back({prefix + ".conv" + std::to_string(l) + ".b", &e.layers[l].b, true});
        }
    };
    auto add_chain = [&](const std::string& prefix, Chain& c) {
        for (std::size_t l = 0; l < c.proj_w.size(); ++l) {
            std::string lv = prefix + ".l" + std::to_string(l);
            out.push_back({lv + ".proj.w", &c.proj_w[l], false});
            out.push_back({lv + ".proj.b", &c.proj_b[l], true});
            for (std::size_t j = 0; j < c.blocks[l].size(); ++j) {
                out.push_back({lv + ".gb" + std::to_string(j) + ".w", &c.blocks[l][j].w, false});
                out.push_back({lv + ".gb" + std::to_string(j) + ".b", &c.blocks[l][j].b, true});
            }
        }
    };
    add_encoder(prefix_enh, enh_enc);
    add_chain(prefix_enh, enh_chain);
    add_encoder(prefix_det, det_enc);
    out.push_back({"head.w", &head.w, false});
    out.push_back({"head.b", &head.b, true});
    add_chain("reg", reg_chain);
}

}  // namespace

std::vector<ParamRef> param_views(Model& m) {
    std::vector<ParamRef> out;
    visit_params("enh", m.enh.enc, m.enh.chain, "det", m.det.enc, m.det.head, m.det.chain, out);
    return out;
}

std::vector<ParamRef> grad_views(const Model& m, ModelGrads& g) {
    (void)m;
    std::vector<ParamRef> out;
    visit_params("enh", g.enh.enc, g.enh.chain, "det", g.det.enc, g.det.head, g.det.chain, out);
    return out;
}

LossBreakdown model_loss(const Model& m, const Image& img, const Image* clear,
                         const DetectionTarget& target, double alpha, ModelCache* cache) {
    ModelCache local;
    ModelCache& c = cache ? *cache : local;
    const Image* detect_input = &img;
    if (m.has_enhancer()) {
        c.enhanced = mgdip_forward(m.enh, img, nullptr, &c.enh);
        detect_input = &c.enhanced;
    }
    double eff_alpha = m.cfg.variant == Variant::Regularizer ? alpha : 0.0;
    return regularizer_forward(m.det, *detect_input, clear, target, eff_alpha, &c.det);
}

void model_vjp(const Model& m, const Image& img, const Image* clear,
               const DetectionTarget& target, double alpha, const ModelCache& cache,
               ModelGrads& grads) {
    double eff_alpha = m.cfg.variant == Variant::Regularizer ? alpha : 0.0;
    if (!m.has_enhancer()) {
        regularizer_vjp(m.det, img, clear, target, eff_alpha, cache.det, grads.det);
        return;
    }
    std::vector<double> g_enhanced;
    regularizer_vjp(m.det, cache.enhanced, clear, target, eff_alpha, cache.det, grads.det,
                    &g_enhanced);
    std::vector<double> g_img;
    mgdip_vjp(m.enh, img, cache.enh, g_enhanced, g_img, grads.enh);
}

Image model_enhance(const Model& m, const Image& img, std::vector<GateReport>* reports) {
    if (!m.has_enhancer())
        throw std::invalid_argument("model: " + variant_name(m.cfg.variant) +
                                    " has no enhancement path at inference");
    return mgdip_forward(m.enh, img, reports);
}

Tensor model_detect(const Model& m, const Image& img) {
    if (m.has_enhancer()) {
        Image enhanced = mgdip_forward(m.enh, img);
        return detector_forward(m.det.enc_cfg, m.det.enc, m.det.head, enhanced);
    }
    return detector_forward(m.det.enc_cfg, m.det.enc, m.det.head, img);
}

std::vector<double> model_gates(const Model& m, const Image& img) {
    std::vector<GateReport> reports;
    model_enhance(m, img, &reports);
    return reports.front().weights;
}

Model to_baseline(const Model& m) {
    ModelConfig cfg = m.cfg;
    cfg.variant = Variant::Baseline;
    Model out = make_model(cfg, 0);
    out.det.enc = m.det.enc;
    out.det.head = m.det.head;
    return out;
}

namespace {

constexpr char kMagic[5] = {'G', 'D', 'I', 'P', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

void write_taps(std::ostream& out, const std::vector<int>& taps) {
    write_u32(out, static_cast<std::uint32_t>(taps.size()));
    for (int t : taps) write_u32(out, static_cast<std::uint32_t>(t));
}

std::vector<int> read_taps(std::istream& in) {
    std::uint32_t n = read_u32(in);
    if (n > 16) throw std::runtime_error("checkpoint: implausible tap count");
    std::vector<int> taps(n);
    for (auto& t : taps) t = static_cast<int>(read_u32(in));
    return taps;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof kMagic);
    out.put(static_cast<char>(m.cfg.variant));
    out.put(static_cast<char>(m.cfg.mode));
    write_u32(out, static_cast<std::uint32_t>(m.cfg.image_size));
    write_u32(out, static_cast<std::uint32_t>(m.cfg.base_channels));
    write_u32(out, static_cast<std::uint32_t>(m.cfg.embedding_dim));
    write_u32(out, static_cast<std::uint32_t>(m.cfg.grid));
    write_taps(out, m.cfg.reg_taps);

    // param_views needs a mutable model; the traversal does not modify it
    auto views = param_views(const_cast<Model&>(m));
    write_u32(out, static_cast<std::uint32_t>(views.size()));
    for (const ParamRef& r : views) {
        write_u32(out, static_cast<std::uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        write_u32(out, static_cast<std::uint32_t>(r.t->shape.size()));
        for (std::size_t d : r.t->shape) write_u64(out, d);
        out.write(reinterpret_cast<const char*>(r.t->data.data()),
                  static_cast<std::streamsize>(r.t->data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[5];
    in.read(magic, sizeof magic);
    if (!in || std::string(magic, 5) != std::string(kMagic, 5))
        throw std::runtime_error("not a checkpoint file: " + path);

    ModelConfig cfg;
    cfg.variant = static_cast<Variant>(in.get());
    cfg.mode = static_cast<GdipMode>(in.get());
    cfg.image_size = static_cast<int>(read_u32(in));
    cfg.base_channels = static_cast<int>(read_u32(in));
    cfg.embedding_dim = static_cast<int>(read_u32(in));
    cfg.grid = static_cast<int>(read_u32(in));
    cfg.reg_taps = read_taps(in);
    if (!in) throw std::runtime_error("checkpoint truncated: " + path);

    Model m = make_model(cfg, 0);
    auto views = param_views(m);
    std::uint32_t count = read_u32(in);
    if (count != views.size()) throw std::runtime_error("checkpoint: parameter set mismatch");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t len = read_u32(in);
        if (len > 256) throw std::runtime_error("checkpoint: implausible name length");
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (name != views[i].name)
            throw std::runtime_error("checkpoint: unexpected tensor " + name);
        std::uint32_t ndim = read_u32(in);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<std::size_t>(read_u64(in));
        if (shape != views[i].t->shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        in.read(reinterpret_cast<char*>(views[i].t->data.data()),
                static_cast<std::streamsize>(views[i].t->data.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint truncated: " + path);
    }
    for (const ParamRef& r : views)
        if (!r.t->all_finite()) throw std::runtime_error("checkpoint: non-finite parameter");
    return m;
}

}  // namespace gdip
