#include "gdip/detect.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gdip {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int cell_index(double coord, int grid) {
    int i = static_cast<int>(coord * grid);
    return std::min(std::max(i, 0), grid - 1);
}

}  // namespace

void DetectionTarget::validate() const {
    for (const auto& b : boxes) {
        if (b.cls < 0 || b.cls >= kNumClasses)
            throw std::invalid_argument("target: class index out of range");
        if (b.cx < 0.0 || b.cx > 1.0 || b.cy < 0.0 || b.cy > 1.0)
            throw std::invalid_argument("target: center outside [0,1]");
        if (b.w <= 0.0 || b.w > 1.0 || b.h <= 0.0 || b.h > 1.0)
            throw std::invalid_argument("target: size outside (0,1]");
    }
}

DetectionTarget read_target(std::istream& in) {
    DetectionTarget t;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        GtBox b;
        if (!(ls >> b.cls >> b.cx >> b.cy >> b.w >> b.h))
            throw std::runtime_error("target: malformed line '" + line + "'");
        t.boxes.push_back(b);
    }
    t.validate();
    return t;
}

void write_target(std::ostream& out, const DetectionTarget& t) {
    t.validate();
    for (const auto& b : t.boxes)
        out << b.cls << ' ' << b.cx << ' ' << b.cy << ' ' << b.w << ' ' << b.h << '\n';
}

DetectionTarget load_target(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open target file: " + path);
    return read_target(in);
}

void save_target(const std::string& path, const DetectionTarget& t) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write target file: " + path);
    write_target(out, t);
}

void HeadConfig::validate() const {
    if (grid < 1) throw std::invalid_argument("head: grid must be >= 1");
    if (num_classes < 1) throw std::invalid_argument("head: num_classes must be >= 1");
}

DetectHead make_head(const HeadConfig& cfg, int in_channels, std::mt19937_64& rng) {
    cfg.validate();
    if (in_channels < 1) throw std::invalid_argument("head: in_channels must be >= 1");
    DetectHead head;
    head.cfg = cfg;
    std::size_t out = static_cast<std::size_t>(cfg.cell_channels());
    head.w = Tensor::zeros({out, static_cast<std::size_t>(in_channels)});
    head.b = Tensor::zeros({out});
    double bound = std::sqrt(6.0 / in_channels);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : head.w.data) v = dist(rng);
    return head;
}

Tensor adaptive_avg_pool(const Tensor& x, int grid) {
    if (x.shape.size() != 3) throw std::invalid_argument("adaptive_avg_pool: expected CHW");
    int ch = static_cast<int>(x.shape[0]);
    int s = static_cast<int>(x.shape[1]);
    if (static_cast<int>(x.shape[2]) != s)
        throw std::invalid_argument("adaptive_avg_pool: non-square input");
    if (grid > s) throw std::invalid_argument("adaptive_avg_pool: grid larger than input");
    Tensor out = Tensor::zeros({static_cast<std::size_t>(ch), static_cast<std::size_t>(grid),
                                static_cast<std::size_t>(grid)});
    for (int c = 0; c < ch; ++c) {
        const double* plane = x.data.data() + static_cast<std::size_t>(c) * s * s;
        double* op = out.data.data() + static_cast<std::size_t>(c) * grid * grid;
        for (int gy = 0; gy < grid; ++gy) {
            int y0 = gy * s / grid, y1 = (gy + 1) * s / grid;
            for (int gx = 0; gx < grid; ++gx) {
                int x0 = gx * s / grid, x1 = (gx + 1) * s / grid;
                double acc = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int xx = x0; xx < x1; ++xx) acc += plane[y * s + xx];
                op[gy * grid + gx] = acc / ((y1 - y0) * (x1 - x0));
            }
        }
    }
    return out;
}

void adaptive_avg_pool_vjp(const Tensor& x, const Tensor& g_out, Tensor& g_x) {
    int ch = static_cast<int>(x.shape[0]);
    int s = static_cast<int>(x.shape[1]);
    int grid = static_cast<int>(g_out.shape[1]);
    if (!g_x.same_shape(x)) g_x = Tensor::zeros(x.shape);
    for (int c = 0; c < ch; ++c) {
        double* gp = g_x.data.data() + static_cast<std::size_t>(c) * s * s;
        const double* go = g_out.data.data() + static_cast<std::size_t>(c) * grid * grid;
        for (int gy = 0; gy < grid; ++gy) {
            int y0 = gy * s / grid, y1 = (gy + 1) * s / grid;
            for (int gx = 0; gx < grid; ++gx) {
                int x0 = gx * s / grid, x1 = (gx + 1) * s / grid;
                double gv = go[gy * grid + gx] / ((y1 - y0) * (x1 - x0));
                for (int y = y0; y < y1; ++y)
                    for (int xx = x0; xx < x1; ++xx) gp[y * s + xx] += gv;
            }
        }
    }
}

Tensor head_forward(const DetectHead& head, const Tensor& c5, HeadCache* cache) {
    head.cfg.validate();
    int grid = head.cfg.grid;
    int cc = head.cfg.cell_channels();
    int ch = static_cast<int>(c5.shape[0]);
    if (head.w.shape[1] != c5.shape[0])
        throw std::invalid_argument("head_forward: channel mismatch");
    HeadCache local;
    HeadCache& c = cache ? *cache : local;
    c.pooled = adaptive_avg_pool(c5, grid);
    std::size_t plane = static_cast<std::size_t>(grid) * grid;
    Tensor out = Tensor::zeros({static_cast<std::size_t>(grid), static_cast<std::size_t>(grid),
                                static_cast<std::size_t>(cc)});
    for (std::size_t k = 0; k < plane; ++k) {
        for (int j = 0; j < cc; ++j) {
            double acc = head.b[j];
            const double* row = head.w.data.data() + static_cast<std::size_t>(j) * ch;
            for (int i = 0; i < ch; ++i) acc += row[i] * c.pooled.data[i * plane + k];
            out[k * cc + j] = acc;
        }
    }
    return out;
}

void head_vjp(const DetectHead& head, const Tensor& c5, const HeadCache& cache,
              const Tensor& g_out, Tensor& g_c5, HeadGrads& grads) {
    int grid = head.cfg.grid;
    int cc = head.cfg.cell_channels();
    int ch = static_cast<int>(c5.shape[0]);
    std::size_t plane = static_cast<std::size_t>(grid) * grid;
    if (!grads.w.same_shape(head.w)) grads.w = Tensor::zeros(head.w.shape);
    if (!grads.b.same_shape(head.b)) grads.b = Tensor::zeros(head.b.shape);
    Tensor g_pooled = Tensor::zeros(cache.pooled.shape);
    for (std::size_t k = 0; k < plane; ++k) {
        for (int j = 0; j < cc; ++j) {
            double go = g_out[k * cc + j];
            if (go == 0.0) continue;
            grads.b[j] += go;
            double* wrow = grads.w.data.data() + static_cast<std::size_t>(j) * ch;
            const double* prow = head.w.data.data() + static_cast<std::size_t>(j) * ch;
            for (int i = 0; i < ch; ++i) {
                wrow[i] += go * cache.pooled.data[i * plane + k];
                g_pooled.data[i * plane + k] += go * prow[i];
            }
        }
    }
    adaptive_avg_pool_vjp(c5, g_pooled, g_c5);
}

std::vector<DecodedCell> decode_output(const HeadConfig& cfg, const Tensor& out) {
    int grid = cfg.grid;
    int cc = cfg.cell_channels();
    if (out.size() != static_cast<std::size_t>(grid) * grid * cc)
        throw std::invalid_argument("decode_output: shape mismatch");
    std::vector<DecodedCell> cells(static_cast<std::size_t>(grid) * grid);
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const double* p = out.data.data() + k * cc;
        auto& c = cells[k];
        c.obj = sigmoid(p[0]);
        c.x = sigmoid(p[1]);
        c.y = sigmoid(p[2]);
        c.sw = sigmoid(p[3]);
        c.sh = sigmoid(p[4]);
        for (int j = 0; j < cfg.num_classes; ++j) c.cls[j] = sigmoid(p[5 + j]);
    }
    return cells;
}

std::vector<int> assign_cells(const DetectionTarget& target, int grid) {
    std::vector<int> owner(static_cast<std::size_t>(grid) * grid, -1);
    for (std::size_t i = 0; i < target.boxes.size(); ++i) {
        const auto& b = target.boxes[i];
        std::size_t k = static_cast<std::size_t>(cell_index(b.cy, grid)) * grid +
                        cell_index(b.cx, grid);
        if (owner[k] < 0 ||
            b.w * b.h > target.boxes[owner[k]].w * target.boxes[owner[k]].h)
            owner[k] = static_cast<int>(i);
    }
    return owner;
}

double loss_obj_decoded(const HeadConfig& cfg, const std::vector<DecodedCell>& cells,
                        const DetectionTarget& target) {
    target.validate();
    int grid = cfg.grid;
    if (cells.size() != static_cast<std::size_t>(grid) * grid)
        throw std::invalid_argument("loss_obj: cell count mismatch");
    std::vector<int> owner = assign_cells(target, grid);
    double loss = 0.0;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const auto& c = cells[k];
        if (owner[k] < 0) {
            loss += kLambdaNoobj * c.obj * c.obj;
            continue;
        }
        const auto& b = target.boxes[owner[k]];
        int gx = cell_index(b.cx, grid), gy = cell_index(b.cy, grid);
        double tx = b.cx * grid - gx, ty = b.cy * grid - gy;
        double dsw = c.sw - std::sqrt(b.w), dsh = c.sh - std::sqrt(b.h);
        double dx = c.x - tx, dy = c.y - ty;
        loss += kLambdaCoord * (dx * dx + dy * dy + dsw * dsw + dsh * dsh);
        double dob = c.obj - 1.0;
        loss += dob * dob;
        for (int j = 0; j < cfg.num_classes; ++j) {
            double dc = c.cls[j] - (j == b.cls ? 1.0 : 0.0);
            loss += dc * dc;
        }
    }
    return loss;
}

double loss_obj(const HeadConfig& cfg, const Tensor& out, const DetectionTarget& target) {
    return loss_obj_decoded(cfg, decode_output(cfg, out), target);
}

void loss_obj_vjp(const HeadConfig& cfg, const Tensor& out, const DetectionTarget& target,
                  double g_loss, Tensor& g_out) {
    int grid = cfg.grid;
    int cc = cfg.cell_channels();
    if (!g_out.same_shape(out)) g_out = Tensor::zeros(out.shape);
    std::vector<DecodedCell> cells = decode_output(cfg, out);
    std::vector<int> owner = assign_cells(target, grid);
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const auto& c = cells[k];
        double* g = g_out.data.data() + k * cc;
        auto dsig = [](double s) { return s * (1.0 - s); };
        if (owner[k] < 0) {
            g[0] += g_loss * 2.0 * kLambdaNoobj * c.obj * dsig(c.obj);
            continue;
        }
        const auto& b = target.boxes[owner[k]];
        int gx = cell_index(b.cx, grid), gy = cell_index(b.cy, grid);
        double tx = b.cx * grid - gx, ty = b.cy * grid - gy;
        g[0] += g_loss * 2.0 * (c.obj - 1.0) * dsig(c.obj);
        g[1] += g_loss * 2.0 * kLambdaCoord * (c.x - tx) * dsig(c.x);
        g[2] += g_loss * 2.0 * kLambdaCoord * (c.y - ty) * dsig(c.y);
        g[3] += g_loss * 2.0 * kLambdaCoord * (c.sw - std::sqrt(b.w)) * dsig(c.sw);
        g[4] += g_loss * 2.0 * kLambdaCoord * (c.sh - std::sqrt(b.h)) * dsig(c.sh);
        for (int j = 0; j < cfg.num_classes; ++j) {
            double t = (j == b.cls) ? 1.0 : 0.0;
            g[5 + j] += g_loss * 2.0 * (c.cls[j] - t) * dsig(c.cls[j]);
        }
    }
}

void loss_rec(const Image& z, const Image& clear, double& l1, double& mse) {
    if (z.height != clear.height || z.width != clear.width)
        throw std::invalid_argument("loss_rec: dimension mismatch");
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        double d = z.data[i] - clear.data[i];
        s1 += std::fabs(d);
        s2 += d * d;
    }
    double inv = 1.0 / static_cast<double>(z.data.size());
    l1 = s1 * inv;
    mse = s2 * inv;
}

void loss_rec_vjp(const Image& z, const Image& clear, double g_l1, double g_mse,
                  std::vector<double>& g_z) {
    if (g_z.size() != z.data.size()) g_z.assign(z.data.size(), 0.0);
    double inv = 1.0 / static_cast<double>(z.data.size());
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        double d = z.data[i] - clear.data[i];
        double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        g_z[i] += inv * (g_l1 * sgn + g_mse * 2.0 * d);
    }
}

double loss_total(double l_obj, double l_reg, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("loss_total: alpha must be >= 0");
    return l_obj + alpha * l_reg;
}

RegularizerModel make_regularizer(const EncoderConfig& enc_cfg, const HeadConfig& head_cfg,
                                  const GdipConfig& block_cfg, std::mt19937_64& rng,
                                  std::vector<int> tap_indices) {
    RegularizerModel m;
    m.enc_cfg = enc_cfg;
    m.enc = make_encoder(enc_cfg, rng);
    m.head = make_head(head_cfg, enc_cfg.out_channels(enc_cfg.num_layers - 1), rng);
    m.chain = make_chain(block_cfg, enc_cfg, std::move(tap_indices), rng);
    return m;
}

Tensor detector_forward(const EncoderConfig& enc_cfg, const EncoderParams& enc,
                        const DetectHead& head, const Image& img, EncoderCache* enc_cache,
                        HeadCache* head_cache) {
    EncoderCache local;
    EncoderCache& ec = enc_cache ? *enc_cache : local;
    encoder_forward(enc_cfg, enc, img, &ec, false);
    return head_forward(head, ec.taps.back(), head_cache);
}

LossBreakdown regularizer_forward(const RegularizerModel& m, const Image& adverse,
                                  const Image* clear, const DetectionTarget& target, double alpha,
                                  RegCache* cache) {
    if (alpha < 0.0) throw std::invalid_argument("regularizer: alpha must be >= 0");
    if (alpha != 0.0 && !clear)
        throw std::invalid_argument("regularizer: paired clear image required when alpha > 0");
    RegCache local;
    RegCache& c = cache ? *cache : local;
    c.head_out = detector_forward(m.enc_cfg, m.enc, m.head, adverse, &c.enc, &c.head);
    LossBreakdown out;
    out.alpha = alpha;
    out.l_obj = loss_obj(m.head.cfg, c.head_out, target);
    if (alpha != 0.0) {
        c.recon = chain_forward(m.chain, c.enc.taps, adverse, nullptr, &c.chain);
        c.norm_clear = normalize_minmax(*clear);
        loss_rec(c.recon, c.norm_clear, out.l_rec_l1, out.l_rec_mse);
        out.l_reg = out.l_rec_l1 + out.l_rec_mse;
    }
    out.l_total = loss_total(out.l_obj, out.l_reg, alpha);
    return out;
}

RegGrads make_reg_grads(const RegularizerModel& m) {
    RegGrads g;
    g.enc = make_encoder_grads(m.enc);
    g.head.w = Tensor::zeros(m.head.w.shape);
    g.head.b = Tensor::zeros(m.head.b.shape);
    g.chain = make_chain_grads(m.chain);
    return g;
}

void regularizer_vjp(const RegularizerModel& m, const Image& adverse, const Image* clear,
                     const DetectionTarget& target, double alpha, const RegCache& cache,
                     RegGrads& grads, std::vector<double>* g_adverse) {
    Tensor g_head_out;
    loss_obj_vjp(m.head.cfg, cache.head_out, target, 1.0, g_head_out);
    Tensor g_c5 = Tensor::zeros(cache.enc.taps.back().shape);
    head_vjp(m.head, cache.enc.taps.back(), cache.head, g_head_out, g_c5, grads.head);

    std::vector<std::vector<double>> g_taps(cache.enc.taps.size());
    g_taps.back() = g_c5.data;

    std::vector<double> local_g_img;
    std::vector<double>& g_img = g_adverse ? *g_adverse : local_g_img;
    if (g_img.size() != adverse.data.size()) g_img.assign(adverse.data.size(), 0.0);

    if (alpha != 0.0) {
        if (!clear) throw std::invalid_argument("regularizer: missing clear image");
        std::vector<double> g_z;
        loss_rec_vjp(cache.recon, cache.norm_clear, alpha, alpha, g_z);
        chain_vjp(m.chain, cache.enc.taps, cache.chain, g_z, g_img, g_taps, grads.chain);
    }

    encoder_vjp(m.enc_cfg, m.enc, cache.enc, g_taps, {}, g_img, grads.enc);
}

}  // namespace gdip
