#include "gdip/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "gdip/image_io.hpp"

namespace gdip {

void FogParams::validate() const {
    if (level < 0 || level > 9) throw std::invalid_argument("fog: level must be in 0..9");
    if (a < kFogAMin || a > kFogAMax)
        throw std::invalid_argument("fog: atmospheric light outside [0.7, 1.0]");
    if (beta < 0.0) throw std::invalid_argument("fog: beta must be >= 0");
}

double fog_beta(int level) {
    if (level < 0 || level > 9) throw std::invalid_argument("fog: level must be in 0..9");
    return kFogBetaMin + level * (kFogBetaMax - kFogBetaMin) / 9.0;
}

FogParams make_fog_params(int level, double a) {
    FogParams p{level, a, fog_beta(level)};
    p.validate();
    return p;
}

void DarkParams::validate() const {
    if (gamma_dark < kDarkGammaMin || gamma_dark > kDarkGammaMax)
        throw std::invalid_argument("dark: gamma outside [1.5, 5]");
}

double center_depth(int y, int x, int height, int width) {
    double dx = x + 0.5 - width * 0.5;
    double dy = y + 0.5 - height * 0.5;
    double half_diag = 0.5 * std::sqrt(static_cast<double>(width) * width +
                                       static_cast<double>(height) * height);
    return std::sqrt(dx * dx + dy * dy) / half_diag;
}

Image apply_fog_asm(const Image& img, const FogParams& p) {
    p.validate();
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double t = std::exp(-p.beta * center_depth(y, x, img.height, img.width));
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = img.at(y, x, c) * t + p.a * (1.0 - t);
        }
    }
    return out;
}

Image apply_dark(const Image& img, const DarkParams& p) {
    p.validate();
    Image out(img.height, img.width);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = std::pow(img.data[i], p.gamma_dark);
    return out;
}

namespace {

// Half-width of the shape's cross-section at vertical offset dy from its
// center, in pixels; negative when outside.
double shape_half_width(int shape, double dy, double half) {
    switch (shape) {
        case 0: {  // circle
            double rem = half * half - dy * dy;
            return rem >= 0.0 ? std::sqrt(rem) : -1.0;
        }
        case 1:  // square
            return std::fabs(dy) <= half ? half : -1.0;
        case 2: {  // up-pointing triangle: apex on top, base at the bottom
            if (dy < -half || dy > half) return -1.0;
            return half * (dy + half) / (2.0 * half);
        }
    }
    return -1.0;
}

void render_object(Image& img, const SceneObject& o) {
    int size = img.width;
    double half = o.scale * size * 0.5;
    double ocx = o.cx * size, ocy = o.cy * size;
    int y0 = std::max(0, static_cast<int>(ocy - half) - 1);
    int y1 = std::min(img.height - 1, static_cast<int>(ocy + half) + 1);
    int x0 = std::max(0, static_cast<int>(ocx - half) - 1);
    int x1 = std::min(img.width - 1, static_cast<int>(ocx + half) + 1);
    for (int y = y0; y <= y1; ++y) {
        double dy = y + 0.5 - ocy;
        double hw = shape_half_width(o.shape, dy, half);
        if (hw < 0.0) continue;
        for (int x = x0; x <= x1; ++x) {
            if (std::fabs(x + 0.5 - ocx) > hw) continue;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = o.color[c];
        }
    }
}

std::array<double, 3> sample_object_color(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<double, 3> col{};
    for (auto& c : col) {
        double v = u(rng);
        // push channels away from the background mid-tones
        c = u(rng) < 0.5 ? 0.05 + 0.15 * v : 0.8 + 0.2 * v;
    }
    // haze-free natural images have a near-zero per-pixel channel minimum
    // (the dark channel prior the defog op relies on); enforce it per object
    std::uniform_int_distribution<int> pick(0, 2);
    col[static_cast<std::size_t>(pick(rng))] = 0.08 * u(rng);
    return col;
}

std::vector<SceneObject> sample_objects(std::mt19937_64& rng, int size) {
    std::uniform_int_distribution<int> count_dist(1, 5);
    std::uniform_int_distribution<int> shape_dist(0, kNumClasses - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int n = count_dist(rng);
    std::vector<SceneObject> objects;
    for (int i = 0; i < n; ++i) {
        SceneObject o;
        o.shape = shape_dist(rng);
        o.scale = 0.15 + 0.2 * u(rng);
        double margin = o.scale * 0.5 + 2.0 / size;
        for (int attempt = 0; attempt < 20; ++attempt) {
            o.cx = margin + (1.0 - 2.0 * margin) * u(rng);
            o.cy = margin + (1.0 - 2.0 * margin) * u(rng);
            bool clash = false;
            for (const auto& prev : objects) {
                double d = std::hypot(o.cx - prev.cx, o.cy - prev.cy);
                if (d < 0.5 * (o.scale + prev.scale)) clash = true;
            }
            if (!clash) break;
        }
        o.color = sample_object_color(rng);
        objects.push_back(o);
    }
    return objects;
}

}  // namespace

void synth_scene(const SceneSpec& spec, Image& img, DetectionTarget& target) {
    if (spec.size < 8) throw std::invalid_argument("scene: size must be >= 8");
    auto rng = make_rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    // low-frequency textured background; one channel stays near zero so the
    // clear scene obeys the dark channel prior assumed by the defog op
    std::array<double, 3> base{}, phase{};
    for (int c = 0; c < 3; ++c) {
        base[c] = 0.35 + 0.3 * u(rng);
        phase[c] = 2.0 * M_PI * u(rng);
    }
    std::uniform_int_distribution<int> pick(0, 2);
    int dark = pick(rng);
    base[static_cast<std::size_t>(dark)] = 0.01 + 0.03 * u(rng);
    double fx = 1.0 + std::floor(3.0 * u(rng));
    double fy = 1.0 + std::floor(3.0 * u(rng));
    img = Image(spec.size, spec.size);
    for (int y = 0; y < spec.size; ++y)
        for (int x = 0; x < spec.size; ++x)
            for (int c = 0; c < 3; ++c) {
                double amp = c == dark ? 0.01 : 0.08;
                double v = base[c] +
                           amp * std::sin(2.0 * M_PI * (fx * x + fy * y) / spec.size + phase[c]);
                img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
            }

    std::vector<SceneObject> objects =
        spec.objects.empty() ? sample_objects(rng, spec.size) : spec.objects;
    target.boxes.clear();
    for (const auto& o : objects) {
        if (o.shape < 0 || o.shape >= kNumClasses)
            throw std::invalid_argument("scene: unknown shape class");
        if (o.cx - o.scale / 2 < 0.0 || o.cx + o.scale / 2 > 1.0 || o.cy - o.scale / 2 < 0.0 ||
            o.cy + o.scale / 2 > 1.0)
            throw std::invalid_argument("scene: object extends outside the canvas");
        render_object(img, o);
        target.boxes.push_back({o.shape, o.cx, o.cy, o.scale, o.scale});
    }
    // full dynamic range: pins the scene minimum at 0 (reinforcing the dark
    // channel prior) and the maximum at 1, so min-max renormalization of a
    // restored image is lossless against this reference
    img = normalize_minmax(img);
    target.validate();
}

Adversity parse_adversity(const std::string& s) {
    if (s == "fog") return Adversity::Fog;
    if (s == "dark") return Adversity::Dark;
    if (s == "mixed") return Adversity::Mixed;
    throw std::invalid_argument("unknown adversity kind: " + s);
}

HybridSampler::HybridSampler(std::size_t pool_size, Adversity kind, std::uint64_t seed)
    : pool_size_(pool_size), kind_(kind), rng_(make_rng(seed)) {
    if (pool_size_ == 0) throw std::invalid_argument("hybrid sampler: empty pool");
}

HybridSample HybridSampler::next() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, pool_size_ - 1);
    HybridSample s;
    s.index = pick(rng_);
    s.adverse = u(rng_) < 2.0 / 3.0;
    if (!s.adverse) return s;
    s.fog = kind_ == Adversity::Fog || (kind_ == Adversity::Mixed && u(rng_) < 0.5);
    if (s.fog) {
        std::uniform_int_distribution<int> level(0, 9);
        std::uniform_real_distribution<double> a(kFogAMin, kFogAMax);
        s.fog_p = make_fog_params(level(rng_), a(rng_));
    } else {
        std::uniform_real_distribution<double> g(kDarkGammaMin, kDarkGammaMax);
        s.dark_p.gamma_dark = g(rng_);
    }
    return s;
}

std::string condition_tag(const HybridSample& s) {
    if (!s.adverse) return "clear";
    std::ostringstream os;
    if (s.fog)
        os << "fog:" << s.fog_p.level;
    else
        os << "dark:" << s.dark_p.gamma_dark;
    return os.str();
}

std::vector<ManifestRow> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    std::vector<ManifestRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ls(line);
        ManifestRow r;
        if (!std::getline(ls, r.image, ',') || !std::getline(ls, r.target, ',') ||
            !std::getline(ls, r.condition, ',') || !std::getline(ls, r.clear))
            throw std::runtime_error("manifest: malformed row '" + line + "'");
        rows.push_back(std::move(r));
    }
    return rows;
}

void save_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << "image,target,condition,clear\n";
    for (const auto& r : rows)
        out << r.image << ',' << r.target << ',' << r.condition << ',' << r.clear << '\n';
}

std::vector<ManifestRow> generate_dataset(const std::string& dir, int count,
                                          const std::string& condition, std::uint64_t seed,
                                          int size) {
    if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    // "mixed" keeps the 2:1 adverse:clear hybrid stream; "fog" and "dark" are
    // all-adverse, "clear" all-clear, so single-condition datasets are pure
    bool clear_only = condition == "clear";
    bool always_adverse = condition == "fog" || condition == "dark";
    Adversity kind = clear_only ? Adversity::Mixed : parse_adversity(condition);

    HybridSampler sampler(1, kind, seed ^ 0x9e3779b9u);
    std::vector<ManifestRow> rows;
    for (int i = 0; i < count; ++i) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "%05d", i);
        SceneSpec spec;
        spec.seed = seed + static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ull;
        spec.size = size;
        Image clear_img;
        DetectionTarget target;
        synth_scene(spec, clear_img, target);

        HybridSample s = sampler.next();
        if (clear_only) s.adverse = false;
        while (always_adverse && !s.adverse) s = sampler.next();

        ManifestRow row;
        row.target = dir + "/img_" + stem + ".txt";
        save_target(row.target, target);
        row.condition = condition_tag(s);
        if (s.adverse) {
            Image adverse = s.fog ? apply_fog_asm(clear_img, s.fog_p)
                                  : apply_dark(clear_img, s.dark_p);
            row.image = dir + "/img_" + stem + ".ppm";
            row.clear = dir + "/clear_" + stem + ".ppm";
            write_image(adverse, row.image);
            write_image(clear_img, row.clear);
        } else {
            row.image = dir + "/img_" + stem + ".ppm";
            row.clear = row.image;
            write_image(clear_img, row.image);
        }
        rows.push_back(std::move(row));
    }
    save_manifest(dir + "/manifest.csv", rows);
    return rows;
}

}  // namespace gdip
