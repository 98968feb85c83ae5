#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gdip/datagen.hpp"
#include "gdip/image_io.hpp"
#include "gdip/ip_ops.hpp"
#include "gdip/testing.hpp"

using namespace gdip;

namespace {

double psnr_db(const Image& a, const Image& b) {
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    return 10.0 * std::log10(1.0 / mse);
}

double mean_transmission(int level, int size) {
    double beta = fog_beta(level), acc = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) acc += std::exp(-beta * center_depth(y, x, size, size));
    return acc / (size * size);
}

}  // namespace

TEST_CASE("fog beta endpoints and monotonicity") {
    CHECK(fog_beta(0) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(fog_beta(9) == doctest::Approx(1.0).epsilon(1e-12));
    for (int l = 0; l + 1 <= 9; ++l) CHECK(fog_beta(l + 1) > fog_beta(l));
    CHECK_THROWS(fog_beta(10));
    CHECK_THROWS(make_fog_params(3, 0.5));  // A below range
}

TEST_CASE("fog with beta 0 is the identity") {
    Image img = testing::random_image(9, 7, 1);
    FogParams p{4, 0.9, 0.0};
    Image out = apply_fog_asm(img, p);
    CHECK(out.data == img.data);
}

TEST_CASE("fog formula fixture: I=0, t=0.5, A=1 gives 0.5") {
    // on a 2x2 image every pixel sits at d = 0.5, so beta = 2 ln 2 makes t = 0.5
    Image zero(2, 2);
    FogParams p{0, 1.0, 2.0 * std::log(2.0)};
    Image out = apply_fog_asm(zero, p);
    for (double v : out.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("transmission mean strictly decreases with fog level") {
    double prev = mean_transmission(0, 32);
    for (int l = 1; l <= 9; ++l) {
        double cur = mean_transmission(l, 32);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("mean pixel value non-decreasing in level when A >= mean(I)") {
    SceneSpec spec{7, 48, {}};
    Image img;
    DetectionTarget t;
    synth_scene(spec, img, t);
    double prev = -1.0;
    for (int l = 0; l <= 9; ++l) {
        Image fogged = apply_fog_asm(img, make_fog_params(l, 1.0));
        double mean = 0.0;
        for (double v : fogged.data) mean += v;
        mean /= static_cast<double>(fogged.data.size());
        CHECK(mean >= prev);
        prev = mean;
    }
}

TEST_CASE("darkening fixtures") {
    Image img(2, 2);
    for (auto& v : img.data) v = 0.5;
    Image out = apply_dark(img, {2.0});
    for (double v : out.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    for (auto& v : img.data) v = 1.0;
    out = apply_dark(img, {1.5});
    for (double v : out.data) CHECK(v == 1.0);

    CHECK_THROWS(apply_dark(img, {1.0}));
    CHECK_THROWS(apply_dark(img, {6.0}));
}

TEST_CASE("darkening strictly lowers mean brightness on a non-binary image") {
    Image img = testing::random_image(16, 16, 3);
    Image out = apply_dark(img, {2.5});
    double m0 = 0, m1 = 0;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        m0 += img.data[i];
        m1 += out.data[i];
        CHECK(out.data[i] >= 0.0);
        CHECK(out.data[i] <= 1.0);
    }
    CHECK(m1 < m0);
}

TEST_CASE("scene generation is deterministic and boxes are adversity-invariant") {
    SceneSpec spec{42, 64, {}};
    Image a, b;
    DetectionTarget ta, tb;
    synth_scene(spec, a, ta);
    synth_scene(spec, b, tb);
    CHECK(a.data == b.data);
    REQUIRE(ta.boxes.size() == tb.boxes.size());
    for (std::size_t i = 0; i < ta.boxes.size(); ++i) {
        CHECK(ta.boxes[i].cx == tb.boxes[i].cx);
        CHECK(ta.boxes[i].cls == tb.boxes[i].cls);
    }
    CHECK(ta.boxes.size() >= 1);
    CHECK(ta.boxes.size() <= 5);
}

TEST_CASE("explicit single object yields one tight box") {
    SceneSpec spec;
    spec.size = 64;
    spec.objects.push_back({0, 0.5, 0.5, 0.25, {1.0, 0.1, 0.1}});
    Image img;
    DetectionTarget t;
    synth_scene(spec, img, t);
    REQUIRE(t.boxes.size() == 1);
    CHECK(t.boxes[0].cls == 0);
    CHECK(t.boxes[0].w == doctest::Approx(0.25));
    CHECK(t.boxes[0].h == doctest::Approx(0.25));

    // rendered circle extents match the box within one pixel (the final
    // full-range stretch shifts values, so identify circle pixels by hue)
    int minx = 64, maxx = -1, miny = 64, maxy = -1;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if (img.at(y, x, 0) > 0.9 && img.at(y, x, 1) < 0.2) {
                minx = std::min(minx, x);
                maxx = std::max(maxx, x);
                miny = std::min(miny, y);
                maxy = std::max(maxy, y);
            }
    double r = 0.25 * 64 / 2.0;
    CHECK(std::fabs(minx - (0.5 * 64 - r)) <= 1.0);
    CHECK(std::fabs(maxx + 1 - (0.5 * 64 + r)) <= 1.0);
    CHECK(std::fabs(miny - (0.5 * 64 - r)) <= 1.0);
    CHECK(std::fabs(maxy + 1 - (0.5 * 64 + r)) <= 1.0);
}

TEST_CASE("objects outside the canvas are rejected") {
    SceneSpec spec;
    spec.size = 32;
    spec.objects.push_back({1, 0.05, 0.5, 0.2, {1, 1, 1}});
    Image img;
    DetectionTarget t;
    CHECK_THROWS(synth_scene(spec, img, t));
}

TEST_CASE("hybrid sampler: ratio, ranges, determinism") {
    HybridSampler s(100, Adversity::Mixed, 11);
    int adverse = 0, fog = 0;
    const int n = 9000;
    for (int i = 0; i < n; ++i) {
        HybridSample h = s.next();
        CHECK(h.index < 100);
        if (h.adverse) {
            ++adverse;
            if (h.fog) {
                ++fog;
                CHECK(h.fog_p.level >= 0);
                CHECK(h.fog_p.level <= 9);
                CHECK(h.fog_p.a >= kFogAMin);
                CHECK(h.fog_p.a <= kFogAMax);
            } else {
                CHECK(h.dark_p.gamma_dark >= kDarkGammaMin);
                CHECK(h.dark_p.gamma_dark <= kDarkGammaMax);
            }
        }
    }
    double frac = static_cast<double>(adverse) / n;
    CHECK(frac == doctest::Approx(2.0 / 3.0).epsilon(0.03));
    CHECK(fog > 0);
    CHECK(fog < adverse);

    HybridSampler s1(10, Adversity::Fog, 5), s2(10, Adversity::Fog, 5);
    for (int i = 0; i < 50; ++i) {
        HybridSample a = s1.next(), b = s2.next();
        CHECK(a.index == b.index);
        CHECK(a.adverse == b.adverse);
        if (a.adverse) {
            CHECK(a.fog);
            CHECK(a.fog_p.level == b.fog_p.level);
            CHECK(a.fog_p.a == b.fog_p.a);
        }
    }
    CHECK_THROWS(HybridSampler(0, Adversity::Mixed, 1));
}

TEST_CASE("dataset generation writes a loadable, deterministic manifest") {
    std::string dir = (std::filesystem::temp_directory_path() / "gdip_ds_test").string();
    std::filesystem::remove_all(dir);
    auto rows = generate_dataset(dir, 10, "mixed", 3, 32);
    REQUIRE(rows.size() == 10);
    auto loaded = load_manifest(dir + "/manifest.csv");
    REQUIRE(loaded.size() == 10);
    int adverse = 0;
    for (const auto& r : loaded) {
        Image img = read_image(r.image);
        CHECK(img.width == 32);
        DetectionTarget t = load_target(r.target);
        CHECK(!t.boxes.empty());
        if (r.condition == "clear") {
            CHECK(r.clear == r.image);
        } else {
            ++adverse;
            CHECK((r.condition.rfind("fog:", 0) == 0 || r.condition.rfind("dark:", 0) == 0));
            CHECK(r.clear != r.image);
            Image clear = read_image(r.clear);
            CHECK(clear.width == 32);
        }
    }
    CHECK(adverse > 0);

    std::ifstream m1(dir + "/manifest.csv");
    std::stringstream buf1;
    buf1 << m1.rdbuf();
    generate_dataset(dir, 10, "mixed", 3, 32);
    std::ifstream m2(dir + "/manifest.csv");
    std::stringstream buf2;
    buf2 << m2.rdbuf();
    CHECK(buf1.str() == buf2.str());

    auto clear_rows = generate_dataset(dir + "_clear", 5, "clear", 3, 32);
    for (const auto& r : clear_rows) CHECK(r.condition == "clear");
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir + "_clear");
}

TEST_CASE("atmospheric light estimate on a fogged fixture with known A") {
    Image base(32, 32);
    for (auto& v : base.data) v = 0.75;
    Image fogged = apply_fog_asm(base, make_fog_params(9, 0.8));
    auto est = estimate_atmospheric_light(fogged);
    for (int c = 0; c < 3; ++c) CHECK(std::fabs(est[c] - 0.8) <= 0.05);
}

TEST_CASE("synthetic clear scenes obey the dark channel prior") {
    for (std::uint64_t seed : {1, 2, 3, 4}) {
        SceneSpec spec{seed, 64, {}};
        Image clear;
        DetectionTarget t;
        synth_scene(spec, clear, t);
        Tensor dc = dark_channel(clear);
        double mean = 0.0;
        for (double v : dc.data) mean += v;
        mean /= static_cast<double>(dc.size());
        CAPTURE(seed);
        CHECK(mean < 0.05);
        CHECK(dc.max() < 0.15);
        // full-range invariant from the generator's final stretch
        CHECK(clear.to_tensor().min() == 0.0);
        CHECK(clear.to_tensor().max() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("defog recovers at least 3 dB on a level-5 fogged scene") {
    SceneSpec spec{21, 64, {}};
    Image clear;
    DetectionTarget t;
    synth_scene(spec, clear, t);
    Image fogged = apply_fog_asm(clear, make_fog_params(5, 0.9));
    Image defogged = apply_defog(fogged, 0.95);
    double before = psnr_db(fogged, clear);
    double after = psnr_db(defogged, clear);
    CAPTURE(before);
    CAPTURE(after);
    CHECK(after - before >= 3.0);
}
