#include <doctest.h>

#include "gdip/mgdip.hpp"
#include "gdip/testing.hpp"

using namespace gdip;

namespace {

MgdipModel desk_model(std::uint64_t seed, int size = 16, int base = 2, int embed = 4,
                      std::vector<int> taps = {0, 1, 2, 3, 4},
                      std::vector<IpKind> ops = {IpKind::Identity, IpKind::Gamma,
                                                 IpKind::WhiteBalance}) {
    EncoderConfig enc_cfg{size, base, 5, embed};
    GdipConfig block_cfg;
    block_cfg.ops = std::move(ops);
    block_cfg.embedding_dim = embed;
    auto rng = make_rng(seed);
    return make_mgdip(enc_cfg, block_cfg, rng, std::move(taps));
}

}  // namespace

TEST_CASE("identity-equivalent blocks collapse to N(img) and stay fixed") {
    MgdipModel m = desk_model(1, 16, 2, 4, {0, 1, 2, 3, 4}, {IpKind::Identity});
    for (auto& blocks : m.chain.blocks) {
        blocks[0].w = Tensor::zeros(blocks[0].w.shape);
        blocks[0].b = Tensor::zeros(blocks[0].b.shape);
        blocks[0].b[blocks[0].b.size() - 1] = 30.0;  // gate saturated
    }
    Image img = testing::random_image(16, 16, 2);
    std::vector<GateReport> reports;
    Image z = mgdip_forward(m, img, &reports);
    Image expect = normalize_minmax(img);
    for (std::size_t i = 0; i < z.data.size(); ++i)
        CHECK(z.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-9));
    CHECK(reports.size() == 5);
}

TEST_CASE("single-level chain on C5 reproduces gdip_forward exactly") {
    MgdipModel m = desk_model(3, 16, 2, 4, {4});
    Image img = testing::random_image(16, 16, 4);
    MgdipCache cache;
    Image z = mgdip_forward(m, img, nullptr, &cache);

    EncoderCache ec;
    encoder_forward(m.enc_cfg, m.enc, img, &ec, false);
    // embedding via the chain's projection of gap(C5)
    const Tensor& c5 = ec.taps[4];
    std::size_t plane = c5.shape[1] * c5.shape[2];
    int ch = static_cast<int>(c5.shape[0]);
    std::vector<double> gap(ch, 0.0);
    for (int c = 0; c < ch; ++c) {
        for (std::size_t k = 0; k < plane; ++k) gap[c] += c5.data[c * plane + k];
        gap[c] /= static_cast<double>(plane);
    }
    std::vector<double> e(m.chain.block_cfg.embedding_dim, 0.0);
    for (std::size_t i = 0; i < e.size(); ++i) {
        e[i] = m.chain.proj_b[0][i];
        for (int j = 0; j < ch; ++j) e[i] += m.chain.proj_w[0].data[i * ch + j] * gap[j];
    }
    Image expect = gdip_forward(m.chain.block_cfg, m.chain.blocks[0], img, e);
    CHECK(z.data == expect.data);
}

TEST_CASE("chain output equals manual composition of gdip_forward calls") {
    MgdipModel m = desk_model(5);
    Image img = testing::random_image(16, 16, 6);
    MgdipCache cache;
    Image z = mgdip_forward(m, img, nullptr, &cache);

    Image x = img;
    for (std::size_t l = 0; l < m.chain.levels(); ++l)
        x = gdip_forward(m.chain.block_cfg, m.chain.blocks[l], x, cache.chain.levels[l].embedding);
    CHECK(z.data == x.data);
}

TEST_CASE("progressive outputs are valid images and reports are in range") {
    MgdipModel m = desk_model(7);
    Image img = testing::random_image(16, 16, 8);
    std::vector<GateReport> reports;
    MgdipCache cache;
    Image z = mgdip_forward(m, img, &reports, &cache);
    CHECK(reports.size() == m.chain.levels());
    for (const auto& r : reports) {
        CHECK(r.weights.size() == m.chain.block_cfg.ops.size());
        for (double w : r.weights) {
            CHECK(w >= 0.0);
            CHECK(w <= 1.0);
        }
    }
    Tensor t = z.to_tensor();
    CHECK(t.min() == doctest::Approx(0.0));
    CHECK(t.max() == doctest::Approx(1.0));
    for (std::size_t l = 1; l < cache.chain.levels.size(); ++l)
        for (double v : cache.chain.levels[l].input.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("mgdip grad_check at desk scale with 2 levels") {
    MgdipModel m = desk_model(9, 16, 2, 4, {0, 1}, {IpKind::Identity, IpKind::Gamma});
    testing::MgdipDiff op(std::move(m));
    Image img = testing::random_image(16, 16, 10, 0.1, 0.9);
    Tensor params = op.pack();
    auto rep = grad_check(op, img.to_tensor(), params, 1e-5, 1e-4, 11);
    CAPTURE(rep.max_rel_error);
    CHECK(rep.pass);
}

TEST_CASE("zero upstream gradient gives zero mgdip gradients") {
    MgdipModel m = desk_model(12);
    Image img = testing::random_image(16, 16, 13);
    MgdipCache cache;
    mgdip_forward(m, img, nullptr, &cache);
    MgdipGrads grads = make_mgdip_grads(m);
    std::vector<double> g_img;
    mgdip_vjp(m, img, cache, std::vector<double>(img.data.size(), 0.0), g_img, grads);
    for (double v : g_img) CHECK(v == 0.0);
    for (const auto& l : grads.enc.layers)
        for (double v : l.w.data) CHECK(v == 0.0);
    for (const auto& pw : grads.chain.proj_w)
        for (double v : pw.data) CHECK(v == 0.0);
}

TEST_CASE("freezing later levels makes level-1 gradients match single-level gdip") {
    // chain with levels 2..n equivalent to identity: compare level-1 block
    // gradients against a single-level run with the same upstream gradient
    MgdipModel m = desk_model(14, 16, 2, 4, {0, 4}, {IpKind::Identity, IpKind::Gamma});
    // make level 2 a pure identity pass-through: single Identity op cannot be
    // configured per level, so saturate its gates and zero its linear layers,
    // then verify the level-2 output is N of its input (identity + gamma=1 mix)
    auto& lv2 = m.chain.blocks[1];
    for (auto& gb : lv2) {
        gb.w = Tensor::zeros(gb.w.shape);
        gb.b = Tensor::zeros(gb.b.shape);
        gb.b[gb.b.size() - 1] = 30.0;
    }
    Image img = testing::random_image(16, 16, 15);
    MgdipCache cache;
    mgdip_forward(m, img, nullptr, &cache);

    std::vector<double> g_z = testing::random_vec(img.data.size(), 16);
    MgdipGrads grads = make_mgdip_grads(m);
    std::vector<double> g_img;
    mgdip_vjp(m, img, cache, g_z, g_img, grads);

    // single-level reference: N(0.5(N(x1) + N(x1^1))) = N(x1) with gradient
    // flowing back through the level-2 aggregation
    const auto& lv = cache.chain.levels[1];
    GdipCache c2;
    gdip_forward(m.chain.block_cfg, lv2, lv.input, lv.embedding, nullptr, &c2);
    std::vector<double> g_x1(lv.input.data.size(), 0.0), g_e2(4, 0.0);
    std::vector<GbGrads> g_lv2;
    gdip_vjp(m.chain.block_cfg, lv2, lv.input, lv.embedding, c2, g_z, g_x1, g_e2, g_lv2);

    const auto& lv1 = cache.chain.levels[0];
    GdipCache c1;
    gdip_forward(m.chain.block_cfg, m.chain.blocks[0], lv1.input, lv1.embedding, nullptr, &c1);
    std::vector<double> g_x0(img.data.size(), 0.0), g_e1(4, 0.0);
    std::vector<GbGrads> g_lv1;
    gdip_vjp(m.chain.block_cfg, m.chain.blocks[0], lv1.input, lv1.embedding, c1, g_x1, g_x0, g_e1,
             g_lv1);

    for (std::size_t b = 0; b < g_lv1.size(); ++b)
        for (std::size_t i = 0; i < g_lv1[b].w.size(); ++i)
            CHECK(grads.chain.blocks[0][b].w[i] == doctest::Approx(g_lv1[b].w[i]).epsilon(1e-12));
}
