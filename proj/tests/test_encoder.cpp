#include <doctest.h>

#include "gdip/encoder.hpp"
#include "gdip/testing.hpp"

using namespace gdip;

TEST_CASE("conv layer shape: 3x128x128 base 8 -> 8x64x64") {
    EncoderConfig cfg{128, 8, 5, 64};
    auto rng = make_rng(1);
    auto p = make_encoder(cfg, rng);
    Image img = testing::random_image(128, 128, 2);
    Tensor x = image_to_chw(img);
    Tensor out = conv_layer_forward(cfg, p.layers[0], x, 0);
    CHECK(out.shape == std::vector<std::size_t>{8, 64, 64});
}

TEST_CASE("paper configuration channel and embedding sizes") {
    EncoderConfig cfg = EncoderConfig::paper();
    CHECK(cfg.out_channels(0) == 64);
    CHECK(cfg.out_channels(4) == 1024);
    CHECK(cfg.embedding_dim == 256);
    for (int l = 0; l + 1 < cfg.num_layers; ++l)
        CHECK(cfg.out_channels(l + 1) == 2 * cfg.out_channels(l));
}

TEST_CASE("desk configuration shape arithmetic") {
    EncoderConfig cfg{128, 8, 5, 64};
    CHECK(cfg.spatial(4) == 4);
    auto rng = make_rng(3);
    auto p = make_encoder(cfg, rng);
    Image img = testing::random_image(128, 128, 4);
    EncoderTaps taps = encoder_forward(cfg, p, img);
    CHECK(taps.taps.back().shape == std::vector<std::size_t>{128, 4, 4});
    CHECK(taps.embedding.size() == 64);
    for (int l = 0; l < 5; ++l) {
        CHECK(taps.taps[l].shape[0] == static_cast<std::size_t>(cfg.out_channels(l)));
        CHECK(taps.taps[l].shape[1] == static_cast<std::size_t>(cfg.spatial(l)));
    }
}

TEST_CASE("identity-like delta kernel reproduces positive input before pooling") {
    EncoderConfig cfg{16, 3, 5, 8};
    ConvLayer layer;
    layer.w = Tensor::zeros({3, 3, 3, 3});
    layer.b = Tensor::zeros({3});
    for (int c = 0; c < 3; ++c) layer.w.data[((c * 3 + c) * 9) + 4] = 1.0;  // center tap
    Image img = testing::random_image(16, 16, 5, 0.1, 0.9);
    Tensor x = image_to_chw(img);
    Tensor conv;
    conv_layer_forward(cfg, layer, x, 0, &conv);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(conv[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("zero image with zero biases gives the fc bias as embedding") {
    EncoderConfig cfg{32, 2, 5, 6};
    auto rng = make_rng(6);
    auto p = make_encoder(cfg, rng);
    for (std::size_t i = 0; i < p.fc_b.size(); ++i) p.fc_b[i] = 0.1 * static_cast<double>(i);
    Image zero(32, 32);
    EncoderTaps taps = encoder_forward(cfg, p, zero);
    for (std::size_t i = 0; i < taps.embedding.size(); ++i)
        CHECK(taps.embedding[i] == doctest::Approx(p.fc_b[i]));
}

TEST_CASE("encoder forward is deterministic") {
    EncoderConfig cfg{32, 2, 5, 8};
    auto rng = make_rng(7);
    auto p = make_encoder(cfg, rng);
    Image img = testing::random_image(32, 32, 8);
    EncoderTaps a = encoder_forward(cfg, p, img);
    EncoderTaps b = encoder_forward(cfg, p, img);
    CHECK(a.embedding == b.embedding);
    for (int l = 0; l < 5; ++l) CHECK(a.taps[l].data == b.taps[l].data);
}

TEST_CASE("encoder rejects mismatched input size and bad config") {
    EncoderConfig cfg{32, 2, 5, 8};
    auto rng = make_rng(9);
    auto p = make_encoder(cfg, rng);
    CHECK_THROWS(encoder_forward(cfg, p, testing::random_image(16, 16, 10)));
    EncoderConfig bad = cfg;
    bad.num_layers = 4;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("conv layer rejects channel mismatch") {
    EncoderConfig cfg{16, 2, 5, 4};
    auto rng = make_rng(11);
    auto p = make_encoder(cfg, rng);
    Tensor wrong = Tensor::zeros({5, 16, 16});
    CHECK_THROWS(conv_layer_forward(cfg, p.layers[0], wrong, 0));
}

TEST_CASE("average pool vjp distributes gradient over each window") {
    Tensor x = Tensor::zeros({1, 4, 4});
    auto d = testing::random_vec(16, 12, 0.0, 1.0);
    x.data = d;
    Tensor out = avg_pool3x3s2(x);  // 1x2x2
    REQUIRE(out.shape == std::vector<std::size_t>{1, 2, 2});
    // window of output (1,1) covers rows/cols 1..3: mean of 9 taps
    double m = 0.0;
    for (int y = 1; y < 4; ++y)
        for (int xx = 1; xx < 4; ++xx) m += x.data[y * 4 + xx];
    CHECK(out.data[3] == doctest::Approx(m / 9.0));
    // corner window (0,0) covers rows/cols 0..1: mean of 4 taps
    CHECK(out.data[0] ==
          doctest::Approx((x.data[0] + x.data[1] + x.data[4] + x.data[5]) / 4.0));

    Tensor g_out = Tensor::zeros({1, 2, 2});
    g_out.data[3] = 1.0;
    Tensor g_x = Tensor::zeros(x.shape);
    avg_pool3x3s2_vjp(x, g_out, g_x);
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) {
            double expect = (y >= 1 && xx >= 1) ? 1.0 / 9.0 : 0.0;
            CHECK(g_x.data[y * 4 + xx] == doctest::Approx(expect));
        }
}

TEST_CASE("encoder grad_check on 3x16x16 input at base 2") {
    EncoderConfig cfg{16, 2, 5, 4};
    auto rng = make_rng(13);
    auto p = make_encoder(cfg, rng);
    testing::EncoderDiff op(cfg, p);
    Image img = testing::random_image(16, 16, 14, 0.1, 0.9);
    Tensor params = op.pack();
    auto rep = grad_check(op, img.to_tensor(), params, 1e-5, 1e-4, 15);
    CAPTURE(rep.max_rel_error);
    CHECK(rep.pass);
}

TEST_CASE("zero upstream embedding gradient yields zero parameter gradients") {
    EncoderConfig cfg{16, 2, 5, 4};
    auto rng = make_rng(16);
    auto p = make_encoder(cfg, rng);
    Image img = testing::random_image(16, 16, 17);
    EncoderCache cache;
    encoder_forward(cfg, p, img, &cache);
    EncoderGrads grads = make_encoder_grads(p);
    std::vector<double> g_img;
    encoder_vjp(cfg, p, cache, {}, std::vector<double>(4, 0.0), g_img, grads);
    for (const auto& l : grads.layers)
        for (double v : l.w.data) CHECK(v == 0.0);
    for (double v : g_img) CHECK(v == 0.0);
}
