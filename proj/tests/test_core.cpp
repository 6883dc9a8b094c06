#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fgvi/core/checkpoint.hpp"
#include "fgvi/core/nn.hpp"
#include "fgvi/core/optim.hpp"
#include "gradcheck.hpp"

using namespace fgvi;
using namespace fgvi::ad;
using core::Dim;
using core::Rng;
using core::Tensor;
using fgvi::test::grad_check;
using fgvi::test::random_tensor;

TEST_CASE("tensor basics") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    t.at(1, 2) = 5.0;
    CHECK(t[5] == 5.0);
    Tensor r = t.reshaped({3, 2});
    CHECK(r.at(2, 1) == 5.0);
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);

    Tensor c = t.clone();
    c.at(0, 0) = 9.0;
    CHECK(t.at(0, 0) == 0.0);
}

TEST_CASE("rng determinism and fork independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    Rng c = Rng(42).fork(1), d = Rng(42).fork(2);
    CHECK(c.uniform() != d.uniform());
}

TEST_CASE("backward accumulates through shared subexpressions") {
    Var x = param(Tensor::scalar(3.0));
    Var y = mul(x, x);           // x^2
    Var z = add(y, scale(x, 2)); // x^2 + 2x -> d/dx = 2x + 2 = 8
    backward(z);
    CHECK(x->grad[0] == doctest::Approx(8.0));
}

TEST_CASE("elementwise op gradients") {
    Rng rng(7);
    for (auto f : {+[](const Var& v) { return sigmoid(v); },
                   +[](const Var& v) { return gelu(v); },
                   +[](const Var& v) { return leaky_relu(v, 0.2); },
                   +[](const Var& v) { return abs(v); }}) {
        Var x = param(random_tensor({3, 4}, rng, 0.15, 2.0));  // keep away from kinks
        auto res = grad_check({x}, [&] { return mean_all(f(x)); });
        CHECK(res.max_rel_err < 1e-6);
    }
}

TEST_CASE("matmul / bmm / linear gradients") {
    Rng rng(11);
    Var a = param(random_tensor({3, 4}, rng));
    Var b = param(random_tensor({4, 5}, rng));
    auto res = grad_check({a, b}, [&] { return mean_all(matmul(a, b)); });
    CHECK(res.max_rel_err < 1e-6);

    Var ba = param(random_tensor({2, 3, 4}, rng));
    Var bb = param(random_tensor({2, 4, 5}, rng));
    res = grad_check({ba, bb}, [&] { return mean_all(bmm(ba, bb)); });
    CHECK(res.max_rel_err < 1e-6);

    Var x = param(random_tensor({5, 4}, rng));
    Var w = param(random_tensor({3, 4}, rng));
    Var bias = param(random_tensor({3}, rng));
    res = grad_check({x, w, bias}, [&] { return mean_all(linear(x, w, bias)); });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("structure op gradients") {
    Rng rng(13);
    Var a = param(random_tensor({2, 3, 4}, rng));
    Var b = param(random_tensor({2, 2, 4}, rng));
    auto res = grad_check({a, b}, [&] {
        Var c = concat({a, b}, 1);          // (2,5,4)
        Var s = slice(c, 1, 1, 3);          // (2,3,4)
        Var t = transpose_last2(s);         // (2,4,3)
        return mean_all(mul(t, t));
    });
    CHECK(res.max_rel_err < 1e-6);

    // take with zero-fill entries
    auto idx = std::make_shared<std::vector<Dim>>(std::vector<Dim>{0, 3, -1, 5, 2, -1});
    Var x = param(random_tensor({6}, rng));
    res = grad_check({x}, [&] { return mean_all(take(x, idx, {6})); });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("softmax rows sum to one and gradients pass") {
    Rng rng(17);
    Var x = param(random_tensor({4, 6}, rng, -3, 3));
    Var y = softmax_lastdim(x);
    for (Dim r = 0; r < 4; ++r) {
        double s = 0;
        for (Dim k = 0; k < 6; ++k) s += y->val.at(r, k);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    Tensor weights = random_tensor({4, 6}, rng);
    auto res = grad_check({x}, [&] {
        return mean_all(mul(softmax_lastdim(x), constant(weights)));
    });
    CHECK(res.max_rel_err < 1e-6);

    // additive mask suppresses entries
    Tensor mask({2, 3});
    mask.fill(0.0);
    mask.at(0, 2) = -1e30;
    Var z = param(random_tensor({2, 3}, rng));
    Var sm = softmax_lastdim(z, mask);
    CHECK(sm->val.at(0, 2) == 0.0);
    double s0 = sm->val.at(0, 0) + sm->val.at(0, 1);
    CHECK(s0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("layer_norm gradients") {
    Rng rng(19);
    Var x = param(random_tensor({5, 8}, rng, -2, 2));
    Var g = param(random_tensor({8}, rng, 0.5, 1.5));
    Var b = param(random_tensor({8}, rng));
    Tensor w = random_tensor({5, 8}, rng);
    auto res = grad_check({x, g, b}, [&] {
        return mean_all(mul(layer_norm(x, g, b), constant(w)));
    });
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("conv2d matches direct stencil and gradients pass") {
    Rng rng(23);
    Var x = param(random_tensor({2, 3, 5, 6}, rng));
    Var w = param(random_tensor({4, 3, 3, 3}, rng));
    Var b = param(random_tensor({4}, rng));
    Var y = conv2d(x, w, b, 1, 1);
    CHECK(y->val.shape() == core::Shape{2, 4, 5, 6});

    // independent direct evaluation at a few sites
    for (auto [n, f, oy, ox] : std::vector<std::array<Dim, 4>>{
             {0, 0, 0, 0}, {1, 3, 4, 5}, {0, 2, 2, 3}}) {
        double s = b->val[f];
        for (Dim c = 0; c < 3; ++c)
            for (Dim ky = 0; ky < 3; ++ky)
                for (Dim kx = 0; kx < 3; ++kx) {
                    Dim iy = oy + ky - 1, ix = ox + kx - 1;
                    if (iy < 0 || iy >= 5 || ix < 0 || ix >= 6) continue;
                    s += w->val.at(f, c, ky, kx) * x->val.at(n, c, iy, ix);
                }
        CHECK(y->val.at(n, f, oy, ox) == doctest::Approx(s).epsilon(1e-12));
    }

    auto res = grad_check({x, w, b}, [&] { return mean_all(abs(conv2d(x, w, b, 2, 1))); });
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("conv_transpose2d inverts conv2d geometry and gradients pass") {
    Rng rng(29);
    Var x = param(random_tensor({1, 3, 4, 5}, rng));
    Var w = param(random_tensor({3, 2, 4, 4}, rng));
    Var b = param(random_tensor({2}, rng));
    Var y = conv_transpose2d(x, w, b, 2, 1);
    CHECK(y->val.shape() == core::Shape{1, 2, 8, 10});
    auto res = grad_check({x, w, b},
                          [&] { return mean_all(abs(conv_transpose2d(x, w, b, 2, 1))); });
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("temporal_conv same and valid modes") {
    Rng rng(31);
    Var x = param(random_tensor({5, 3, 2, 2}, rng));
    Var w = param(random_tensor({4, 3, 3}, rng));
    Var b = param(random_tensor({4}, rng));
    CHECK(temporal_conv(x, w, b, true)->val.shape() == core::Shape{5, 4, 2, 2});
    CHECK(temporal_conv(x, w, b, false)->val.shape() == core::Shape{3, 4, 2, 2});

    // full-extent valid kernel reduces T to 1
    Var wfull = param(random_tensor({4, 3, 5}, rng));
    CHECK(temporal_conv(x, wfull, b, false)->val.shape() == core::Shape{1, 4, 2, 2});

    auto res = grad_check({x, w, b}, [&] { return mean_all(abs(temporal_conv(x, w, b, true))); });
    CHECK(res.max_rel_err < 1e-5);
    res = grad_check({x, wfull, b},
                     [&] { return mean_all(abs(temporal_conv(x, wfull, b, false))); });
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("depthwise_conv2d stencil, same-ceil padding, gradients") {
    Rng rng(37);
    Var x = param(random_tensor({1, 3, 6, 7}, rng));
    Var w = param(random_tensor({3, 3, 3}, rng));
    Var b = param(random_tensor({3}, rng));
    Var y = depthwise_conv2d(x, w, b, 1, 1, 1, 1, 1);
    CHECK(y->val.shape() == core::Shape{1, 3, 6, 7});
    double s = b->val[1];
    for (Dim ky = 0; ky < 3; ++ky)
        for (Dim kx = 0; kx < 3; ++kx) {
            Dim iy = 2 + ky - 1, ix = 3 + kx - 1;
            s += w->val.at(1, ky, kx) * x->val.at(0, 1, iy, ix);
        }
    CHECK(y->val.at(0, 1, 2, 3) == doctest::Approx(s).epsilon(1e-12));

    auto res = grad_check({x, w, b}, [&] {
        return mean_all(abs(depthwise_conv2d(x, w, b, 2, 1, 2, 1, 2)));
    });
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("warp_bilinear identity at zero flow and gradients") {
    Rng rng(41);
    Var img = param(random_tensor({2, 5, 6}, rng));
    Var zero = param(Tensor::zeros({2, 5, 6}));
    Tensor validity;
    Var out = warp_bilinear(img, zero, &validity);
    for (Dim i = 0; i < out->val.numel(); ++i) CHECK(out->val[i] == img->val[i]);
    for (Dim i = 0; i < validity.numel(); ++i) CHECK(validity[i] == 1.0);

    // generic fractional flow, interior samples: both grads must check out
    Var flow = param(Tensor::zeros({2, 5, 6}));
    for (Dim i = 0; i < flow->val.numel(); ++i) flow->val[i] = rng.uniform(-0.4, 0.4) + 0.17;
    Tensor w = random_tensor({2, 5, 6}, rng);
    auto res = grad_check({img, flow}, [&] {
        return mean_all(mul(warp_bilinear(img, flow), constant(w)));
    });
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("bce_with_logits values and gradient") {
    Var logits = param(Tensor::zeros({2, 2}));
    Tensor targets({2, 2});
    targets[0] = 1;
    targets[1] = 0;
    targets[2] = 1;
    targets[3] = 0;
    Var l = bce_with_logits(logits, targets);
    CHECK(l->val[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Rng rng(43);
    Var z = param(random_tensor({3, 3}, rng, -2, 2));
    Tensor t = random_tensor({3, 3}, rng, 0, 1);
    auto res = grad_check({z}, [&] { return bce_with_logits(z, t); });
    CHECK(res.max_rel_err < 1e-6);

    // saturated correct predictions drive the loss to ~0
    Var sat = param(Tensor::from({2}, {40.0, -40.0}));
    Tensor tt = Tensor::from({2}, {1.0, 0.0});
    CHECK(bce_with_logits(sat, tt)->val[0] < 1e-10);
}

TEST_CASE("masked_l1_mean and forward_diff") {
    Var a = param(Tensor::from({1, 2, 2}, {1, 2, 3, 4}));
    Var b = param(Tensor::from({1, 2, 2}, {1, 1, 1, 1}));
    Tensor m = Tensor::from({1, 2, 2}, {0, 1, 1, 0});
    CHECK(masked_l1_mean(a, b, m)->val[0] == doctest::Approx((1 + 2) / 2.0));
    Tensor empty = Tensor::zeros({1, 2, 2});
    CHECK(masked_l1_mean(a, b, empty)->val[0] == 0.0);

    // plane x -> d/dx = 1 interior, 0 at last column
    Tensor plane({1, 3, 4});
    for (Dim y = 0; y < 3; ++y)
        for (Dim x = 0; x < 4; ++x) plane.at(0, y, x) = static_cast<double>(x);
    Var p = param(plane);
    Var dx = forward_diff(p, 0);
    CHECK(dx->val.at(0, 1, 1) == 1.0);
    CHECK(dx->val.at(0, 1, 3) == 0.0);
    Var dy = forward_diff(p, 1);
    CHECK(dy->val.max_abs() == 0.0);

    Rng rng(47);
    Var x = param(random_tensor({2, 3, 4}, rng));
    auto res = grad_check({x}, [&] {
        return add(mean_all(abs(forward_diff(x, 0))), mean_all(abs(forward_diff(x, 1))));
    });
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("adam reduces a quadratic and checkpoint round trips") {
    Rng rng(53);
    Var x = param(random_tensor({4}, rng, 1.0, 2.0));
    nn::Adam opt({x}, 0.05);
    double first = 0;
    for (int it = 0; it < 200; ++it) {
        Var loss = mean_all(mul(x, x));
        if (it == 0) first = loss->val[0];
        backward(loss);
        opt.step();
    }
    Var final_loss = mean_all(mul(x, x));
    CHECK(final_loss->val[0] < 0.01 * first);

    core::Checkpoint ck;
    ck.config_json = "{\"answer\":42}";
    ck.tensors["x"] = x->val.clone();
    ck.tensors["y"] = random_tensor({2, 3}, rng);
    save_checkpoint("/tmp/fgvi_test.ckpt", ck);
    auto loaded = core::load_checkpoint("/tmp/fgvi_test.ckpt");
    CHECK(loaded.config_json == ck.config_json);
    REQUIRE(loaded.tensors.count("y") == 1);
    for (Dim i = 0; i < 6; ++i) CHECK(loaded.tensors["y"][i] == ck.tensors["y"][i]);

    std::ofstream bad("/tmp/fgvi_bad.ckpt", std::ios::binary);
    bad << "NOTACKPT";
    bad.close();
    CHECK_THROWS_AS(core::load_checkpoint("/tmp/fgvi_bad.ckpt"), FormatError);
}

TEST_CASE("module registration and state dict round trip") {
    Rng rng(59);
    nn::Mlp mlp(4, 8, 3, rng);
    auto names = mlp.named_params();
    CHECK(names.size() == 4);  // fc1.w fc1.b fc2.w fc2.b
    auto state = mlp.state_dict();
    nn::Mlp mlp2(4, 8, 3, rng);
    mlp2.load_state_dict(state);
    for (size_t i = 0; i < names.size(); ++i) {
        const auto& [n, v] = names[i];
        const auto& v2 = mlp2.named_params()[i].second;
        for (Dim j = 0; j < v->val.numel(); ++j) CHECK(v->val[j] == v2->val[j]);
    }
}
