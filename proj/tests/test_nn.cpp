#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "anymodal/checkpoint.hpp"
#include "anymodal/nn.hpp"
#include "anymodal/optim.hpp"

using namespace anymodal;

namespace {

// generic scalar loss: sum of elementwise products with fixed coefficients
Tensor coeffs_like(const Tensor & t, uint64_t seed) {
    Tensor c(t.shape);
    Rng    rng(seed);
    for (auto & v : c.data) {
        v = rng.uniform(-1.0, 1.0);
    }
    return c;
}

double weighted_sum(const Tensor & y, const Tensor & c) {
    double acc = 0.0;
    for (size_t i = 0; i < y.data.size(); ++i) {
        acc += y.data[i] * c.data[i];
    }
    return acc;
}

Parameter random_param(const char * name, std::vector<int> dims, uint64_t seed) {
    Parameter p;
    p.name = name;
    p.init_shape(dims);
    Rng rng(seed);
    for (auto & v : p.value.data) {
        v = rng.uniform(-0.8, 0.8);
    }
    return p;
}

} // namespace

TEST_CASE("layernorm maps a constant row to zero before affine") {
    LayerNorm ln;
    ln.setup("ln", 6);
    Tensor x({2, 6});
    for (int c = 0; c < 6; ++c) {
        x.at(0, c) = 3.25;
        x.at(1, c) = -1.5;
    }
    const Tensor y = ln.forward(x);
    for (double v : y.data) {
        CHECK(std::fabs(v) < 1e-6);
    }
}

TEST_CASE("cross-entropy of confident correct logits approaches zero") {
    Tensor logits({3, 5});
    std::vector<int> targets = {1, 4, 0};
    for (int t = 0; t < 3; ++t) {
        logits.at(t, targets[(size_t) t]) = 30.0;
    }
    CHECK(cross_entropy(logits, targets) < 1e-9);

    // uniform logits sit at ln(vocab)
    Tensor flat({4, 11});
    CHECK(cross_entropy(flat, {0, 5, 7, 10}) == doctest::Approx(std::log(11.0)).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(flat, {0, 1}), InvalidInput);
    CHECK_THROWS_AS(cross_entropy(flat, {0, 1, 2, 99}), InvalidInput);
}

TEST_CASE("finite differences: linear / matmul") {
    Linear lin;
    Rng    rng(1);
    lin.setup("lin", 7, 4, rng);
    Parameter x = random_param("x", {5, 7}, 2);
    Tensor    c;

    auto loss = [&] {
        const Tensor y = lin.forward(x.value);
        if (c.data.empty()) {
            c = coeffs_like(y, 3);
        }
        const Tensor dx = lin.backward(c);
        for (size_t i = 0; i < dx.data.size(); ++i) {
            x.grad.data[i] += dx.data[i];
        }
        return weighted_sum(y, c);
    };
    std::vector<Parameter *> params = {&x, &lin.w, &lin.b};
    const auto report = grad_check(loss, params, 1e-3);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("finite differences: add") {
    Parameter a = random_param("a", {5, 7}, 4);
    Parameter b = random_param("b", {5, 7}, 5);
    Tensor    c;
    auto loss = [&] {
        const Tensor y = add(a.value, b.value);
        if (c.data.empty()) {
            c = coeffs_like(y, 6);
        }
        for (size_t i = 0; i < c.data.size(); ++i) {
            a.grad.data[i] += c.data[i];
            b.grad.data[i] += c.data[i];
        }
        return weighted_sum(y, c);
    };
    const auto report = grad_check(loss, {&a, &b}, 1e-3);
    CHECK(report.pass);
}

TEST_CASE("finite differences: layernorm") {
    LayerNorm ln;
    ln.setup("ln", 7);
    Parameter x = random_param("x", {5, 7}, 7);
    Tensor    c;
    auto loss = [&] {
        const Tensor y = ln.forward(x.value);
        if (c.data.empty()) {
            c = coeffs_like(y, 8);
        }
        const Tensor dx = ln.backward(c);
        for (size_t i = 0; i < dx.data.size(); ++i) {
            x.grad.data[i] += dx.data[i];
        }
        return weighted_sum(y, c);
    };
    const auto report = grad_check(loss, {&x, &ln.gamma, &ln.beta}, 1e-3);
    CHECK(report.pass);
}

TEST_CASE("finite differences: softmax") {
    Parameter x = random_param("x", {5, 7}, 9);
    Tensor    c;
    auto loss = [&] {
        const Tensor y = softmax_rows(x.value);
        if (c.data.empty()) {
            c = coeffs_like(y, 10);
        }
        const Tensor dx = softmax_rows_backward(y, c);
        for (size_t i = 0; i < dx.data.size(); ++i) {
            x.grad.data[i] += dx.data[i];
        }
        return weighted_sum(y, c);
    };
    const auto report = grad_check(loss, {&x}, 1e-3);
    CHECK(report.pass);
}

TEST_CASE("finite differences: SwiGLU") {
    SwiGLU ff;
    Rng    rng(11);
    ff.setup("ff", 7, 9, 7, rng);
    Parameter x = random_param("x", {5, 7}, 12);
    Tensor    c;
    auto loss = [&] {
        const Tensor y = ff.forward(x.value);
        if (c.data.empty()) {
            c = coeffs_like(y, 13);
        }
        const Tensor dx = ff.backward(c);
        for (size_t i = 0; i < dx.data.size(); ++i) {
            x.grad.data[i] += dx.data[i];
        }
        return weighted_sum(y, c);
    };
    std::vector<Parameter *> params = {&x};
    ff.collect(params);
    const auto report = grad_check(loss, params, 1e-3);
    CHECK(report.pass);
}

TEST_CASE("finite differences: embedding lookup") {
    Embedding emb;
    Rng       rng(14);
    emb.setup("emb", 10, 6, rng, 0.5);
    const std::vector<int> ids = {1, 5, 3, 5, 0};
    Tensor c;
    auto loss = [&] {
        const Tensor y = emb.forward(ids);
        if (c.data.empty()) {
            c = coeffs_like(y, 15);
        }
        emb.backward(c);
        return weighted_sum(y, c);
    };
    const auto report = grad_check(loss, {&emb.table}, 1e-3);
    CHECK(report.pass);

    CHECK_THROWS_AS(emb.forward({11}), InvalidInput);
}

TEST_CASE("finite differences: scaled dot-product attention (self, causal, cross)") {
    for (AttnMask mask : {AttnMask::none, AttnMask::causal}) {
        MultiHeadAttention mha;
        Rng                rng(16);
        mha.setup("mha", 8, 2, rng);
        Parameter x = random_param("x", {5, 8}, 17);
        Tensor    c;
        auto loss = [&] {
            const Tensor y = mha.forward(x.value, x.value, mask);
            if (c.data.empty()) {
                c = coeffs_like(y, 18);
            }
            const auto [dq, dkv] = mha.backward(c);
            for (size_t i = 0; i < dq.data.size(); ++i) {
                x.grad.data[i] += dq.data[i] + dkv.data[i];
            }
            return weighted_sum(y, c);
        };
        std::vector<Parameter *> params = {&x};
        mha.collect(params);
        const auto report = grad_check(loss, params, 1e-3);
        CHECK(report.pass);
    }

    // cross-attention with distinct kv input
    MultiHeadAttention mha;
    Rng                rng(19);
    mha.setup("xattn", 8, 4, rng);
    Parameter q  = random_param("q", {3, 8}, 20);
    Parameter kv = random_param("kv", {6, 8}, 21);
    Tensor    c;
    auto loss = [&] {
        const Tensor y = mha.forward(q.value, kv.value, AttnMask::none);
        if (c.data.empty()) {
            c = coeffs_like(y, 22);
        }
        const auto [dq, dkv] = mha.backward(c);
        for (size_t i = 0; i < dq.data.size(); ++i) {
            q.grad.data[i] += dq.data[i];
        }
        for (size_t i = 0; i < dkv.data.size(); ++i) {
            kv.grad.data[i] += dkv.data[i];
        }
        return weighted_sum(y, c);
    };
    std::vector<Parameter *> params = {&q, &kv};
    mha.collect(params);
    const auto report = grad_check(loss, params, 1e-3);
    CHECK(report.pass);
}

TEST_CASE("finite differences: cross-entropy") {
    Parameter logits = random_param("logits", {5, 7}, 23);
    const std::vector<int> targets = {2, 0, 6, 3, 3};
    auto loss = [&] {
        Tensor dl;
        const double l = cross_entropy(logits.value, targets, &dl);
        for (size_t i = 0; i < dl.data.size(); ++i) {
            logits.grad.data[i] += dl.data[i];
        }
        return l;
    };
    const auto report = grad_check(loss, {&logits}, 1e-3);
    CHECK(report.pass);
}

TEST_CASE("shape mismatches carry both shapes in the message") {
    Linear lin;
    Rng    rng(24);
    lin.setup("lin", 7, 4, rng);
    Tensor bad({5, 6});
    try {
        lin.forward(bad);
        FAIL("expected InvalidInput");
    } catch (const InvalidInput & e) {
        const std::string msg = e.what();
        CHECK(msg.find("[5x6]") != std::string::npos);
        CHECK(msg.find("[7x4]") != std::string::npos);
    }
}

TEST_CASE("adamw descends, respects zero grad, and matches a hand-unrolled trace") {
    // one step on f(x) = x^2 from x = 1 moves toward 0
    {
        Parameter x;
        x.name = "x";
        x.init_shape({1});
        x.value.data[0] = 1.0;
        AdamWConfig cfg;
        cfg.lr           = 0.1;
        cfg.weight_decay = 0.0;
        AdamW opt(cfg);
        opt.bind({&x});
        x.grad.data[0] = 2.0 * x.value.data[0];
        opt.step(1);
        CHECK(x.value.data[0] < 1.0);
        CHECK(x.value.data[0] > 0.0);
    }

    // zero grad, zero weight decay: parameters unchanged
    {
        Parameter x;
        x.name = "x";
        x.init_shape({3});
        x.value.data = {0.5, -2.0, 7.0};
        AdamWConfig cfg;
        cfg.weight_decay = 0.0;
        AdamW opt(cfg);
        opt.bind({&x});
        opt.step(1);
        CHECK(x.value.data == std::vector<double>{0.5, -2.0, 7.0});
    }

    // 3-step trace on a 2-parameter toy vs a hand-unrolled AdamW oracle
    {
        Parameter a, b;
        a.name = "a";
        b.name = "b";
        a.init_shape({1});
        b.init_shape({1});
        a.value.data[0] = 0.7;
        b.value.data[0] = -0.3;
        AdamWConfig cfg;
        cfg.lr           = 0.05;
        cfg.beta1        = 0.9;
        cfg.beta2        = 0.95;
        cfg.eps          = 1e-8;
        cfg.weight_decay = 0.05;
        AdamW opt(cfg);
        opt.bind({&a, &b});

        const double grads[3][2] = {{0.3, -0.2}, {-0.1, 0.4}, {0.25, 0.05}};

        // oracle state
        double av = 0.7, bv = -0.3;
        double am = 0, avv = 0, bm = 0, bvv = 0;
        for (int k = 1; k <= 3; ++k) {
            a.zero_grad();
            b.zero_grad();
            a.grad.data[0] = grads[k - 1][0];
            b.grad.data[0] = grads[k - 1][1];
            opt.step(1);

            const double bc1 = 1.0 - std::pow(cfg.beta1, k);
            const double bc2 = 1.0 - std::pow(cfg.beta2, k);
            am  = cfg.beta1 * am + (1 - cfg.beta1) * grads[k - 1][0];
            avv = cfg.beta2 * avv + (1 - cfg.beta2) * grads[k - 1][0] * grads[k - 1][0];
            bm  = cfg.beta1 * bm + (1 - cfg.beta1) * grads[k - 1][1];
            bvv = cfg.beta2 * bvv + (1 - cfg.beta2) * grads[k - 1][1] * grads[k - 1][1];
            av -= cfg.lr * ((am / bc1) / (std::sqrt(avv / bc2) + cfg.eps) + cfg.weight_decay * av);
            bv -= cfg.lr * ((bm / bc1) / (std::sqrt(bvv / bc2) + cfg.eps) + cfg.weight_decay * bv);

            CHECK(a.value.data[0] == doctest::Approx(av).epsilon(1e-7));
            CHECK(b.value.data[0] == doctest::Approx(bv).epsilon(1e-7));
        }
    }
}

TEST_CASE("lr schedule: linear warmup then cosine decay to zero") {
    AdamWConfig cfg;
    cfg.lr            = 1.0;
    cfg.warmup_tokens = 100;
    cfg.total_tokens  = 1100;
    AdamW opt(cfg);
    opt.bind({});
    CHECK(opt.current_lr() == doctest::Approx(0.0));
    opt.step(50);
    CHECK(opt.current_lr() == doctest::Approx(0.5));
    opt.step(50);
    CHECK(opt.current_lr() == doctest::Approx(1.0));
    opt.step(500); // halfway through the cosine span
    CHECK(opt.current_lr() == doctest::Approx(0.5).epsilon(1e-9));
    opt.step(500);
    CHECK(opt.current_lr() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("grad_check: exact on linear, catches corrupted gradients") {
    // linear model: errors at float-noise level
    {
        Linear lin;
        Rng    rng(30);
        lin.setup("lin", 4, 3, rng);
        Parameter x = random_param("x", {2, 4}, 31);
        Tensor    c;
        auto loss = [&] {
            const Tensor y = lin.forward(x.value);
            if (c.data.empty()) {
                c = coeffs_like(y, 32);
            }
            const Tensor dx = lin.backward(c);
            for (size_t i = 0; i < dx.data.size(); ++i) {
                x.grad.data[i] += dx.data[i];
            }
            return weighted_sum(y, c);
        };
        const auto report = grad_check(loss, {&lin.w, &lin.b, &x}, 1e-6);
        CHECK(report.pass);
        CHECK(report.max_rel_err < 1e-6);
    }

    // negative control: corrupt the analytic gradient
    {
        Parameter x = random_param("x", {2, 3}, 33);
        Tensor    c = coeffs_like(x.value, 34);
        auto loss = [&] {
            for (size_t i = 0; i < c.data.size(); ++i) {
                x.grad.data[i] += c.data[i] * 1.5; // wrong by 50%
            }
            return weighted_sum(x.value, c);
        };
        const auto report = grad_check(loss, {&x}, 1e-3);
        CHECK(!report.pass);
    }
}

TEST_CASE("grad_check: two-layer transformer blocks at dim 16") {
    const int dim = 16, T = 6, vocab = 11;
    Rng rng(40);

    struct Block {
        LayerNorm          ln1, ln2;
        MultiHeadAttention attn;
        SwiGLU             ff;
    };
    Block blocks[2];
    for (int i = 0; i < 2; ++i) {
        const std::string base = "blk" + std::to_string(i);
        blocks[i].ln1.setup(base + ".ln1", dim);
        blocks[i].ln2.setup(base + ".ln2", dim);
        blocks[i].attn.setup(base + ".attn", dim, 4, rng);
        blocks[i].ff.setup(base + ".ff", dim, 24, dim, rng);
    }
    Linear head;
    head.setup("head", dim, vocab, rng);
    Parameter x = random_param("x", {T, dim}, 41);
    const std::vector<int> targets = {3, 0, 10, 7, 2, 5};

    auto loss = [&] {
        Tensor h = x.value;
        Tensor n1[2], a[2], n2[2], f[2];
        for (int i = 0; i < 2; ++i) {
            n1[i] = blocks[i].ln1.forward(h);
            a[i]  = blocks[i].attn.forward(n1[i], n1[i], AttnMask::none);
            h     = add(h, a[i]);
            n2[i] = blocks[i].ln2.forward(h);
            f[i]  = blocks[i].ff.forward(n2[i]);
            h     = add(h, f[i]);
        }
        Tensor logits = head.forward(h);
        Tensor dlogits;
        const double l = cross_entropy(logits, targets, &dlogits);

        Tensor dh = head.backward(dlogits);
        for (int i = 1; i >= 0; --i) {
            const Tensor df  = blocks[i].ff.backward(dh);
            const Tensor dn2 = blocks[i].ln2.backward(df);
            dh = add(dh, dn2);
            const auto [dq, dkv] = blocks[i].attn.backward(dh);
            const Tensor dn1 = blocks[i].ln1.backward(add(dq, dkv));
            dh = add(dh, dn1);
        }
        for (size_t i = 0; i < dh.data.size(); ++i) {
            x.grad.data[i] += dh.data[i];
        }
        return l;
    };

    std::vector<Parameter *> params = {&x};
    for (auto & b : blocks) {
        b.ln1.collect(params);
        b.ln2.collect(params);
        b.attn.collect(params);
        b.ff.collect(params);
    }
    head.collect(params);

    const auto report = grad_check(loss, params, 1e-3, 1e-3, 8);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("checkpoint container round-trips parameters and optimizer state") {
    Rng    rng(50);
    Linear lin;
    lin.setup("lin", 3, 2, rng);
    AdamWConfig cfg;
    AdamW       opt(cfg);
    std::vector<Parameter *> params;
    lin.collect(params);
    opt.bind(params);

    // one step so moments are nonzero
    for (Parameter * p : params) {
        for (auto & g : p->grad.data) {
            g = 0.25;
        }
    }
    opt.step(10);

    save_checkpoint("./ckpt_test.bin", "{\"kind\":\"test\"}", params, &opt);

    Linear lin2;
    Rng    rng2(99);
    lin2.setup("lin", 3, 2, rng2);
    std::vector<Parameter *> params2;
    lin2.collect(params2);
    AdamW opt2(cfg);
    opt2.bind(params2);

    const auto ck = load_checkpoint("./ckpt_test.bin");
    CHECK(ck.config_json() == "{\"kind\":\"test\"}");
    ck.restore_params(params2);
    CHECK(ck.restore_optimizer(opt2));
    CHECK(opt2.step_count() == 1);
    CHECK(opt2.tokens_seen() == 10);
    // f32 serialization: equality after float narrowing
    for (size_t i = 0; i < params.size(); ++i) {
        for (size_t j = 0; j < params[i]->value.data.size(); ++j) {
            CHECK((float) params[i]->value.data[j] == (float) params2[i]->value.data[j]);
        }
    }
}
