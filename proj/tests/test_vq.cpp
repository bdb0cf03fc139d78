#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "anymodal/codebook.hpp"
#include "anymodal/polygon.hpp"
#include "anymodal/synth.hpp"
#include "anymodal/vq_tokenizers.hpp"

using namespace anymodal;

TEST_CASE("kmeans_init recovers separable clusters and degenerate layouts") {
    // two separated point clusters, K=2: centers are the cluster means
    std::vector<double> pts;
    for (int i = 0; i < 10; ++i) {
        pts.push_back(0.0 + 0.01 * i); // cluster A around 0.045
        pts.push_back(1.0);
    }
    for (int i = 0; i < 10; ++i) {
        pts.push_back(10.0 + 0.01 * i); // cluster B around 10.045
        pts.push_back(-1.0);
    }
    Codebook book = kmeans_init(pts.data(), 20, 2, 2, 7);
    std::vector<std::array<double, 2>> centers = {{book.vectors[0], book.vectors[1]},
                                                  {book.vectors[2], book.vectors[3]}};
    std::sort(centers.begin(), centers.end());
    CHECK(centers[0][0] == doctest::Approx(0.045).epsilon(1e-9));
    CHECK(centers[0][1] == doctest::Approx(1.0));
    CHECK(centers[1][0] == doctest::Approx(10.045).epsilon(1e-9));
    CHECK(centers[1][1] == doctest::Approx(-1.0));

    // K = N: every center equals one sample
    std::vector<double> five = {0.0, 1.0, 2.0, 3.5, 9.0};
    Codebook full = kmeans_init(five.data(), 5, 1, 5, 3);
    std::multiset<double> got(full.vectors.begin(), full.vectors.end());
    std::multiset<double> want(five.begin(), five.end());
    CHECK(got == want);

    // N < K rejected
    CHECK_THROWS_AS(kmeans_init(five.data(), 3, 1, 5, 0), InvalidInput);
}

TEST_CASE("kmeans on 100 seeded points reaches a Lloyd fixed point") {
    Rng rng(99);
    std::vector<double> pts(100 * 3);
    for (auto & v : pts) {
        v = rng.uniform(-2.0, 2.0);
    }
    const Codebook book = kmeans_init(pts.data(), 100, 3, 4, 5);

    // oracle: recompute assignment by exhaustive scan, centers must equal the
    // mean of their assigned points (converged Lloyd iteration)
    std::vector<double> sums(4 * 3, 0.0);
    std::vector<int>    counts(4, 0);
    for (int i = 0; i < 100; ++i) {
        int    best   = -1;
        double best_d = 1e300;
        for (int k = 0; k < 4; ++k) {
            double d = 0.0;
            for (int j = 0; j < 3; ++j) {
                const double diff = pts[(size_t) (i * 3 + j)] - book.vectors[(size_t) (k * 3 + j)];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best   = k;
            }
        }
        counts[(size_t) best]++;
        for (int j = 0; j < 3; ++j) {
            sums[(size_t) (best * 3 + j)] += pts[(size_t) (i * 3 + j)];
        }
    }
    for (int k = 0; k < 4; ++k) {
        REQUIRE(counts[(size_t) k] > 0);
        for (int j = 0; j < 3; ++j) {
            CHECK(book.vectors[(size_t) (k * 3 + j)] ==
                  doctest::Approx(sums[(size_t) (k * 3 + j)] / counts[(size_t) k]).epsilon(1e-4));
        }
    }
}

TEST_CASE("quantize: identity, tie-breaking, scan oracle, NaN rejection") {
    Codebook book;
    book.K = 8;
    book.D = 4;
    Rng rng(11);
    book.vectors.resize(32);
    for (auto & v : book.vectors) {
        v = rng.uniform(-1.0, 1.0);
    }
    book.ema_counts.assign(8, 1.0);
    book.ema_sums = book.vectors;

    // x equals an entry
    const double * e7 = book.vectors.data() + 7 * 4;
    const auto r = quantize(book, e7);
    CHECK(r.index == 7);
    CHECK(r.dist2 == 0.0);

    // two equidistant entries: lower index wins
    Codebook tie;
    tie.K = 2;
    tie.D = 1;
    tie.vectors    = {1.0, -1.0};
    tie.ema_counts = {1.0, 1.0};
    tie.ema_sums   = tie.vectors;
    const double zero = 0.0;
    CHECK(quantize(tie, &zero).index == 0);

    // random queries match a linear-scan oracle
    for (int t = 0; t < 500; ++t) {
        double x[4];
        for (auto & v : x) {
            v = rng.uniform(-2.0, 2.0);
        }
        int    best   = 0;
        double best_d = 1e300;
        for (int k = 0; k < 8; ++k) {
            double d = 0.0;
            for (int j = 0; j < 4; ++j) {
                const double diff = x[j] - book.vectors[(size_t) (k * 4 + j)];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best   = k;
            }
        }
        CHECK(quantize(book, x).index == best);
    }

    double bad[4] = {0.0, std::nan(""), 0.0, 0.0};
    CHECK_THROWS_AS(quantize(book, bad), InvalidInput);
}

TEST_CASE("ema_update: full replacement, empty batch, two-batch closed form") {
    auto fresh = [] {
        Codebook b;
        b.K = 2;
        b.D = 1;
        b.vectors    = {0.0, 10.0};
        b.ema_counts = {2.0, 2.0};
        b.ema_sums   = {0.0, 20.0};
        return b;
    };

    // decay = 0: one batch fully replaces the statistics
    {
        Codebook b = fresh();
        b.decay    = 0.0;
        const std::vector<double> batch = {1.0, 2.0, 9.0};
        const std::vector<int>    assign = {0, 0, 1};
        Rng rng(1);
        ema_update(b, batch.data(), assign, 3, rng);
        CHECK(b.vectors[0] == doctest::Approx(1.5));
        CHECK(b.vectors[1] == doctest::Approx(9.0));
    }

    // empty batch: stats decay-scaled, vectors unchanged
    {
        Codebook b = fresh();
        b.decay    = 0.9;
        Rng rng(1);
        ema_update(b, nullptr, {}, 0, rng);
        CHECK(b.vectors[0] == doctest::Approx(0.0));
        CHECK(b.vectors[1] == doctest::Approx(10.0));
        CHECK(b.ema_counts[0] == doctest::Approx(1.8));
    }

    // two sequential batches match the unrolled closed form within 1e-6
    {
        Codebook b = fresh();
        b.decay    = 0.99;
        Rng rng(1);
        const std::vector<double> b1 = {1.0, 3.0};
        const std::vector<int>    a1 = {0, 1};
        const std::vector<double> b2 = {-1.0, 5.0, 2.0};
        const std::vector<int>    a2 = {0, 1, 1};
        ema_update(b, b1.data(), a1, 2, rng);
        ema_update(b, b2.data(), a2, 3, rng);

        const double d = 0.99;
        // counts: c2 = d(d*c0 + (1-d)n1) + (1-d)n2
        const double c0_a = d * (d * 2.0 + (1 - d) * 1.0) + (1 - d) * 1.0;
        const double s0_a = d * (d * 0.0 + (1 - d) * 1.0) + (1 - d) * (-1.0);
        const double c1_a = d * (d * 2.0 + (1 - d) * 1.0) + (1 - d) * 2.0;
        const double s1_a = d * (d * 20.0 + (1 - d) * 3.0) + (1 - d) * 7.0;
        CHECK(b.ema_counts[0] == doctest::Approx(c0_a).epsilon(1e-9));
        CHECK(b.ema_counts[1] == doctest::Approx(c1_a).epsilon(1e-9));
        CHECK(b.vectors[0] == doctest::Approx(s0_a / c0_a).epsilon(1e-6));
        CHECK(b.vectors[1] == doctest::Approx(s1_a / c1_a).epsilon(1e-6));
    }
}

TEST_CASE("ema convergence: constant batch drives vectors to its cluster means") {
    Codebook b;
    b.K = 2;
    b.D = 1;
    b.decay      = 0.97;
    b.vectors    = {0.2, 5.0};
    b.ema_counts = {1.0, 1.0};
    b.ema_sums   = {0.2, 5.0};
    const std::vector<double> batch  = {1.0, 1.2, 6.0, 6.4};
    Rng rng(3);
    for (int n = 0; n < 200; ++n) {
        std::vector<int> assign(4);
        for (int i = 0; i < 4; ++i) {
            assign[(size_t) i] = quantize(b, &batch[(size_t) i]).index;
        }
        ema_update(b, batch.data(), assign, 4, rng);
    }
    CHECK(b.vectors[0] == doctest::Approx(1.1).epsilon(1e-3));
    CHECK(b.vectors[1] == doctest::Approx(6.2).epsilon(1e-3));
}

TEST_CASE("straight-through contract on a 10-dim toy VAE") {
    // encoder-output gradient assigned by backprop equals the finite
    // difference of the loss with respect to the quantized latent
    Rng    rng(21);
    SwiGLU enc, dec;
    const int in_dim = 10, latent = 8, heads = 4;
    enc.setup("enc", in_dim, 16, latent, rng);
    dec.setup("dec", latent, 16, in_dim, rng);

    std::vector<double> samples(64 * latent);
    Tensor x0({64, in_dim});
    for (auto & v : x0.data) {
        v = rng.uniform(-1.0, 1.0);
    }
    {
        const Tensor z0 = enc.infer(x0);
        std::copy(z0.data.begin(), z0.data.end(), samples.begin());
    }
    MemcodesQuantizer quant = MemcodesQuantizer::init(samples.data(), 64, latent, heads, 8, 5);

    Tensor x({1, in_dim});
    for (auto & v : x.data) {
        v = rng.uniform(-1.0, 1.0);
    }

    auto run = [&](const Tensor & zq) {
        const Tensor y = dec.infer(zq);
        Tensor dy;
        return recon_loss_continuous(ReconLoss::smooth_l1, y, x, dy, 1.0);
    };

    // forward + backward with straight-through copy
    const Tensor z = enc.forward(x);
    Tensor zq({1, latent});
    std::vector<int> ids((size_t) heads);
    quant.quantize_vec(z.data.data(), ids.data(), zq.data.data());
    const Tensor y = dec.forward(zq);
    Tensor dy;
    recon_loss_continuous(ReconLoss::smooth_l1, y, x, dy, 1.0);
    std::vector<Parameter *> params;
    enc.collect(params);
    dec.collect(params);
    for (auto * p : params) {
        p->zero_grad();
    }
    const Tensor dz = dec.backward(dy); // this is what the encoder receives

    const double h = 1e-4;
    for (int j = 0; j < latent; ++j) {
        Tensor zp = zq, zm = zq;
        zp.data[(size_t) j] += h;
        zm.data[(size_t) j] -= h;
        const double fd = (run(zp) - run(zm)) / (2.0 * h);
        const double an = dz.data[(size_t) j];
        CHECK(std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-8}) < 1e-3);
    }
}

TEST_CASE("memcodes emits one token per head and decode-requantize is idempotent") {
    Rng rng(31);
    std::vector<double> samples(128 * 12);
    for (auto & v : samples) {
        v = rng.uniform(-1.0, 1.0);
    }
    MemcodesQuantizer q = MemcodesQuantizer::init(samples.data(), 128, 12, 3, 16, 9);
    CHECK(q.heads == 3);
    CHECK(q.head_dim == 4);

    std::vector<double> x(12), xq(12), xq2(12);
    for (auto & v : x) {
        v = rng.uniform(-1.0, 1.0);
    }
    std::vector<int> ids(3), ids2(3);
    q.quantize_vec(x.data(), ids.data(), xq.data());
    q.quantize_vec(xq.data(), ids2.data(), xq2.data());
    CHECK(xq == xq2);
    std::vector<int> ids3(3);
    std::vector<double> xq3(12);
    q.quantize_vec(xq2.data(), ids3.data(), xq3.data());
    CHECK(ids2 == ids3);
}

TEST_CASE("mask tokenizer memorizes trivial training sets") {
    SpatialTokenizerConfig cfg;
    cfg.name       = "mask16";
    cfg.image_size = 64;
    cfg.patch_h    = 16;
    cfg.patch_w    = 16;
    cfg.vocab      = 64;
    cfg.latent_dim = 16;
    cfg.width      = 64;
    cfg.steps      = 1200;
    cfg.batch_images = 8;
    cfg.lr         = 4e-3;
    cfg.seed       = 4;

    // a single repeated mask (a centered disc)
    GridU8 disc(64, 64, 1, 0);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            const double dx = x - 31.5, dy = y - 31.5;
            disc.at(y, x) = dx * dx + dy * dy < 20 * 20 ? 1 : 0;
        }
    }
    std::vector<GridU8> masks(32, disc);
    TokenizerTrainReport rep;
    const SpatialTokenizer tok = train_mask_tokenizer(masks, cfg, &rep);
    CHECK(tok.cfg.tokens_per_image() == 16);
    CHECK(mask_tokenizer_iou(tok, {disc}) >= 0.99);

    // a full-image mask is a constant target
    GridU8 full(64, 64, 1, 1);
    std::vector<GridU8> fulls(32, full);
    const SpatialTokenizer tok2 = train_mask_tokenizer(fulls, cfg, nullptr);
    CHECK(mask_tokenizer_iou(tok2, {full}) >= 0.99);
}

TEST_CASE("path tokenizer: resampling fidelity, overfit, degeneracy") {
    // resampling a 4-corner square to 128 points preserves its raster mask
    std::vector<PolyPoint> square = {{0.25f, 0.25f}, {0.75f, 0.25f}, {0.75f, 0.75f}, {0.25f, 0.75f}};
    const auto rs = resample_polygon(square, 128);
    CHECK(rs.size() == 128);
    CHECK(mask_iou(rasterize_polygon(square, 64), rasterize_polygon(rs, 64)) >= 0.99);

    // degenerate polygon rejected at preprocessing
    std::vector<PolyPoint> line = {{0.1f, 0.1f}, {0.9f, 0.9f}, {0.5f, 0.5f}};
    CHECK_THROWS_AS(resample_polygon(line, 128), InvalidInput);

    // identity-capacity overfit on translated squares
    std::vector<std::vector<PolyPoint>> polys;
    Rng rng(8);
    for (int i = 0; i < 48; ++i) {
        const float cx = 0.3f + 0.4f * (float) rng.uniform();
        const float cy = 0.3f + 0.4f * (float) rng.uniform();
        const float h  = 0.1f + 0.1f * (float) rng.uniform();
        polys.push_back({{cx - h, cy - h}, {cx + h, cy - h}, {cx + h, cy + h}, {cx - h, cy + h}});
    }
    BottleneckVAEConfig cfg;
    cfg.name      = "path";
    cfg.n_tokens  = 16;
    cfg.slice_dim = 8;
    cfg.vocab     = 128;
    cfg.width     = 256;
    cfg.loss      = ReconLoss::mse;
    cfg.steps     = 2400;
    cfg.batch     = 32;
    cfg.lr        = 2e-3;
    cfg.seed      = 6;
    TokenizerTrainReport rep;
    const BottleneckVAE vae = train_path_tokenizer(polys, 128, cfg, &rep);
    CHECK(rep.holdout_metric >= 0.95); // rasterized IoU
}

TEST_CASE("pose tokenizer: 8 tokens, zero-vector reconstruction, beats flat codebook") {
    Rng rng(41);
    std::vector<std::vector<double>> data;
    // synthetic keypoint vectors: a base skeleton warped per sample
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> v(20);
        const double cx = rng.uniform(0.2, 0.8), cy = rng.uniform(0.2, 0.8), s = rng.uniform(0.05, 0.2);
        for (int k = 0; k < 10; ++k) {
            v[(size_t) (2 * k)]     = cx + s * rng.uniform(-1.0, 1.0);
            v[(size_t) (2 * k + 1)] = cy + s * ((double) k / 10.0 - 0.5) * 2.0;
        }
        data.push_back(v);
    }
    for (int i = 0; i < 200; ++i) {
        data.push_back(std::vector<double>(20, 0.0)); // zero poses in distribution
    }
    rng.shuffle(data); // the trainer holds out the tail

    BottleneckVAEConfig cfg;
    cfg.name      = "pose";
    cfg.input_dim = 20;
    cfg.n_tokens  = 8;
    cfg.slice_dim = 6;
    cfg.vocab     = 128;
    cfg.steps     = 1500;
    cfg.batch     = 64;
    cfg.lr        = 2e-3;
    cfg.seed      = 2;
    const BottleneckVAE vae = train_pose_tokenizer(data, cfg, nullptr);

    const std::vector<double> zero(20, 0.0);
    const auto ids = vae.encode_vec(zero);
    CHECK(ids.size() == 8);
    const auto rec = vae.decode_ids(ids);
    double sl1 = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double d = std::fabs(rec[(size_t) i]);
        sl1 += d < 1.0 ? 0.5 * d * d : d - 0.5;
    }
    CHECK(sl1 / 20.0 <= 0.01);

    // flat nearest-codeword baseline without a decoder (256 entries)
    std::vector<double> flat;
    for (const auto & v : data) {
        flat.insert(flat.end(), v.begin(), v.end());
    }
    const Codebook base = kmeans_init(flat.data(), (int) data.size(), 20, 128, 3);
    double vae_err = 0.0, base_err = 0.0;
    for (const auto & v : data) {
        const auto r = vae.decode_ids(vae.encode_vec(v));
        for (int i = 0; i < 20; ++i) {
            vae_err += std::fabs(r[(size_t) i] - v[(size_t) i]);
        }
        const auto q = quantize(base, v.data());
        for (int i = 0; i < 20; ++i) {
            base_err += std::fabs(base.vectors[(size_t) (q.index * 20 + i)] - v[(size_t) i]);
        }
    }
    CHECK(vae_err <= base_err);
}

TEST_CASE("global tokenizer reconstructs synthetic embeddings") {
    GenerationConfig gcfg;
    std::vector<std::vector<double>> embs;
    for (uint64_t s = 0; s < 220; ++s) {
        const auto sample = generate_sample(s, gcfg);
        std::vector<double> e(sample.payload.global_emb.begin(), sample.payload.global_emb.end());
        embs.push_back(std::move(e));
    }
    BottleneckVAEConfig cfg;
    cfg.name      = "global";
    cfg.input_dim = 64;
    cfg.n_tokens  = 16;
    cfg.slice_dim = 8;
    cfg.vocab     = 256;
    cfg.steps     = 700;
    cfg.batch     = 64;
    cfg.seed      = 12;
    TokenizerTrainReport rep;
    const BottleneckVAE vae = train_global_tokenizer(embs, cfg, &rep);
    CHECK(rep.holdout_metric >= 0.95); // mean held-out cosine

    // fewer tokens reconstruct no better on the same data
    BottleneckVAEConfig cfg4 = cfg;
    cfg4.n_tokens            = 4;
    TokenizerTrainReport rep4;
    train_global_tokenizer(embs, cfg4, &rep4);
    CHECK(rep.holdout_metric >= rep4.holdout_metric - 0.01);
}

TEST_CASE("spatial tokenize: 64 tokens in raster order, PSNR beats mean image") {
    GenerationConfig gcfg;
    std::vector<MultimodalSample> samples;
    for (uint64_t s = 0; s < 56; ++s) {
        samples.push_back(generate_sample(300 + s, gcfg));
    }

    SpatialTokenizerConfig cfg;
    cfg.name        = "rgb";
    cfg.image_size  = 64;
    cfg.in_channels = 3;
    cfg.patch_h     = 8;
    cfg.patch_w     = 8;
    cfg.latent_dim  = 32;
    cfg.width       = 96;
    cfg.vocab       = 192;
    cfg.loss        = ReconLoss::smooth_l1;
    cfg.steps       = 600;
    cfg.batch_images = 8;
    cfg.seed        = 13;

    std::vector<Tensor> images;
    for (const auto & s : samples) {
        images.push_back(patches_from_u8(s.payload.rgb, 8, 8, 1.0 / 255.0));
    }
    const SpatialTokenizer tok = train_spatial_tokenizer(images, {}, cfg, nullptr);

    const auto ids = tok.tokenize(images[0]);
    CHECK(ids.size() == 64);

    // raster order: patch (r, c) of the adapter matches direct pixel indexing
    const auto & rgb = samples[0].payload.rgb;
    for (int pr = 0; pr < 8; ++pr) {
        for (int pc = 0; pc < 8; ++pc) {
            const double got = images[0].at(pr * 8 + pc, 0);
            CHECK(got == doctest::Approx(rgb.at(pr * 8, pc * 8, 0) / 255.0));
        }
    }

    // held-out PSNR must beat the mean-image baseline
    GridF32 mean_img(64, 64, 3);
    for (size_t i = 0; i < 48; ++i) {
        for (size_t px = 0; px < mean_img.data.size(); ++px) {
            mean_img.data[px] += samples[i].payload.rgb.data[px] / 255.0f / 48.0f;
        }
    }
    double psnr_tok = 0.0, psnr_mean = 0.0;
    for (size_t i = 48; i < samples.size(); ++i) {
        GridF32 truth(64, 64, 3);
        for (size_t px = 0; px < truth.data.size(); ++px) {
            truth.data[px] = samples[i].payload.rgb.data[px] / 255.0f;
        }
        const Tensor patches = patches_from_u8(samples[i].payload.rgb, 8, 8, 1.0 / 255.0);
        const Tensor rec     = tok.detokenize(tok.tokenize(patches));
        const GridF32 recon  = grid_from_patches(rec, 64, 64, 3, 8, 8);
        psnr_tok += grid_psnr(truth, recon, 1.0);
        psnr_mean += grid_psnr(truth, mean_img, 1.0);
    }
    CHECK(psnr_tok > psnr_mean);

    // untrained tokenizer rejected
    SpatialTokenizer fresh;
    fresh.cfg = cfg;
    CHECK_THROWS_AS(fresh.tokenize(images[0]), InvalidInput);
}

TEST_CASE("codebook and tokenizer bundles round-trip through their artifacts") {
    Rng rng(55);
    std::vector<double> pts(50 * 2);
    for (auto & v : pts) {
        v = rng.uniform(-1.0, 1.0);
    }
    Codebook book = kmeans_init(pts.data(), 50, 2, 8, 1);
    book.save("./book_test.vqcb");
    const Codebook loaded = Codebook::load("./book_test.vqcb");
    CHECK(loaded.K == 8);
    CHECK(loaded.D == 2);
    for (size_t i = 0; i < book.vectors.size(); ++i) {
        CHECK((float) book.vectors[i] == (float) loaded.vectors[i]);
    }

    // mask tokenizer bundle: identical tokenization after reload
    GridU8 disc(64, 64, 1, 0);
    for (int y = 16; y < 48; ++y) {
        for (int x = 16; x < 48; ++x) {
            disc.at(y, x) = 1;
        }
    }
    SpatialTokenizerConfig cfg;
    cfg.name       = "mask16";
    cfg.patch_h    = 16;
    cfg.patch_w    = 16;
    cfg.vocab      = 32;
    cfg.latent_dim = 16;
    cfg.width      = 48;
    cfg.steps      = 60;
    cfg.batch_images = 4;
    const SpatialTokenizer tok = train_mask_tokenizer(std::vector<GridU8>(16, disc), cfg, nullptr);
    tok.save("./mask_tok.vqtk");
    const SpatialTokenizer re = SpatialTokenizer::load("./mask_tok.vqtk");
    const Tensor patches = patches_from_u8(disc, 16, 16);
    CHECK(tok.tokenize(patches) == re.tokenize(patches));
}
