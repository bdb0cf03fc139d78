#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "anymodal/masking.hpp"

using namespace anymodal;

namespace {

Vocabulary make_vocab() {
    VocabConfig cfg;
    cfg.target_size   = 6000;
    cfg.pose_vq_vocab = 64;
    cfg.mask_vq_vocab = 64;
    return Vocabulary::train({"a red ball and a person.", "two green trees near a road."}, cfg);
}

// synthetic tokenized sample with every modality populated
TokenizedSample make_sample(const Vocabulary & vocab, uint64_t id) {
    Rng rng(id * 977 + 3);
    TokenizedSample s;
    s.id = id;
    for (Modality m : {Modality::rgb, Modality::depth, Modality::normals, Modality::semantic,
                       Modality::edges_rgb, Modality::edges_inst, Modality::dense_feat}) {
        for (int i = 0; i < 64; ++i) {
            s.of(m).push_back(rng.uniform_int(256));
        }
    }
    for (int i = 0; i < 16; ++i) {
        s.of(Modality::global_emb).push_back(rng.uniform_int(256));
    }
    for (int i = 0; i < 14; ++i) {
        s.of(Modality::caption).push_back(vocab.reserved_size() + rng.uniform_int(20));
    }
    for (int b = 0; b < 3; ++b) { // 3 boxes
        for (int g = 0; g < 4; ++g) {
            s.of(Modality::bbox).push_back(vocab.special_value_id(g, rng.uniform_int(1000)));
        }
        s.of(Modality::bbox).push_back(vocab.class_token_id(rng.uniform_int(16)));
    }
    for (int c = 0; c < 19; ++c) { // 19 metadata chunks
        s.of(Modality::metadata).push_back(vocab.special_value_id(1, c));
        s.of(Modality::metadata).push_back(vocab.special_value_id(0, rng.uniform_int(1000)));
    }
    s.of(Modality::palette).push_back(vocab.identifier_id(Identifier::color));
    s.of(Modality::palette).push_back(vocab.special_value_id(0, 3));
    for (int c = 0; c < 3; ++c) {
        s.of(Modality::palette).push_back(vocab.special_value_id(1, rng.uniform_int(256)));
        s.of(Modality::palette).push_back(vocab.special_value_id(2, rng.uniform_int(256)));
        s.of(Modality::palette).push_back(vocab.special_value_id(3, rng.uniform_int(256)));
    }
    s.of(Modality::pose).push_back(vocab.identifier_id(Identifier::none));
    for (int k = 0; k < 2; ++k) { // 2 instances
        s.of(Modality::instance).push_back(vocab.identifier_id(Identifier::polygon));
        for (int g = 0; g < 4; ++g) {
            s.of(Modality::instance).push_back(vocab.special_value_id(g, rng.uniform_int(1000)));
        }
        for (int t = 0; t < 16; ++t) {
            s.of(Modality::instance).push_back(vocab.mask_vq_id(rng.uniform_int(64)));
        }
    }
    return s;
}

} // namespace

TEST_CASE("dirichlet: symmetry, uniform marginal, concentration") {
    Rng rng(7);

    // symmetric alpha: E[p_i] = 1/M within 0.02
    {
        const int M = 5, N = 100000;
        std::vector<double> mean((size_t) M, 0.0);
        for (int t = 0; t < N; ++t) {
            const auto p = sample_dirichlet(std::vector<double>((size_t) M, 0.7), rng);
            double     sum = 0.0;
            for (int i = 0; i < M; ++i) {
                mean[(size_t) i] += p[(size_t) i];
                sum += p[(size_t) i];
            }
            CHECK(std::fabs(sum - 1.0) < 1e-9);
        }
        for (int i = 0; i < M; ++i) {
            CHECK(std::fabs(mean[(size_t) i] / N - 0.2) < 0.02);
        }
    }

    // M=2, alpha=(1,1): p_0 ~ Uniform(0,1), KS test at the 1% level
    {
        const int N = 100000;
        std::vector<double> xs;
        for (int t = 0; t < N; ++t) {
            xs.push_back(sample_dirichlet({1.0, 1.0}, rng)[0]);
        }
        std::sort(xs.begin(), xs.end());
        double d = 0.0;
        for (int i = 0; i < N; ++i) {
            const double f = (double) (i + 1) / N;
            d = std::max(d, std::fabs(f - xs[(size_t) i]));
            d = std::max(d, std::fabs((double) i / N - xs[(size_t) i]));
        }
        CHECK(d < 1.63 / std::sqrt((double) N)); // 1% critical value
    }

    // alpha=0.01 symmetric, M=7: one modality dominates in >= 80% of draws
    {
        int dominated = 0;
        const int N = 2000;
        for (int t = 0; t < N; ++t) {
            const auto p = sample_dirichlet(std::vector<double>(7, 0.01), rng);
            if (*std::max_element(p.begin(), p.end()) > 0.9) {
                dominated++;
            }
        }
        CHECK(dominated >= (int) (0.8 * N));
    }

    // concentration ordering: component variance strictly decreasing in alpha
    {
        double prev = 1e9;
        for (double alpha : {0.01, 0.1, 1.0, 10.0}) {
            double s1 = 0.0, s2 = 0.0;
            const int N = 10000;
            for (int t = 0; t < N; ++t) {
                const double p = sample_dirichlet(std::vector<double>(5, alpha), rng)[0];
                s1 += p;
                s2 += p * p;
            }
            const double var = s2 / N - (s1 / N) * (s1 / N);
            CHECK(var < prev);
            prev = var;
        }
    }

    CHECK_THROWS_AS(sample_dirichlet({1.0, 0.0}, rng), InvalidInput);
}

TEST_CASE("allocate_budget: spec examples and conservation fuzz") {
    CHECK(allocate_budget({0.5, 0.5}, 64, {64, 64}) == std::vector<int>{32, 32});
    CHECK(allocate_budget({1.0, 0.0}, 64, {10, 64}) == std::vector<int>{10, 54});
    {
        const auto c = allocate_budget({0.3, 0.7}, 64, {2, 3});
        CHECK(c[0] + c[1] == 5);
    }

    Rng rng(3);
    for (int t = 0; t < 3000; ++t) {
        const int M = 1 + rng.uniform_int(8);
        std::vector<double> props((size_t) M);
        std::vector<int>    caps((size_t) M);
        double total = 0.0;
        for (int i = 0; i < M; ++i) {
            props[(size_t) i] = rng.uniform();
            caps[(size_t) i]  = rng.uniform_int(80);
            total += props[(size_t) i];
        }
        for (auto & p : props) {
            p /= std::max(total, 1e-12);
        }
        const int budget = rng.uniform_int(200);
        const auto counts = allocate_budget(props, budget, caps);
        long cap_sum = 0, count_sum = 0;
        for (int i = 0; i < M; ++i) {
            CHECK(counts[(size_t) i] >= 0);
            CHECK(counts[(size_t) i] <= caps[(size_t) i]);
            cap_sum += caps[(size_t) i];
            count_sum += counts[(size_t) i];
        }
        CHECK(count_sum == std::min<long>(budget, cap_sum));
    }
}

TEST_CASE("mask_random: boundaries and Fisher-Yates oracle") {
    Rng rng(11);
    const auto all = mask_random(7, 7, rng);
    std::vector<int> sorted = all.selected;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
    CHECK(all.remainder.empty());

    const auto none = mask_random(7, 0, rng);
    CHECK(none.selected.empty());
    CHECK(none.remainder.size() == 7);

    // partial draw equals the prefix of a full Fisher-Yates shuffle with the
    // same generator state
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng a(seed), b(seed);
        const int n = 23, k = 9;
        const auto partial = mask_random(n, k, a);
        // full shuffle oracle
        std::vector<int> arr(n);
        for (int i = 0; i < n; ++i) {
            arr[(size_t) i] = i;
        }
        for (int i = 0; i < n; ++i) {
            const int j = i + (int) b.uniform_u64((uint64_t) (n - i));
            std::swap(arr[(size_t) i], arr[(size_t) j]);
        }
        CHECK(std::vector<int>(arr.begin(), arr.begin() + k) == partial.selected);
    }

    CHECK_THROWS_AS(mask_random(3, 4, rng), InvalidInput);
}

TEST_CASE("mask_span: limits and inverse-reconstruction oracle") {
    Vocabulary vocab = make_vocab();
    Rng        rng(17);
    std::vector<int> seq;
    for (int i = 0; i < 20; ++i) {
        seq.push_back(vocab.reserved_size() + i);
    }

    const auto keep_all = mask_span(seq, 1.0, 3.0, vocab, rng);
    CHECK(keep_all.input == seq);
    CHECK(keep_all.target.empty());

    const auto keep_none = mask_span(seq, 0.0, 3.0, vocab, rng);
    CHECK(keep_none.input == std::vector<int>{vocab.sentinel_id(0)});
    REQUIRE(keep_none.target.size() == seq.size() + 2);
    CHECK(keep_none.target.front() == vocab.sentinel_id(0));
    CHECK(keep_none.target.back() == vocab.eos_id());

    // oracle: splicing each sentinel's span back into the input reproduces the
    // original sequence, and the masked count matches the keep ratio
    for (uint64_t s = 0; s < 200; ++s) {
        Rng r(s);
        const double keep = r.uniform();
        const auto   res  = mask_span(seq, keep, 2.5, vocab, r);

        std::map<int, std::vector<int>> spans;
        int cur = -1;
        for (int id : res.target) {
            if (id == vocab.eos_id()) {
                break;
            }
            if (vocab.is_sentinel(id)) {
                cur = vocab.sentinel_index(id);
            } else {
                REQUIRE(cur >= 0);
                spans[cur].push_back(id);
            }
        }
        std::vector<int> rebuilt;
        int masked = 0;
        for (int id : res.input) {
            if (vocab.is_sentinel(id)) {
                const auto & span = spans.at(vocab.sentinel_index(id));
                CHECK(!span.empty());
                rebuilt.insert(rebuilt.end(), span.begin(), span.end());
                masked += (int) span.size();
            } else {
                rebuilt.push_back(id);
            }
        }
        CHECK(rebuilt == seq);
        CHECK(masked == (int) std::lround((1.0 - keep) * (double) seq.size()));
    }
}

TEST_CASE("mask_metadata_chunks: atomicity and reduction to mask_random") {
    Vocabulary vocab = make_vocab();
    std::vector<int> seq;
    const int n_chunks = 18;
    for (int c = 0; c < n_chunks; ++c) {
        seq.push_back(vocab.special_value_id(1, c));
        seq.push_back(vocab.special_value_id(0, 100 + c));
    }

    Rng rng(23);
    const auto keep_all = mask_metadata_chunks(seq, n_chunks, vocab, rng);
    CHECK(keep_all.input == seq);
    CHECK(keep_all.target.empty());

    const auto keep_one = mask_metadata_chunks(seq, 1, vocab, rng);
    int intact = 0;
    for (size_t i = 0; i < keep_one.input.size(); ++i) {
        if (vocab.is_special_value(keep_one.input[i]) && vocab.special_group(keep_one.input[i]) == 1) {
            REQUIRE(i + 1 < keep_one.input.size());
            CHECK(vocab.special_group(keep_one.input[i + 1]) == 0);
            intact++;
        }
    }
    CHECK(intact == 1);

    // seeded selection equals mask_random over chunk indices
    {
        Rng a(5), b(5);
        const auto res  = mask_metadata_chunks(seq, 6, vocab, a);
        const auto pick = mask_random(n_chunks, 6, b);
        std::vector<char> kept((size_t) n_chunks, 0);
        for (int i : pick.selected) {
            kept[(size_t) i] = 1;
        }
        std::vector<int> expected_kept_types;
        for (int c = 0; c < n_chunks; ++c) {
            if (kept[(size_t) c]) {
                expected_kept_types.push_back(c);
            }
        }
        std::vector<int> got_kept_types;
        for (size_t i = 0; i < res.input.size(); ++i) {
            if (vocab.is_special_value(res.input[i]) && vocab.special_group(res.input[i]) == 1) {
                got_kept_types.push_back(vocab.special_value(res.input[i]));
            }
        }
        CHECK(got_kept_types == expected_kept_types);
    }

    // chunk atomicity under fuzz: every v0 is preceded by its v1
    for (uint64_t s = 0; s < 100; ++s) {
        Rng r(s);
        const int keep = r.uniform_int(n_chunks + 1);
        const auto res = mask_metadata_chunks(seq, keep, vocab, r);
        for (const auto * stream : {&res.input, &res.target}) {
            for (size_t i = 0; i < stream->size(); ++i) {
                const int id = (*stream)[i];
                if (vocab.is_special_value(id) && vocab.special_group(id) == 0) {
                    REQUIRE(i > 0);
                    const int prev = (*stream)[i - 1];
                    CHECK(vocab.is_special_value(prev));
                    CHECK(vocab.special_group(prev) == 1);
                }
            }
        }
    }
}

TEST_CASE("masking config: parse/render round-trip and line-anchored errors") {
    const MaskingConfig def = MaskingConfig::default_config();
    const std::string   text = def.render();
    const MaskingConfig back = MaskingConfig::parse(text, "default.cfg");
    CHECK(back.render() == text);
    CHECK(back.datasets.size() == 3);
    CHECK(back.datasets[0].weight == doctest::Approx(0.6));

    try {
        MaskingConfig::parse("anymodal-masking v1\ndataset d 1\nmodalities rgb\nbogus_key 1\n", "bad.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError & e) {
        CHECK(std::string(e.what()).find("bad.cfg:4") != std::string::npos);
    }

    // strategy referencing an unavailable modality fails at load
    const std::string mismatch =
        "anymodal-masking v1\n"
        "dataset d 1\n"
        "modalities rgb depth\n"
        "strategy s 1\n"
        "input_pin caption\n";
    CHECK_THROWS_AS(MaskingConfig::parse(mismatch, "m.cfg"), ConfigError);
}

TEST_CASE("sample_training_example: dataset frequencies, availability, pins") {
    Vocabulary vocab = make_vocab();
    const MaskingConfig cfg = MaskingConfig::default_config();

    std::vector<TokenizedDataset> data(3);
    data[0].name = "full";
    data[1].name = "core7";
    data[2].name = "text";
    for (uint64_t i = 0; i < 8; ++i) {
        data[0].samples.push_back(make_sample(vocab, i));
        // core7 coverage
        TokenizedSample s7 = make_sample(vocab, 100 + i);
        for (int mi = 0; mi < kModalityCount; ++mi) {
            if (!cfg.datasets[1].available.has((Modality) mi)) {
                s7.tokens[(size_t) mi].clear();
            }
        }
        data[1].samples.push_back(s7);
        TokenizedSample st = make_sample(vocab, 200 + i);
        for (int mi = 0; mi < kModalityCount; ++mi) {
            if ((Modality) mi != Modality::caption) {
                st.tokens[(size_t) mi].clear();
            }
        }
        data[2].samples.push_back(st);
    }

    // dataset draw frequencies within +-0.01 over 1e5 draws
    {
        std::map<std::string, int> freq;
        const int N = 100000;
        for (int i = 0; i < N; ++i) {
            Rng r = Rng::derive(42, (uint64_t) i);
            std::vector<double> w = {0.6, 0.2, 0.2};
            freq[cfg.datasets[(size_t) r.weighted_index(w)].name]++;
        }
        CHECK(std::fabs(freq["full"] / (double) N - 0.6) < 0.01);
        CHECK(std::fabs(freq["core7"] / (double) N - 0.2) < 0.01);
        CHECK(std::fabs(freq["text"] / (double) N - 0.2) < 0.01);
    }

    // availability filter and pinned-input strategies, checked over many draws
    int saw_text = 0, saw_rgb2all = 0;
    for (uint64_t i = 0; i < 3000; ++i) {
        const TokenBatch batch = sample_training_example(cfg, data, vocab, 9, i);
        if (batch.dataset_tag == "text") {
            saw_text++;
            for (const auto & e : batch.input) {
                CHECK(e.modality == Modality::caption);
            }
            for (const auto & e : batch.target) {
                CHECK(e.modality == Modality::caption);
            }
        }
        if (batch.strategy_tag == "rgb2all") {
            saw_rgb2all++;
            REQUIRE(batch.input.size() == 1);
            CHECK(batch.input[0].modality == Modality::rgb);
            CHECK(batch.input[0].ids.size() == 64); // pinned fully unmasked
        }
        if (batch.strategy_tag == "rgbpix2all") {
            CHECK(batch.rgb_as_pixels);
        }
    }
    CHECK(saw_text > 300);
    CHECK(saw_rgb2all > 30);
}

TEST_CASE("budget law and disjointness over fuzzed batches") {
    Vocabulary vocab = make_vocab();
    const MaskingConfig cfg = MaskingConfig::default_config();
    std::vector<TokenizedDataset> data(3);
    data[0].name = "full";
    data[1].name = "core7";
    data[2].name = "text";
    for (uint64_t i = 0; i < 4; ++i) {
        data[0].samples.push_back(make_sample(vocab, i));
        TokenizedSample s7 = make_sample(vocab, 50 + i);
        for (int mi = 0; mi < kModalityCount; ++mi) {
            if (!cfg.datasets[1].available.has((Modality) mi)) {
                s7.tokens[(size_t) mi].clear();
            }
        }
        data[1].samples.push_back(s7);
        TokenizedSample st = make_sample(vocab, 90 + i);
        for (int mi = 0; mi < kModalityCount; ++mi) {
            if ((Modality) mi != Modality::caption) {
                st.tokens[(size_t) mi].clear();
            }
        }
        data[2].samples.push_back(st);
    }

    for (uint64_t i = 0; i < 10000; ++i) {
        const TokenBatch batch = sample_training_example(cfg, data, vocab, 31337, i);
        const MaskingStrategy & st = strategy_of_batch(cfg, batch);
        CHECK_NOTHROW(validate_token_batch(batch, st));

        // metadata chunk atomicity inside emitted streams
        for (const auto * side : {&batch.input, &batch.target}) {
            for (const auto & e : *side) {
                if (e.modality != Modality::metadata) {
                    continue;
                }
                for (size_t j = 0; j < e.ids.size(); ++j) {
                    const int id = e.ids[j];
                    if (vocab.is_special_value(id) && vocab.special_group(id) == 0) {
                        REQUIRE(j > 0);
                        const int prev = e.ids[j - 1];
                        CHECK(vocab.is_special_value(prev));
                        CHECK(vocab.special_group(prev) == 1);
                    }
                }
            }
        }
    }
}

TEST_CASE("identical (config, seed) produce identical batch streams") {
    Vocabulary vocab = make_vocab();
    const MaskingConfig cfg = MaskingConfig::default_config();
    std::vector<TokenizedDataset> data(3);
    data[0].name = "full";
    data[1].name = "core7";
    data[2].name = "text";
    for (uint64_t i = 0; i < 3; ++i) {
        data[0].samples.push_back(make_sample(vocab, i));
        data[1].samples.push_back(make_sample(vocab, 10 + i));
        data[2].samples.push_back(make_sample(vocab, 20 + i));
    }
    for (uint64_t i = 0; i < 50; ++i) {
        const TokenBatch a = sample_training_example(cfg, data, vocab, 5, i);
        const TokenBatch b = sample_training_example(cfg, data, vocab, 5, i);
        CHECK(a.dataset_tag == b.dataset_tag);
        CHECK(a.strategy_tag == b.strategy_tag);
        REQUIRE(a.input.size() == b.input.size());
        REQUIRE(a.target.size() == b.target.size());
        for (size_t j = 0; j < a.input.size(); ++j) {
            CHECK(a.input[j].ids == b.input[j].ids);
            CHECK(a.input[j].positions == b.input[j].positions);
        }
        for (size_t j = 0; j < a.target.size(); ++j) {
            CHECK(a.target[j].ids == b.target[j].ids);
        }
    }
}
