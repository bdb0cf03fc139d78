#include "anymodal/masking.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace anymodal {

// ---------------------------------------------------------------------------
// config validation
// ---------------------------------------------------------------------------

void AlphaSpec::validate(const std::string & where) const {
    if (sym <= 0.0) {
        throw ConfigError(where + ": default alpha must be > 0");
    }
    for (const auto & [m, a] : per_modality) {
        if (a <= 0.0) {
            throw ConfigError(where + ": alpha for " + modality_name(m) + " must be > 0");
        }
    }
    for (Modality m : pins) {
        if (excludes.count(m)) {
            throw ConfigError(where + ": " + modality_name(m) + " both pinned and excluded");
        }
    }
}

void MaskingStrategy::validate() const {
    input_alpha.validate("strategy " + name + " input");
    target_alpha.validate("strategy " + name + " target");
    if (input_budget < 1 || target_budget < 1) {
        throw ConfigError("strategy " + name + ": budgets must be >= 1");
    }
    if (span_mean < 1.0) {
        throw ConfigError("strategy " + name + ": span_mean must be >= 1");
    }
}

void StrategyMixture::normalize() {
    double total = 0.0;
    for (double w : weights) {
        if (w <= 0.0) {
            throw ConfigError("strategy mixture weights must be positive");
        }
        total += w;
    }
    for (double & w : weights) {
        w /= total;
    }
}

void MaskingConfig::validate() const {
    if (datasets.empty()) {
        throw ConfigError("masking config has no datasets");
    }
    for (const auto & ds : datasets) {
        if (ds.weight <= 0.0) {
            throw ConfigError("dataset " + ds.name + ": weight must be > 0");
        }
        if (ds.available.empty()) {
            throw ConfigError("dataset " + ds.name + ": no modalities");
        }
        if (ds.mixture.strategies.empty()) {
            throw ConfigError("dataset " + ds.name + ": no strategies");
        }
        for (const auto & st : ds.mixture.strategies) {
            st.validate();
            for (Modality m : st.input_alpha.pins) {
                if (!ds.available.has(m)) {
                    throw ConfigError("dataset " + ds.name + " strategy " + st.name + ": pinned modality " +
                                      modality_name(m) + " not available in this dataset");
                }
            }
            for (const auto & [m, a] : st.input_alpha.per_modality) {
                (void) a;
                if (!ds.available.has(m)) {
                    throw ConfigError("dataset " + ds.name + " strategy " + st.name + ": input alpha names " +
                                      modality_name(m) + " which the dataset lacks");
                }
            }
            for (const auto & [m, a] : st.target_alpha.per_modality) {
                (void) a;
                if (!ds.available.has(m)) {
                    throw ConfigError("dataset " + ds.name + " strategy " + st.name + ": target alpha names " +
                                      modality_name(m) + " which the dataset lacks");
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// core sampling operations
// ---------------------------------------------------------------------------

std::vector<double> sample_dirichlet(const std::vector<double> & alphas, Rng & rng) {
    if (alphas.empty()) {
        throw InvalidInput("sample_dirichlet: empty alpha vector");
    }
    std::vector<double> props(alphas.size());
    double total = 0.0;
    for (size_t i = 0; i < alphas.size(); ++i) {
        if (alphas[i] <= 0.0) {
            throw InvalidInput("sample_dirichlet: alpha must be > 0");
        }
        props[i] = rng.gamma(alphas[i]);
        total += props[i];
    }
    if (total <= 0.0) {
        // all gamma draws underflowed (tiny alphas); fall back to one winner
        props.assign(alphas.size(), 0.0);
        props[(size_t) rng.uniform_int((int) alphas.size())] = 1.0;
        return props;
    }
    for (double & p : props) {
        p /= total;
    }
    return props;
}

static std::vector<int> largest_remainder(const std::vector<double> & props, int budget) {
    const size_t n = props.size();
    double total = 0.0;
    for (double p : props) {
        total += p;
    }
    std::vector<int>    counts(n, 0);
    std::vector<double> frac(n, 0.0);
    int assigned = 0;
    if (total <= 0.0) {
        // round-robin when no proportions exist
        for (int i = 0; assigned < budget; i = (i + 1) % (int) n) {
            counts[(size_t) i]++;
            assigned++;
        }
        return counts;
    }
    for (size_t i = 0; i < n; ++i) {
        const double t = props[i] / total * budget;
        counts[i] = (int) std::floor(t);
        frac[i]   = t - counts[i];
        assigned += counts[i];
    }
    std::vector<int> order(n);
    for (size_t i = 0; i < n; ++i) {
        order[i] = (int) i;
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (frac[(size_t) a] != frac[(size_t) b]) {
            return frac[(size_t) a] > frac[(size_t) b];
        }
        return a < b;
    });
    for (int i = 0; assigned < budget; ++i) {
        counts[(size_t) order[(size_t) i % n]]++;
        assigned++;
    }
    return counts;
}

std::vector<int> allocate_budget(const std::vector<double> & proportions, int budget,
                                 const std::vector<int> & caps) {
    const size_t n = proportions.size();
    if (caps.size() != n) {
        throw InvalidInput("allocate_budget: caps size mismatch");
    }
    long cap_total = 0;
    for (int c : caps) {
        if (c < 0) {
            throw InvalidInput("allocate_budget: negative cap");
        }
        cap_total += c;
    }
    int target = (int) std::min<long>(budget, cap_total);

    std::vector<int> counts = largest_remainder(proportions, budget);
    for (;;) {
        // clamp to caps, collect overflow
        int overflow = 0;
        for (size_t i = 0; i < n; ++i) {
            if (counts[i] > caps[i]) {
                overflow += counts[i] - caps[i];
                counts[i] = caps[i];
            }
        }
        int current = 0;
        for (int c : counts) {
            current += c;
        }
        if (current >= target || overflow == 0) {
            break;
        }
        // redistribute among uncapped slots proportionally
        std::vector<double> sub_props;
        std::vector<size_t> sub_idx;
        for (size_t i = 0; i < n; ++i) {
            if (counts[i] < caps[i]) {
                sub_idx.push_back(i);
                sub_props.push_back(proportions[i]);
            }
        }
        if (sub_idx.empty()) {
            break;
        }
        const std::vector<int> extra = largest_remainder(sub_props, target - current);
        for (size_t j = 0; j < sub_idx.size(); ++j) {
            counts[sub_idx[j]] += extra[j];
        }
    }
    // final clamp pass for the round-robin remainder path
    for (size_t i = 0; i < n; ++i) {
        counts[i] = std::min(counts[i], caps[i]);
    }
    // top up if clamping left budget unused but capacity remains
    int current = 0;
    for (int c : counts) {
        current += c;
    }
    for (size_t i = 0; current < target && i < n; ++i) {
        const int room = caps[i] - counts[i];
        const int add  = std::min(room, target - current);
        counts[i] += add;
        current += add;
    }
    return counts;
}

RandomMaskResult mask_random(int length, int count, Rng & rng) {
    if (count > length || count < 0) {
        throw InvalidInput("mask_random: count " + std::to_string(count) + " exceeds length " +
                           std::to_string(length));
    }
    std::vector<int> arr(length);
    for (int i = 0; i < length; ++i) {
        arr[(size_t) i] = i;
    }
    for (int i = 0; i < count; ++i) {
        const int j = i + (int) rng.uniform_u64((uint64_t) (length - i));
        std::swap(arr[(size_t) i], arr[(size_t) j]);
    }
    RandomMaskResult res;
    res.selected.assign(arr.begin(), arr.begin() + count);
    res.remainder.assign(arr.begin() + count, arr.end());
    std::sort(res.remainder.begin(), res.remainder.end());
    return res;
}

SpanMaskResult mask_span(const std::vector<int> & seq, double keep_ratio, double mean_span,
                         const Vocabulary & vocab, Rng & rng) {
    if (keep_ratio < 0.0 || keep_ratio > 1.0) {
        throw InvalidInput("mask_span: keep_ratio outside [0,1]");
    }
    if (mean_span < 1.0) {
        throw InvalidInput("mask_span: mean_span must be >= 1");
    }
    const int n = (int) seq.size();
    SpanMaskResult res;
    int m = (int) std::lround((1.0 - keep_ratio) * n);
    m = std::clamp(m, 0, n);
    if (m == 0) {
        res.input = seq;
        return res;
    }
    const int g = n - m;

    // geometric span lengths covering m masked tokens
    std::vector<int> lengths;
    int remaining = m;
    while (remaining > 0) {
        const int len = std::min(remaining, rng.geometric_len(mean_span));
        lengths.push_back(len);
        remaining -= len;
    }
    // spans need a kept token between them
    while ((int) lengths.size() > g + 1) {
        lengths[lengths.size() - 2] += lengths.back();
        lengths.pop_back();
    }
    const int k = (int) lengths.size();
    if (k > Vocabulary::kSentinels) {
        throw InvalidInput("mask_span: more than " + std::to_string(Vocabulary::kSentinels) + " spans");
    }

    // uniform composition of the free kept tokens into k+1 gaps
    // (stars and bars: choose k cut positions among gfree + k)
    const int        gfree = g - (k - 1);
    std::vector<int> gaps((size_t) k + 1, 0);
    if (k > 0) {
        auto cuts = mask_random(gfree + k, k, rng).selected;
        std::sort(cuts.begin(), cuts.end());
        gaps[0] = cuts[0];
        for (int i = 1; i < k; ++i) {
            gaps[(size_t) i] = cuts[(size_t) i] - cuts[(size_t) i - 1] - 1;
        }
        gaps[(size_t) k] = (gfree + k - 1) - cuts[(size_t) k - 1];
        for (int i = 1; i < k; ++i) {
            gaps[(size_t) i] += 1; // interior gaps >= 1
        }
    }

    res.n_spans = k;
    int pos = 0;
    for (int s = 0; s < k; ++s) {
        for (int i = 0; i < gaps[(size_t) s]; ++i) {
            res.input.push_back(seq[(size_t) pos++]);
        }
        res.input.push_back(vocab.sentinel_id(s));
        res.target.push_back(vocab.sentinel_id(s));
        for (int i = 0; i < lengths[(size_t) s]; ++i) {
            res.target.push_back(seq[(size_t) pos++]);
        }
    }
    for (int i = 0; i < gaps[(size_t) k]; ++i) {
        res.input.push_back(seq[(size_t) pos++]);
    }
    res.target.push_back(vocab.eos_id());
    return res;
}

SpanMaskResult mask_metadata_chunks(const std::vector<int> & seq, int keep_count, const Vocabulary & vocab,
                                    Rng & rng) {
    if (seq.size() % 2 != 0) {
        throw InvalidInput("mask_metadata_chunks: sequence length must be even (v1,v0 chunks)");
    }
    const int n_chunks = (int) seq.size() / 2;
    if (keep_count > n_chunks || keep_count < 0) {
        throw InvalidInput("mask_metadata_chunks: keep_count exceeds chunk count");
    }
    const auto pick = mask_random(n_chunks, keep_count, rng);
    std::vector<char> kept((size_t) n_chunks, 0);
    for (int i : pick.selected) {
        kept[(size_t) i] = 1;
    }

    SpanMaskResult res;
    int sentinel = 0;
    bool in_run = false;
    for (int c = 0; c < n_chunks; ++c) {
        if (kept[(size_t) c]) {
            res.input.push_back(seq[(size_t) (2 * c)]);
            res.input.push_back(seq[(size_t) (2 * c + 1)]);
            in_run = false;
        } else {
            if (!in_run) {
                if (sentinel >= Vocabulary::kSentinels) {
                    throw InvalidInput("mask_metadata_chunks: sentinel exhaustion");
                }
                res.input.push_back(vocab.sentinel_id(sentinel));
                res.target.push_back(vocab.sentinel_id(sentinel));
                sentinel++;
                in_run = true;
                res.n_spans++;
            }
            res.target.push_back(seq[(size_t) (2 * c)]);
            res.target.push_back(seq[(size_t) (2 * c + 1)]);
        }
    }
    if (!res.target.empty()) {
        res.target.push_back(vocab.eos_id());
    }
    return res;
}

// ---------------------------------------------------------------------------
// sample_training_example
// ---------------------------------------------------------------------------

int TokenBatch::input_tokens() const {
    int n = 0;
    for (const auto & e : input) {
        n += (int) e.ids.size();
    }
    return n;
}

int TokenBatch::target_tokens() const {
    int n = 0;
    for (const auto & e : target) {
        n += (int) e.ids.size();
    }
    return n;
}

void validate_token_batch(const TokenBatch & batch, const MaskingStrategy & strategy) {
    if (batch.input_tokens() > strategy.input_budget) {
        throw InvalidInput("token batch exceeds input budget");
    }
    if (batch.target_tokens() > strategy.target_budget) {
        throw InvalidInput("token batch exceeds target budget");
    }
    for (const auto & in : batch.input) {
        if (!is_sequence(in.modality)) {
            for (const auto & out : batch.target) {
                if (out.modality != in.modality) {
                    continue;
                }
                for (int p : in.positions) {
                    for (int q : out.positions) {
                        if (p == q) {
                            throw InvalidInput("input/target positions overlap for " +
                                               std::string(modality_name(in.modality)));
                        }
                    }
                }
            }
        }
    }
}

// trim the sentinel-group target stream to fit `limit` tokens (whole groups)
static std::vector<int> trim_target_stream(const std::vector<int> & stream, int limit, const Vocabulary & vocab) {
    if ((int) stream.size() <= limit) {
        return stream;
    }
    std::vector<int> out;
    size_t i = 0;
    while (i < stream.size() && stream[i] != vocab.eos_id()) {
        // group = sentinel + payload tokens
        size_t j = i + 1;
        while (j < stream.size() && !vocab.is_sentinel(stream[(size_t) j]) && stream[j] != vocab.eos_id()) {
            j++;
        }
        if ((int) (out.size() + (j - i) + 1) > limit) {
            break;
        }
        out.insert(out.end(), stream.begin() + (long) i, stream.begin() + (long) j);
        i = j;
    }
    if (!out.empty()) {
        out.push_back(vocab.eos_id());
    }
    return out;
}

TokenBatch sample_training_example(const MaskingConfig & cfg, const std::vector<TokenizedDataset> & data,
                                   const Vocabulary & vocab, uint64_t seed, uint64_t index) {
    if (cfg.datasets.size() != data.size()) {
        throw InvalidInput("sample_training_example: dataset spec/data count mismatch");
    }
    Rng rng = Rng::derive(seed, index);

    // dataset by weight
    std::vector<double> weights;
    for (const auto & ds : cfg.datasets) {
        weights.push_back(ds.weight);
    }
    const int ds_idx = rng.weighted_index(weights);
    const DatasetSpec &      ds   = cfg.datasets[(size_t) ds_idx];
    const TokenizedDataset & tds  = data[(size_t) ds_idx];
    if (tds.samples.empty()) {
        throw InvalidInput("dataset " + ds.name + " has no tokenized samples");
    }
    const TokenizedSample & sample = tds.samples[(size_t) rng.uniform_int((int) tds.samples.size())];

    // strategy by mixture weight
    const int st_idx = rng.weighted_index(ds.mixture.weights);
    const MaskingStrategy & st = ds.mixture.strategies[(size_t) st_idx];

    TokenBatch batch;
    batch.dataset_tag   = ds.name;
    batch.strategy_tag  = st.name;
    batch.sample_id     = sample.id;
    batch.rgb_as_pixels = st.rgb_as_pixels;

    // ------------------------------------------------------------------ input
    int remaining = st.input_budget;
    std::array<std::vector<int>, kModalityCount> input_positions; // grid/set selections
    std::array<std::vector<int>, kModalityCount> pending_targets; // sequence target streams
    std::array<char, kModalityCount>             seq_in_input{};

    auto add_grid_input = [&](Modality m, int count) {
        const auto & toks = sample.of(m);
        const auto   sel  = mask_random((int) toks.size(), count, rng);
        TokenBatchEntry e;
        e.modality = m;
        for (int idx : sel.selected) {
            e.ids.push_back(toks[(size_t) idx]);
            e.positions.push_back(idx);
        }
        input_positions[(size_t) m] = sel.selected;
        batch.input.push_back(std::move(e));
    };

    auto add_sequence_input = [&](Modality m, int count) {
        const auto & toks = sample.of(m);
        const int    len  = (int) toks.size();
        SpanMaskResult span;
        if (count >= len) {
            span.input = toks; // fully unmasked
        } else if (m == Modality::metadata) {
            const int n_chunks = len / 2;
            int keep = std::min(n_chunks, std::max(0, count / 2));
            span = mask_metadata_chunks(toks, keep, vocab, rng);
            while ((int) span.input.size() > count && keep > 0) {
                keep = std::max(0, keep - ((int) span.input.size() - count + 1) / 2);
                span = mask_metadata_chunks(toks, keep, vocab, rng);
            }
            if ((int) span.input.size() > count) {
                span.input.clear(); // drop the modality from the input entirely
            }
        } else {
            span = mask_span(toks, (double) count / len, st.span_mean, vocab, rng);
            if ((int) span.input.size() > count) {
                const int keep2 = std::max(0, count - span.n_spans);
                span = mask_span(toks, (double) keep2 / len, st.span_mean, vocab, rng);
            }
            if ((int) span.input.size() > count) {
                span.input.clear();
            }
        }
        if (!span.input.empty()) {
            TokenBatchEntry e;
            e.modality = m;
            e.ids      = span.input;
            for (int i = 0; i < (int) e.ids.size(); ++i) {
                e.positions.push_back(i);
            }
            batch.input.push_back(std::move(e));
            seq_in_input[(size_t) m]    = 1;
            pending_targets[(size_t) m] = span.target;
        }
    };

    auto add_input = [&](Modality m, int count) {
        if (count <= 0) {
            return;
        }
        if (is_sequence(m)) {
            add_sequence_input(m, count);
        } else {
            add_grid_input(m, std::min(count, (int) sample.of(m).size()));
        }
        int used = 0;
        for (const auto & e : batch.input) {
            used += (int) e.ids.size();
        }
        remaining = st.input_budget - used;
    };

    // pinned modalities first (fully unmasked up to the budget)
    for (int mi = 0; mi < kModalityCount; ++mi) {
        const Modality m = (Modality) mi;
        if (st.input_alpha.pinned(m) && sample.has(m) && remaining > 0) {
            add_input(m, std::min(remaining, (int) sample.of(m).size()));
        }
    }
    // Dirichlet allocation over the rest
    std::vector<Modality> others;
    for (int mi = 0; mi < kModalityCount; ++mi) {
        const Modality m = (Modality) mi;
        if (sample.has(m) && !st.input_alpha.pinned(m) && !st.input_alpha.excluded(m)) {
            others.push_back(m);
        }
    }
    if (!others.empty() && remaining > 0) {
        std::vector<double> alphas;
        std::vector<int>    caps;
        for (Modality m : others) {
            alphas.push_back(st.input_alpha.alpha_for(m));
            caps.push_back((int) sample.of(m).size());
        }
        const auto props  = sample_dirichlet(alphas, rng);
        const auto counts = allocate_budget(props, remaining, caps);
        for (size_t i = 0; i < others.size(); ++i) {
            add_input(others[i], counts[i]);
        }
    }

    if (st.rgb_as_pixels && sample.rgb_pixels.numel() > 0) {
        batch.rgb_pixels = sample.rgb_pixels;
    }

    // ----------------------------------------------------------------- target
    std::vector<Modality> target_mods;
    std::vector<double>   t_alphas;
    std::vector<int>      t_caps;
    for (int mi = 0; mi < kModalityCount; ++mi) {
        const Modality m = (Modality) mi;
        if (!sample.has(m) || st.target_alpha.excluded(m)) {
            continue;
        }
        int cap = 0;
        if (is_sequence(m)) {
            if (seq_in_input[(size_t) m]) {
                cap = (int) pending_targets[(size_t) m].size();
            } else {
                bool fully_in_input = false;
                for (const auto & e : batch.input) {
                    if (e.modality == m) {
                        fully_in_input = true;
                    }
                }
                cap = fully_in_input ? 0 : (int) sample.of(m).size() + 1;
            }
        } else {
            cap = (int) sample.of(m).size() - (int) input_positions[(size_t) m].size();
        }
        if (cap > 0) {
            target_mods.push_back(m);
            t_alphas.push_back(st.target_alpha.alpha_for(m));
            t_caps.push_back(cap);
        }
    }

    if (!target_mods.empty()) {
        const auto props  = sample_dirichlet(t_alphas, rng);
        const auto counts = allocate_budget(props, st.target_budget, t_caps);
        for (size_t i = 0; i < target_mods.size(); ++i) {
            const Modality m     = target_mods[i];
            const int      count = counts[i];
            if (count <= 0) {
                continue;
            }
            TokenBatchEntry e;
            e.modality = m;
            if (is_sequence(m)) {
                std::vector<int> stream;
                if (seq_in_input[(size_t) m]) {
                    stream = trim_target_stream(pending_targets[(size_t) m], count, vocab);
                } else {
                    const auto & toks = sample.of(m);
                    const int    take = std::min((int) toks.size(), count - 1);
                    if (take > 0) {
                        stream.assign(toks.begin(), toks.begin() + take);
                        stream.push_back(vocab.eos_id());
                    }
                }
                if (stream.empty()) {
                    continue;
                }
                e.ids = stream;
                for (int p = 0; p < (int) e.ids.size(); ++p) {
                    e.positions.push_back(p);
                }
            } else {
                // choose from the complement of the input selection
                const auto & toks = sample.of(m);
                std::vector<char> taken((size_t) toks.size(), 0);
                for (int p : input_positions[(size_t) m]) {
                    taken[(size_t) p] = 1;
                }
                std::vector<int> complement;
                for (int p = 0; p < (int) toks.size(); ++p) {
                    if (!taken[(size_t) p]) {
                        complement.push_back(p);
                    }
                }
                const auto sel = mask_random((int) complement.size(), std::min(count, (int) complement.size()),
                                             rng);
                for (int ci : sel.selected) {
                    e.ids.push_back(toks[(size_t) complement[(size_t) ci]]);
                    e.positions.push_back(complement[(size_t) ci]);
                }
            }
            if (!e.ids.empty()) {
                batch.target.push_back(std::move(e));
            }
        }
    }
    return batch;
}

const MaskingStrategy & strategy_of_batch(const MaskingConfig & cfg, const TokenBatch & batch) {
    for (const auto & ds : cfg.datasets) {
        if (ds.name != batch.dataset_tag) {
            continue;
        }
        for (const auto & st : ds.mixture.strategies) {
            if (st.name == batch.strategy_tag) {
                return st;
            }
        }
    }
    throw InvalidInput("strategy " + batch.strategy_tag + " not found in config");
}

// ---------------------------------------------------------------------------
// config text format
// ---------------------------------------------------------------------------

static Modality parse_modality(const std::string & tok, const std::string & origin, int line) {
    const auto m = modality_from_name(tok);
    if (!m) {
        throw ConfigError(origin + ":" + std::to_string(line) + ": unknown modality '" + tok + "'");
    }
    return *m;
}

MaskingConfig MaskingConfig::parse(const std::string & text, const std::string & origin) {
    MaskingConfig cfg;
    DatasetSpec *     ds = nullptr;
    MaskingStrategy * st = nullptr;
    std::vector<double> * st_weights = nullptr;

    std::istringstream is(text);
    std::string        raw;
    int                line = 0;
    bool               saw_header = false;
    auto fail = [&](const std::string & msg) {
        throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
    };

    while (std::getline(is, raw)) {
        line++;
        std::string s = raw;
        const size_t hash = s.find('#');
        if (hash != std::string::npos) {
            s = s.substr(0, hash);
        }
        std::istringstream ls(s);
        std::string        key;
        if (!(ls >> key)) {
            continue;
        }
        if (!saw_header) {
            std::string ver;
            if (key != "anymodal-masking" || !(ls >> ver) || ver != "v1") {
                fail("expected header 'anymodal-masking v1'");
            }
            saw_header = true;
            continue;
        }
        if (key == "dataset") {
            std::string name;
            double      weight;
            if (!(ls >> name >> weight)) {
                fail("dataset needs <name> <weight>");
            }
            cfg.datasets.push_back({});
            ds         = &cfg.datasets.back();
            ds->name   = name;
            ds->weight = weight;
            st         = nullptr;
            st_weights = &ds->mixture.weights;
        } else if (key == "modalities") {
            if (!ds) {
                fail("modalities outside a dataset");
            }
            std::string tok;
            while (ls >> tok) {
                if (tok == "*") {
                    ds->available = ModalitySet::all();
                } else {
                    ds->available.add(parse_modality(tok, origin, line));
                }
            }
        } else if (key == "strategy") {
            if (!ds) {
                fail("strategy outside a dataset");
            }
            std::string name;
            double      weight;
            if (!(ls >> name >> weight)) {
                fail("strategy needs <name> <weight>");
            }
            ds->mixture.strategies.push_back({});
            st       = &ds->mixture.strategies.back();
            st->name = name;
            st_weights->push_back(weight);
        } else if (key == "input_alpha" || key == "target_alpha") {
            if (!st) {
                fail(key + " outside a strategy");
            }
            std::string which;
            double      value;
            if (!(ls >> which >> value)) {
                fail(key + " needs <modality|*> <value>");
            }
            AlphaSpec & spec = key == "input_alpha" ? st->input_alpha : st->target_alpha;
            if (which == "*") {
                spec.sym = value;
            } else {
                spec.per_modality[parse_modality(which, origin, line)] = value;
            }
        } else if (key == "input_pin") {
            if (!st) {
                fail("input_pin outside a strategy");
            }
            std::string which;
            if (!(ls >> which)) {
                fail("input_pin needs a modality");
            }
            st->input_alpha.pins.insert(parse_modality(which, origin, line));
        } else if (key == "input_exclude" || key == "target_exclude") {
            if (!st) {
                fail(key + " outside a strategy");
            }
            std::string which;
            if (!(ls >> which)) {
                fail(key + " needs <modality|*>");
            }
            AlphaSpec & spec = key == "input_exclude" ? st->input_alpha : st->target_alpha;
            if (which == "*") {
                for (int mi = 0; mi < kModalityCount; ++mi) {
                    if (!spec.pinned((Modality) mi)) {
                        spec.excludes.insert((Modality) mi);
                    }
                }
            } else {
                spec.excludes.insert(parse_modality(which, origin, line));
            }
        } else if (key == "budgets") {
            if (!st) {
                fail("budgets outside a strategy");
            }
            if (!(ls >> st->input_budget >> st->target_budget)) {
                fail("budgets needs <input> <target>");
            }
        } else if (key == "span_mean") {
            if (!st) {
                fail("span_mean outside a strategy");
            }
            if (!(ls >> st->span_mean)) {
                fail("span_mean needs a value");
            }
        } else if (key == "rgb_as_pixels") {
            if (!st) {
                fail("rgb_as_pixels outside a strategy");
            }
            int v;
            if (!(ls >> v)) {
                fail("rgb_as_pixels needs 0 or 1");
            }
            st->rgb_as_pixels = v != 0;
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (!saw_header) {
        throw ConfigError(origin + ":1: empty masking config");
    }
    for (auto & d : cfg.datasets) {
        d.mixture.normalize();
    }
    cfg.validate();
    return cfg;
}

std::string MaskingConfig::render() const {
    std::ostringstream os;
    os << "anymodal-masking v1\n";
    for (const auto & ds : datasets) {
        os << "dataset " << ds.name << " " << ds.weight << "\n";
        os << "modalities";
        if (ds.available.bits == ModalitySet::all().bits) {
            os << " *";
        } else {
            for (Modality m : ds.available.list()) {
                os << " " << modality_name(m);
            }
        }
        os << "\n";
        for (size_t i = 0; i < ds.mixture.strategies.size(); ++i) {
            const auto & st = ds.mixture.strategies[i];
            os << "strategy " << st.name << " " << ds.mixture.weights[i] << "\n";
            os << "input_alpha * " << st.input_alpha.sym << "\n";
            for (const auto & [m, a] : st.input_alpha.per_modality) {
                os << "input_alpha " << modality_name(m) << " " << a << "\n";
            }
            for (Modality m : st.input_alpha.pins) {
                os << "input_pin " << modality_name(m) << "\n";
            }
            for (Modality m : st.input_alpha.excludes) {
                os << "input_exclude " << modality_name(m) << "\n";
            }
            os << "target_alpha * " << st.target_alpha.sym << "\n";
            for (const auto & [m, a] : st.target_alpha.per_modality) {
                os << "target_alpha " << modality_name(m) << " " << a << "\n";
            }
            for (Modality m : st.target_alpha.excludes) {
                os << "target_exclude " << modality_name(m) << "\n";
            }
            os << "budgets " << st.input_budget << " " << st.target_budget << "\n";
            os << "span_mean " << st.span_mean << "\n";
            if (st.rgb_as_pixels) {
                os << "rgb_as_pixels 1\n";
            }
        }
    }
    return os.str();
}

MaskingConfig MaskingConfig::default_config(int input_budget, int target_budget) {
    MaskingConfig cfg;

    auto a2a = [&](const std::string & name, double alpha) {
        MaskingStrategy st;
        st.name             = name;
        st.input_alpha.sym  = alpha;
        st.target_alpha.sym = alpha;
        st.input_budget     = input_budget;
        st.target_budget    = target_budget;
        return st;
    };
    auto pinned_to_all = [&](const std::string & name, Modality pin, bool pixels) {
        MaskingStrategy st;
        st.name = name;
        st.input_alpha.pins.insert(pin);
        for (int mi = 0; mi < kModalityCount; ++mi) {
            if ((Modality) mi != pin) {
                st.input_alpha.excludes.insert((Modality) mi);
            }
        }
        st.target_alpha.sym = 0.5;
        st.input_budget     = input_budget;
        st.target_budget    = target_budget;
        st.rgb_as_pixels    = pixels;
        return st;
    };

    // fully covered dataset (CC12M analog)
    {
        DatasetSpec ds;
        ds.name      = "full";
        ds.weight    = 0.6;
        ds.available = ModalitySet::all();
        ds.mixture.strategies = {
            a2a("a2a_0.01", 0.01),
            a2a("a2a_0.1", 0.1),
            a2a("a2a_1.0", 1.0),
            a2a("a2a_10.0", 10.0),
            pinned_to_all("rgb2all", Modality::rgb, false),
            pinned_to_all("rgbpix2all", Modality::rgb, true),
            pinned_to_all("caption2all", Modality::caption, false),
            pinned_to_all("global2all", Modality::global_emb, false),
        };
        ds.mixture.weights.assign(ds.mixture.strategies.size(), 1.0);
        ds.mixture.normalize();
        cfg.datasets.push_back(std::move(ds));
    }
    // reduced 7-modality dataset (COYO analog)
    {
        DatasetSpec ds;
        ds.name   = "core7";
        ds.weight = 0.2;
        for (Modality m : {Modality::rgb, Modality::caption, Modality::depth, Modality::normals,
                           Modality::semantic, Modality::bbox, Modality::dense_feat}) {
            ds.available.add(m);
        }
        ds.mixture.strategies = {
            a2a("a2a_0.01", 0.01),
            a2a("a2a_0.1", 0.1),
            a2a("a2a_1.0", 1.0),
            a2a("a2a_10.0", 10.0),
            pinned_to_all("rgb2all", Modality::rgb, false),
            pinned_to_all("caption2all", Modality::caption, false),
        };
        ds.mixture.weights.assign(ds.mixture.strategies.size(), 1.0);
        ds.mixture.normalize();
        cfg.datasets.push_back(std::move(ds));
    }
    // text-only dataset (C4 analog): span-masked language modeling
    {
        DatasetSpec ds;
        ds.name   = "text";
        ds.weight = 0.2;
        ds.available.add(Modality::caption);
        MaskingStrategy lm;
        lm.name            = "span_lm";
        lm.input_alpha.sym = 1.0;
        lm.target_alpha.sym = 1.0;
        lm.input_budget    = std::max(4, input_budget / 8);
        lm.target_budget   = std::max(16, target_budget / 2);
        ds.mixture.strategies = {lm};
        ds.mixture.weights    = {1.0};
        cfg.datasets.push_back(std::move(ds));
    }
    cfg.validate();
    return cfg;
}

} // namespace anymodal
