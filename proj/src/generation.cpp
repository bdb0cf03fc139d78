#include "anymodal/generation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace anymodal {

// ---------------------------------------------------------------------------
// schedules
// ---------------------------------------------------------------------------

std::vector<int> schedule_counts(int total, int steps, ScheduleKind kind) {
    if (steps < 1) {
        throw InvalidInput("schedule needs at least one step");
    }
    std::vector<int> counts((size_t) steps, 0);
    int prev = 0;
    for (int t = 1; t <= steps; ++t) {
        int cum;
        if (t == steps) {
            cum = total;
        } else if (kind == ScheduleKind::cosine) {
            cum = (int) std::floor(total * (1.0 - std::cos(3.14159265358979323846 * t / (2.0 * steps))));
        } else {
            cum = (int) std::llround((double) total * t / steps);
        }
        cum = std::clamp(cum, prev, total);
        counts[(size_t) (t - 1)] = cum - prev;
        prev = cum;
    }
    return counts;
}

// ---------------------------------------------------------------------------
// iterative decoding
// ---------------------------------------------------------------------------

static int sample_from_logits(const double * logits, int vocab, double temperature, int top_k, Rng & rng) {
    if (temperature <= 0.0) {
        int    arg  = 0;
        double best = logits[0];
        for (int v = 1; v < vocab; ++v) {
            if (logits[v] > best) {
                best = logits[v];
                arg  = v;
            }
        }
        return arg;
    }
    std::vector<std::pair<double, int>> order;
    order.reserve((size_t) vocab);
    for (int v = 0; v < vocab; ++v) {
        order.push_back({logits[v], v});
    }
    if (top_k > 0 && top_k < vocab) {
        std::partial_sort(order.begin(), order.begin() + top_k, order.end(),
                          [](const auto & a, const auto & b) { return a.first > b.first; });
        order.resize((size_t) top_k);
    }
    double mx = order[0].first;
    for (const auto & [l, v] : order) {
        mx = std::max(mx, l);
    }
    double sum = 0.0;
    std::vector<double> probs(order.size());
    for (size_t i = 0; i < order.size(); ++i) {
        probs[i] = std::exp((order[i].first - mx) / temperature);
        sum += probs[i];
    }
    double r   = rng.uniform() * sum;
    double cum = 0.0;
    for (size_t i = 0; i < order.size(); ++i) {
        cum += probs[i];
        if (r < cum) {
            return order[i].second;
        }
    }
    return order.back().second;
}

static double max_softmax_prob(const double * logits, int vocab) {
    double mx = logits[0];
    for (int v = 1; v < vocab; ++v) {
        mx = std::max(mx, logits[v]);
    }
    double sum = 0.0;
    for (int v = 0; v < vocab; ++v) {
        sum += std::exp(logits[v] - mx);
    }
    return 1.0 / sum; // exp(mx - mx) / sum
}

std::vector<int> iterative_decode(const Model & model, const TokenBatch & inputs, Modality target,
                                  const DecodeSchedule & schedule, Rng & rng,
                                  std::vector<std::vector<int>> * step_commits) {
    if (is_sequence(target)) {
        throw InvalidInput("iterative_decode targets grid/set modalities only");
    }
    const int N = is_grid(target) ? model.config().grid_size * model.config().grid_size
                                  : model.config().set_length;
    std::vector<int> counts = schedule.custom_counts;
    if (counts.empty()) {
        counts = schedule_counts(N, schedule.steps, schedule.kind);
    } else {
        int sum = 0;
        for (int c : counts) {
            sum += c;
        }
        if (sum != N) {
            throw InvalidInput("custom schedule counts sum to " + std::to_string(sum) + ", target needs " +
                               std::to_string(N));
        }
    }

    std::vector<int> committed((size_t) N, -1);
    const int vocab = model.vocab_of(target);
    const int S     = (int) counts.size();

    for (int step = 0; step < S; ++step) {
        const int k = counts[(size_t) step];
        if (k == 0) {
            continue;
        }
        std::vector<int> masked;
        for (int p = 0; p < N; ++p) {
            if (committed[(size_t) p] < 0) {
                masked.push_back(p);
            }
        }
        // conditioning: the original inputs plus everything committed so far
        TokenBatch cond = inputs;
        {
            TokenBatchEntry e;
            e.modality = target;
            for (int p = 0; p < N; ++p) {
                if (committed[(size_t) p] >= 0) {
                    e.ids.push_back(committed[(size_t) p]);
                    e.positions.push_back(p);
                }
            }
            if (!e.ids.empty()) {
                cond.input.push_back(std::move(e));
            }
        }
        const Tensor enc    = model.encode_infer(cond);
        const Tensor logits = model.decode_grid_infer(enc, target, masked);

        // commit the k most confident predictions; confidence = max softmax
        // probability plus Gumbel noise scaled by the annealed temperature
        const double anneal = schedule.temperature * (1.0 - (double) step / S);
        std::vector<std::pair<double, int>> ranked; // (-confidence, masked idx)
        std::vector<int> sampled((size_t) masked.size());
        for (size_t i = 0; i < masked.size(); ++i) {
            const double * row = logits.data.data() + i * (size_t) vocab;
            sampled[i] = sample_from_logits(row, vocab, schedule.temperature, 0, rng);
            double conf = max_softmax_prob(row, vocab);
            if (anneal > 0.0) {
                double u = rng.uniform();
                u = std::max(u, 1e-12);
                const double gumbel = -std::log(-std::log(u));
                conf += anneal * gumbel;
            }
            ranked.push_back({-conf, (int) i});
        }
        std::sort(ranked.begin(), ranked.end());
        std::vector<int> committed_now;
        for (int j = 0; j < k && j < (int) ranked.size(); ++j) {
            const int mi = ranked[(size_t) j].second;
            committed[(size_t) masked[(size_t) mi]] = sampled[(size_t) mi];
            committed_now.push_back(masked[(size_t) mi]);
        }
        if (step_commits) {
            step_commits->push_back(committed_now);
        }
    }
    for (int p = 0; p < N; ++p) {
        if (committed[(size_t) p] < 0) {
            throw NumericError("iterative decode left position " + std::to_string(p) + " uncommitted");
        }
    }
    return committed;
}

// ---------------------------------------------------------------------------
// autoregressive decoding
// ---------------------------------------------------------------------------

static void validate_sequence(const std::vector<int> & ids, Modality m, const TokenizerSet & toks) {
    TokenSequence seq;
    seq.modality = m;
    seq.ids      = ids;
    switch (m) {
        case Modality::caption:  break; // any subword stream is valid text
        case Modality::bbox:     decode_bbox_set(seq, toks.vocab); break;
        case Modality::metadata: decode_metadata(seq, toks.vocab, toks.registry); break;
        case Modality::palette:  decode_palette(seq, toks.vocab); break;
        case Modality::pose:     decode_pose_sequence(seq, toks.vocab); break;
        case Modality::instance: decode_instance_set(seq, toks.vocab); break;
        default: throw InvalidInput("not a sequence modality");
    }
}

SeqDecodeResult autoregressive_decode(const Model & model, const TokenBatch & inputs, Modality target,
                                      const TokenizerSet & toks, const DecodeSchedule & schedule, Rng & rng) {
    if (!is_sequence(target)) {
        throw InvalidInput("autoregressive_decode targets sequence modalities only");
    }
    const Tensor enc = model.encode_infer(inputs);
    const int    eos = toks.vocab.eos_id();

    SeqDecodeResult result;
    for (int attempt = 0; attempt < 3; ++attempt) {
        std::vector<int> prefix;
        const int limit = std::min(schedule.max_seq_len, model.config().max_seq_len - 1);
        for (int t = 0; t < limit; ++t) {
            const Tensor logits = model.decode_seq_infer(enc, target, prefix);
            const double * row = logits.data.data() + (size_t) (logits.rows() - 1) * logits.cols();
            const int id = sample_from_logits(row, logits.cols(), schedule.temperature, schedule.top_k, rng);
            if (id == eos) {
                break;
            }
            prefix.push_back(id);
        }
        try {
            validate_sequence(prefix, target, toks);
            result.ok  = true;
            result.ids = prefix;
            return result;
        } catch (const CodecError & e) {
            result.ids   = prefix; // raw tokens of the last failed attempt
            result.error = e.what();
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// chained generation
// ---------------------------------------------------------------------------

void ChainPlan::validate() const {
    std::set<Modality> seen;
    for (Modality m : targets) {
        if (!seen.insert(m).second) {
            throw ConfigError(std::string("chain plan generates ") + modality_name(m) + " twice");
        }
    }
}

ChainResult chain_generate(const Model & model, const TokenizerSet & toks, const TokenBatch & seed_inputs,
                           const ChainPlan & plan, const DecodeSchedule & schedule, Rng & rng) {
    plan.validate();
    ChainResult result;
    TokenBatch  cond = seed_inputs;

    for (Modality m : plan.targets) {
        if (is_sequence(m)) {
            const SeqDecodeResult r = autoregressive_decode(model, cond, m, toks, schedule, rng);
            result.tokens[m] = r.ids;
            if (!r.ok) {
                result.failures.push_back(std::string(modality_name(m)) + ": " + r.error);
                continue; // partial results propagate, failed output is not fed back
            }
            TokenBatchEntry e;
            e.modality = m;
            e.ids      = r.ids;
            for (int i = 0; i < (int) r.ids.size(); ++i) {
                e.positions.push_back(i);
            }
            cond.input.push_back(std::move(e));
        } else {
            const std::vector<int> ids = iterative_decode(model, cond, m, schedule, rng);
            result.tokens[m] = ids;
            TokenBatchEntry e;
            e.modality = m;
            e.ids      = ids;
            for (int i = 0; i < (int) ids.size(); ++i) {
                e.positions.push_back(i);
            }
            cond.input.push_back(std::move(e));
        }
    }

    // detokenize whatever was generated
    for (const auto & [m, ids] : result.tokens) {
        if (ids.empty()) {
            continue;
        }
        switch (m) {
            case Modality::rgb:        result.payload.rgb = detokenize_rgb(toks, ids); break;
            case Modality::depth:      result.payload.depth = detokenize_depth(toks, ids); break;
            case Modality::normals:    result.payload.normals = detokenize_normals(toks, ids); break;
            case Modality::semantic:   result.payload.semantic = detokenize_semantic(toks, ids); break;
            case Modality::edges_rgb:  result.payload.edges_rgb = detokenize_edges(toks, ids); break;
            case Modality::edges_inst: result.payload.edges_inst = detokenize_edges(toks, ids); break;
            case Modality::dense_feat: result.payload.dense_feat = detokenize_dense(toks, ids); break;
            case Modality::global_emb: result.payload.global_emb = detokenize_global(toks, ids); break;
            case Modality::caption: {
                TokenSequence seq{Modality::caption, ids};
                result.payload.caption = decode_caption(seq, toks.vocab);
                break;
            }
            case Modality::bbox: {
                TokenSequence seq{Modality::bbox, ids};
                try {
                    result.payload.bboxes = decode_bbox_set(seq, toks.vocab);
                } catch (const CodecError &) {
                }
                break;
            }
            case Modality::metadata: {
                TokenSequence seq{Modality::metadata, ids};
                try {
                    apply_metadata(decode_metadata(seq, toks.vocab, toks.registry), result.payload.metadata);
                } catch (const CodecError &) {
                }
                break;
            }
            case Modality::palette: {
                TokenSequence seq{Modality::palette, ids};
                try {
                    result.payload.palettes[0] = decode_palette(seq, toks.vocab);
                } catch (const CodecError &) {
                }
                break;
            }
            case Modality::pose:
            case Modality::instance:
            default:
                break; // structured sequences stay as tokens
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// ensembling
// ---------------------------------------------------------------------------

GridI32 ensemble_semantic(const Model & model, const TokenizerSet & toks, const TokenBatch & inputs,
                          const DecodeSchedule & schedule, const EnsembleRule & rule, Rng & rng) {
    if (rule.n < 1) {
        throw InvalidInput("ensemble needs n >= 1");
    }
    std::vector<GridI32> maps;
    for (int i = 0; i < rule.n; ++i) {
        Rng local = Rng::derive(rng.next_u64(), (uint64_t) i);
        maps.push_back(detokenize_semantic(toks, iterative_decode(model, inputs, Modality::semantic, schedule, local)));
    }
    GridI32 out(64, 64);
    for (size_t px = 0; px < out.data.size(); ++px) {
        std::array<int, 16> votes{};
        for (const auto & m : maps) {
            votes[(size_t) m.data[px]]++;
        }
        int best = 0;
        for (int c = 1; c < 16; ++c) {
            if (votes[(size_t) c] > votes[(size_t) best]) {
                best = c; // ties keep the lowest class id
            }
        }
        out.data[px] = best;
    }
    return out;
}

GridF32 ensemble_normals(const Model & model, const TokenizerSet & toks, const TokenBatch & inputs,
                         const DecodeSchedule & schedule, const EnsembleRule & rule, Rng & rng) {
    if (rule.n < 1) {
        throw InvalidInput("ensemble needs n >= 1");
    }
    std::vector<GridF32> maps;
    for (int i = 0; i < rule.n; ++i) {
        Rng local = Rng::derive(rng.next_u64(), (uint64_t) i);
        maps.push_back(detokenize_normals(toks, iterative_decode(model, inputs, Modality::normals, schedule, local)));
    }
    GridF32 out(64, 64, 3);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            double m[3] = {0, 0, 0};
            for (const auto & g : maps) {
                for (int c = 0; c < 3; ++c) {
                    m[c] += g.at(y, x, c);
                }
            }
            const double norm = std::sqrt(m[0] * m[0] + m[1] * m[1] + m[2] * m[2]);
            if (norm < 1e-9) {
                out.at(y, x, 2) = 1.0f;
            } else {
                for (int c = 0; c < 3; ++c) {
                    out.at(y, x, c) = (float) (m[c] / norm);
                }
            }
        }
    }
    return out;
}

GridF32 ensemble_depth(const Model & model, const TokenizerSet & toks, const TokenBatch & inputs,
                       const DecodeSchedule & schedule, const EnsembleRule & rule, Rng & rng) {
    if (rule.n < 1) {
        throw InvalidInput("ensemble needs n >= 1");
    }
    std::vector<GridF32> maps;
    for (int i = 0; i < rule.n; ++i) {
        Rng local = Rng::derive(rng.next_u64(), (uint64_t) i);
        maps.push_back(detokenize_depth(toks, iterative_decode(model, inputs, Modality::depth, schedule, local)));
    }
    GridF32 out(64, 64, 1);
    std::vector<float> vals((size_t) rule.n);
    for (size_t px = 0; px < out.data.size(); ++px) {
        for (int i = 0; i < rule.n; ++i) {
            vals[(size_t) i] = maps[(size_t) i].data[px];
        }
        std::sort(vals.begin(), vals.end());
        out.data[px] = rule.n % 2 ? vals[(size_t) (rule.n / 2)]
                                  : 0.5f * (vals[(size_t) (rule.n / 2 - 1)] + vals[(size_t) (rule.n / 2)]);
    }
    return out;
}

std::vector<int> ensemble_sequence(const Model & model, const TokenizerSet & toks, const TokenBatch & inputs,
                                   Modality target, const DecodeSchedule & schedule, const EnsembleRule & rule,
                                   Rng & rng) {
    if (rule.n < 1) {
        throw InvalidInput("ensemble needs n >= 1");
    }
    // sequences reduce to the first sample: token-level voting has no meaning
    // for grammar streams
    Rng local = Rng::derive(rng.next_u64(), 0);
    for (int i = 1; i < rule.n; ++i) {
        (void) rng.next_u64(); // keep the draw pattern aligned with the grid reducers
    }
    return autoregressive_decode(model, inputs, target, toks, schedule, local).ids;
}

double normals_angular_error(const GridF32 & a, const GridF32 & b) {
    double sum = 0.0;
    const int H = a.height, W = a.width;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double dot = 0.0;
            for (int c = 0; c < 3; ++c) {
                dot += (double) a.at(y, x, c) * b.at(y, x, c);
            }
            dot = std::clamp(dot, -1.0, 1.0);
            sum += std::acos(dot) * 180.0 / 3.14159265358979323846;
        }
    }
    return sum / (H * W);
}

double semantic_miou(const std::vector<GridI32> & pred, const std::vector<GridI32> & truth, int classes) {
    if (pred.size() != truth.size() || pred.empty()) {
        throw InvalidInput("semantic_miou: size mismatch");
    }
    std::vector<long> inter((size_t) classes, 0), uni((size_t) classes, 0);
    for (size_t i = 0; i < pred.size(); ++i) {
        for (size_t px = 0; px < pred[i].data.size(); ++px) {
            const int p = pred[i].data[px], t = truth[i].data[px];
            if (p == t) {
                inter[(size_t) p]++;
                uni[(size_t) p]++;
            } else {
                uni[(size_t) p]++;
                uni[(size_t) t]++;
            }
        }
    }
    double sum = 0.0;
    int    n   = 0;
    for (int c = 0; c < classes; ++c) {
        if (uni[(size_t) c] > 0) {
            sum += (double) inter[(size_t) c] / (double) uni[(size_t) c];
            n++;
        }
    }
    return n ? sum / n : 1.0;
}

} // namespace anymodal
