#include "anymodal/model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "anymodal/checkpoint.hpp"

namespace anymodal {

using nlohmann::json;

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

std::string ModelConfig::to_json() const {
    json j;
    j["enc_layers"] = enc_layers;
    j["dec_layers"] = dec_layers;
    j["dim"]        = dim;
    j["heads"]      = heads;
    j["ffn_hidden"] = ffn_hidden;
    j["grid_size"]  = grid_size;
    j["image_size"] = image_size;
    j["set_length"] = set_length;
    j["max_seq_len"] = max_seq_len;
    j["init_seed"]   = init_seed;
    json vs = json::array();
    for (int v : vocab_sizes) {
        vs.push_back(v);
    }
    j["vocab_sizes"] = vs;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string & js) {
    const json j = json::parse(js);
    ModelConfig c;
    c.enc_layers = j.at("enc_layers");
    c.dec_layers = j.at("dec_layers");
    c.dim        = j.at("dim");
    c.heads      = j.at("heads");
    c.ffn_hidden = j.at("ffn_hidden");
    c.grid_size  = j.at("grid_size");
    c.image_size = j.at("image_size");
    c.set_length = j.at("set_length");
    c.max_seq_len = j.at("max_seq_len");
    c.init_seed   = j.at("init_seed");
    const auto vs = j.at("vocab_sizes");
    for (size_t i = 0; i < vs.size() && i < (size_t) kModalityCount; ++i) {
        c.vocab_sizes[i] = vs[i];
    }
    return c;
}

ModelConfig ModelConfig::desk_default(int text_vocab, int grid_vocab, int set_vocab) {
    ModelConfig c;
    for (int mi = 0; mi < kModalityCount; ++mi) {
        const Modality m = (Modality) mi;
        switch (modality_kind(m)) {
            case ModalityKind::grid:     c.vocab_sizes[(size_t) mi] = grid_vocab; break;
            case ModalityKind::set:      c.vocab_sizes[(size_t) mi] = set_vocab; break;
            case ModalityKind::sequence: c.vocab_sizes[(size_t) mi] = text_vocab; break;
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// fixed sine-cosine positional tables
// ---------------------------------------------------------------------------

static Tensor sincos_1d(int n_pos, int dim) {
    Tensor pe({n_pos, dim});
    for (int p = 0; p < n_pos; ++p) {
        for (int i = 0; i < dim / 2; ++i) {
            const double w = std::pow(10000.0, -2.0 * i / (double) dim);
            pe.at(p, 2 * i)     = std::sin(p * w);
            pe.at(p, 2 * i + 1) = std::cos(p * w);
        }
    }
    return pe;
}

// 2D table: first half of the channels encodes the row, second half the column
static Tensor sincos_2d(int grid, int dim) {
    const Tensor half = sincos_1d(grid, dim / 2);
    Tensor pe({grid * grid, dim});
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            for (int i = 0; i < dim / 2; ++i) {
                pe.at(r * grid + c, i)          = half.at(r, i);
                pe.at(r * grid + c, dim / 2 + i) = half.at(c, i);
            }
        }
    }
    return pe;
}

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

static constexpr double kInitStd = 0.02;

Model::Model(const ModelConfig & cfg) : cfg_(cfg) {
    if (cfg.dim % cfg.heads != 0) {
        throw ConfigError("model dim not divisible by heads");
    }
    if (cfg.dim % 4 != 0) {
        throw ConfigError("model dim must be a multiple of 4 (2D positional table)");
    }
    Rng rng(cfg.init_seed);

    table_of_.fill(-1);
    head_of_.fill(-1);
    int seq_table = -1, seq_head = -1;
    for (int mi = 0; mi < kModalityCount; ++mi) {
        const Modality m = (Modality) mi;
        const int      vocab = cfg.vocab_sizes[(size_t) mi];
        if (vocab <= 0) {
            continue;
        }
        if (is_sequence(m)) {
            if (seq_table < 0) {
                Parameter table;
                table.name = "tok.seq";
                table.init_shape({vocab, cfg.dim});
                init_trunc_normal(table.value, rng, kInitStd);
                seq_table = (int) tok_tables_.size();
                tok_tables_.push_back(std::move(table));

                Linear head;
                head.setup("head.seq", cfg.dim, vocab, rng, true, kInitStd);
                seq_head = (int) heads_.size();
                heads_.push_back(std::move(head));
            }
            table_of_[(size_t) mi] = seq_table;
            head_of_[(size_t) mi]  = seq_head;
        } else {
            Parameter table;
            table.name = std::string("tok.") + modality_name(m);
            table.init_shape({vocab, cfg.dim});
            init_trunc_normal(table.value, rng, kInitStd);
            table_of_[(size_t) mi] = (int) tok_tables_.size();
            tok_tables_.push_back(std::move(table));

            Linear head;
            head.setup(std::string("head.") + modality_name(m), cfg.dim, vocab, rng, true, kInitStd);
            head_of_[(size_t) mi] = (int) heads_.size();
            heads_.push_back(std::move(head));
        }
    }

    modality_emb_.name = "modality_emb";
    modality_emb_.init_shape({kModalityCount + 1, cfg.dim}); // extra row: pixel RGB
    init_trunc_normal(modality_emb_.value, rng, kInitStd);

    pixel_proj_.setup("pixel_proj", cfg.pixel_patch_dim(), cfg.dim, rng, true, kInitStd);

    enc_.resize((size_t) cfg.enc_layers);
    for (int l = 0; l < cfg.enc_layers; ++l) {
        const std::string base = "enc" + std::to_string(l);
        enc_[(size_t) l].ln1.setup(base + ".ln1", cfg.dim);
        enc_[(size_t) l].attn.setup(base + ".attn", cfg.dim, cfg.heads, rng);
        enc_[(size_t) l].ln2.setup(base + ".ln2", cfg.dim);
        enc_[(size_t) l].ffn.setup(base + ".ffn", cfg.dim, cfg.ffn_hidden, cfg.dim, rng, kInitStd);
    }
    enc_ln_.setup("enc.ln", cfg.dim);
    dec_.resize((size_t) cfg.dec_layers);
    for (int l = 0; l < cfg.dec_layers; ++l) {
        const std::string base = "dec" + std::to_string(l);
        dec_[(size_t) l].ln1.setup(base + ".ln1", cfg.dim);
        dec_[(size_t) l].self_attn.setup(base + ".self", cfg.dim, cfg.heads, rng);
        dec_[(size_t) l].ln2.setup(base + ".ln2", cfg.dim);
        dec_[(size_t) l].cross_attn.setup(base + ".cross", cfg.dim, cfg.heads, rng);
        dec_[(size_t) l].ln3.setup(base + ".ln3", cfg.dim);
        dec_[(size_t) l].ffn.setup(base + ".ffn", cfg.dim, cfg.ffn_hidden, cfg.dim, rng, kInitStd);
    }
    dec_ln_.setup("dec.ln", cfg.dim);

    // attention weight init at transformer scale
    for (auto & b : enc_) {
        for (Linear * lin : {&b.attn.wq, &b.attn.wk, &b.attn.wv, &b.attn.wo}) {
            init_trunc_normal(lin->w.value, rng, kInitStd);
        }
    }
    for (auto & b : dec_) {
        for (Linear * lin : {&b.self_attn.wq, &b.self_attn.wk, &b.self_attn.wv, &b.self_attn.wo,
                             &b.cross_attn.wq, &b.cross_attn.wk, &b.cross_attn.wv, &b.cross_attn.wo}) {
            init_trunc_normal(lin->w.value, rng, kInitStd);
        }
    }

    pos_grid_ = sincos_2d(cfg.grid_size, cfg.dim);
    pos_seq_  = sincos_1d(cfg.max_seq_len, cfg.dim);
}

std::vector<Parameter *> Model::parameters() {
    std::vector<Parameter *> out;
    for (auto & t : tok_tables_) {
        out.push_back(&t);
    }
    out.push_back(&modality_emb_);
    pixel_proj_.collect(out);
    for (auto & b : enc_) {
        b.ln1.collect(out);
        b.attn.collect(out);
        b.ln2.collect(out);
        b.ffn.collect(out);
    }
    enc_ln_.collect(out);
    for (auto & b : dec_) {
        b.ln1.collect(out);
        b.self_attn.collect(out);
        b.ln2.collect(out);
        b.cross_attn.collect(out);
        b.ln3.collect(out);
        b.ffn.collect(out);
    }
    dec_ln_.collect(out);
    for (auto & h : heads_) {
        h.collect(out);
    }
    return out;
}

uint64_t Model::parameter_count() {
    uint64_t n = 0;
    for (Parameter * p : parameters()) {
        n += p->value.numel();
    }
    return n;
}

// ---------------------------------------------------------------------------
// embedding assembly
// ---------------------------------------------------------------------------

const Tensor & Model::pos_for(Modality m, int position) const {
    (void) position;
    return is_grid(m) ? pos_grid_ : pos_seq_;
}

void Model::add_pos_row(Tensor & x, int row, Modality m, int position) const {
    const Tensor & table = pos_for(m, position);
    if (position < 0 || position >= table.rows()) {
        throw InvalidInput("position " + std::to_string(position) + " out of range for " + modality_name(m));
    }
    for (int c = 0; c < cfg_.dim; ++c) {
        x.at(row, c) += table.at(position, c);
    }
}

Model::EncoderAssembly Model::assemble_encoder_input(const TokenBatch & batch) const {
    EncoderAssembly out;
    int n_tok = 0;
    for (const auto & e : batch.input) {
        if (e.modality == Modality::rgb && batch.rgb_as_pixels) {
            continue; // replaced by pixel rows
        }
        n_tok += (int) e.ids.size();
    }
    const int n_pix = batch.rgb_as_pixels && batch.rgb_pixels.numel() > 0 ? batch.rgb_pixels.rows() : 0;

    out.x0.resize({n_tok, cfg_.dim});
    out.gathers.resize((size_t) n_tok);
    out.pixel_rows = n_pix;
    if (n_pix > 0) {
        out.pixel_patches = batch.rgb_pixels;
    }

    int row = 0;
    for (const auto & e : batch.input) {
        if (e.modality == Modality::rgb && batch.rgb_as_pixels) {
            continue;
        }
        const int table = table_of_[(size_t) e.modality];
        if (table < 0) {
            throw InvalidInput(std::string("modality ") + modality_name(e.modality) +
                               " is not registered in this model");
        }
        const Parameter & tok = tok_tables_[(size_t) table];
        for (size_t i = 0; i < e.ids.size(); ++i, ++row) {
            const int id = e.ids[i];
            if (id < 0 || id >= tok.value.rows()) {
                throw InvalidInput("token id " + std::to_string(id) + " outside vocab of " +
                                   modality_name(e.modality));
            }
            for (int c = 0; c < cfg_.dim; ++c) {
                out.x0.at(row, c) = tok.value.at(id, c) + modality_emb_.value.at((int) e.modality, c);
            }
            add_pos_row(out.x0, row, e.modality, e.positions[i]);
            out.gathers[(size_t) row] = {table, id, (int) e.modality};
        }
    }
    return out;
}

// append projected pixel rows to x0 (proj = forward or infer result)
static void append_pixel_rows(Tensor & x0, const Tensor & projected, const Model & model, const ModelConfig & cfg,
                              const Parameter & modality_emb) {
    const int base = x0.rows();
    Tensor expanded({base + projected.rows(), cfg.dim});
    std::copy(x0.data.begin(), x0.data.end(), expanded.data.begin());
    for (int r = 0; r < projected.rows(); ++r) {
        for (int c = 0; c < cfg.dim; ++c) {
            expanded.at(base + r, c) = projected.at(r, c) + modality_emb.value.at(kModalityCount, c) +
                                       model.grid_positions().at(r, c);
        }
    }
    x0 = std::move(expanded);
}

// ---------------------------------------------------------------------------
// inference paths (const, cache-free)
// ---------------------------------------------------------------------------

Tensor Model::encode_infer(const TokenBatch & inputs) const {
    EncoderAssembly asm_ = assemble_encoder_input(inputs);
    Tensor x = asm_.x0;
    if (asm_.pixel_rows > 0) {
        const Tensor projected = pixel_proj_.infer(asm_.pixel_patches);
        append_pixel_rows(x, projected, *this, cfg_, modality_emb_);
    }
    if (x.rows() == 0) {
        return Tensor({0, cfg_.dim});
    }
    for (const auto & b : enc_) {
        const Tensor a = b.attn.infer(b.ln1.infer(x), b.ln1.infer(x), AttnMask::none);
        x = add(x, a);
        const Tensor f = b.ffn.infer(b.ln2.infer(x));
        x = add(x, f);
    }
    return enc_ln_.infer(x);
}

static Tensor decoder_infer_stack(const std::vector<DecoderBlock> & blocks, const LayerNorm & final_ln,
                                  const Tensor & enc_states, Tensor q, AttnMask mask) {
    for (const auto & b : blocks) {
        const Tensor s = b.self_attn.infer(b.ln1.infer(q), b.ln1.infer(q), mask);
        q = add(q, s);
        if (enc_states.rows() > 0) {
            const Tensor x = b.cross_attn.infer(b.ln2.infer(q), enc_states, AttnMask::none);
            q = add(q, x);
        }
        const Tensor f = b.ffn.infer(b.ln3.infer(q));
        q = add(q, f);
    }
    return final_ln.infer(q);
}

Tensor Model::decode_grid_infer(const Tensor & enc_states, Modality m, const std::vector<int> & positions) const {
    const int head = head_of_[(size_t) m];
    if (head < 0) {
        throw InvalidInput(std::string("modality ") + modality_name(m) + " is not registered in this model");
    }
    Tensor q({(int) positions.size(), cfg_.dim});
    for (size_t i = 0; i < positions.size(); ++i) {
        for (int c = 0; c < cfg_.dim; ++c) {
            q.at((int) i, c) = modality_emb_.value.at((int) m, c);
        }
        add_pos_row(q, (int) i, m, positions[i]);
    }
    const Tensor h = decoder_infer_stack(dec_, dec_ln_, enc_states, q, AttnMask::none);
    return heads_[(size_t) head].infer(h);
}

Tensor Model::decode_seq_infer(const Tensor & enc_states, Modality m, const std::vector<int> & prefix) const {
    const int head  = head_of_[(size_t) m];
    const int table = table_of_[(size_t) m];
    if (head < 0 || !is_sequence(m)) {
        throw InvalidInput(std::string("modality ") + modality_name(m) + " is not a registered sequence modality");
    }
    const Parameter & tok = tok_tables_[(size_t) table];
    const int T = (int) prefix.size() + 1;
    if (T > cfg_.max_seq_len) {
        throw InvalidInput("sequence prefix exceeds max_seq_len");
    }
    Tensor q({T, cfg_.dim});
    for (int t = 0; t < T; ++t) {
        const int prev = t == 0 ? 3 /* BOS */ : prefix[(size_t) (t - 1)];
        if (prev < 0 || prev >= tok.value.rows()) {
            throw InvalidInput("sequence token outside vocab");
        }
        for (int c = 0; c < cfg_.dim; ++c) {
            q.at(t, c) = tok.value.at(prev, c) + modality_emb_.value.at((int) m, c);
        }
        add_pos_row(q, t, m, t);
    }
    const Tensor h = decoder_infer_stack(dec_, dec_ln_, enc_states, q, AttnMask::causal);
    return heads_[(size_t) head].infer(h);
}

// ---------------------------------------------------------------------------
// training pass
// ---------------------------------------------------------------------------

Model::StepStats Model::forward_backward(const std::vector<TokenBatch> & batch) {
    StepStats stats;
    std::map<Modality, int> tokens_per_modality;
    int total_tokens = 0;
    for (const auto & tb : batch) {
        total_tokens += tb.target_tokens();
    }
    if (total_tokens == 0) {
        return stats;
    }
    stats.target_tokens = total_tokens;

    for (const auto & tb : batch) {
        // ---- encoder forward
        EncoderAssembly asm_ = assemble_encoder_input(tb);
        Tensor x = asm_.x0;
        if (asm_.pixel_rows > 0) {
            const Tensor projected = pixel_proj_.forward(asm_.pixel_patches);
            append_pixel_rows(x, projected, *this, cfg_, modality_emb_);
        }
        const int n_rows = x.rows();
        std::vector<Tensor> ln1_in((size_t) cfg_.enc_layers), ln2_in((size_t) cfg_.enc_layers);
        Tensor enc_out({0, cfg_.dim});
        if (n_rows > 0) {
            for (int l = 0; l < cfg_.enc_layers; ++l) {
                auto & b = enc_[(size_t) l];
                const Tensor n1 = b.ln1.forward(x);
                const Tensor a  = b.attn.forward(n1, n1, AttnMask::none);
                x = add(x, a);
                const Tensor n2 = b.ln2.forward(x);
                const Tensor f  = b.ffn.forward(n2);
                x = add(x, f);
            }
            enc_out = enc_ln_.forward(x);
        }
        Tensor d_enc(enc_out.shape);

        // ---- decoder passes, one per target entry
        for (const auto & entry : tb.target) {
            const int T = (int) entry.ids.size();
            if (T == 0) {
                continue;
            }
            const Modality m = entry.modality;
            const int head_idx  = head_of_[(size_t) m];
            const int table_idx = table_of_[(size_t) m];
            if (head_idx < 0) {
                throw InvalidInput(std::string("target modality ") + modality_name(m) + " not registered");
            }
            const bool seq = is_sequence(m);

            Tensor q({T, cfg_.dim});
            std::vector<GatherRef> q_gathers((size_t) T);
            for (int t = 0; t < T; ++t) {
                GatherRef ref;
                ref.mod_row = (int) m;
                if (seq) {
                    const Parameter & tok = tok_tables_[(size_t) table_idx];
                    const int prev = t == 0 ? 3 /* BOS */ : entry.ids[(size_t) (t - 1)];
                    if (prev < 0 || prev >= tok.value.rows()) {
                        throw InvalidInput("target token outside vocab of " + std::string(modality_name(m)));
                    }
                    for (int c = 0; c < cfg_.dim; ++c) {
                        q.at(t, c) = tok.value.at(prev, c) + modality_emb_.value.at((int) m, c);
                    }
                    ref.table = table_idx;
                    ref.id    = prev;
                } else {
                    for (int c = 0; c < cfg_.dim; ++c) {
                        q.at(t, c) = modality_emb_.value.at((int) m, c);
                    }
                }
                add_pos_row(q, t, m, entry.positions[(size_t) t]);
                q_gathers[(size_t) t] = ref;
            }

            const AttnMask mask = seq ? AttnMask::causal : AttnMask::none;
            Tensor h = q;
            for (int l = 0; l < cfg_.dec_layers; ++l) {
                auto & b = dec_[(size_t) l];
                const Tensor n1 = b.ln1.forward(h);
                const Tensor s  = b.self_attn.forward(n1, n1, mask);
                h = add(h, s);
                if (enc_out.rows() > 0) {
                    const Tensor n2 = b.ln2.forward(h);
                    const Tensor xa = b.cross_attn.forward(n2, enc_out, AttnMask::none);
                    h = add(h, xa);
                }
                const Tensor n3 = b.ln3.forward(h);
                const Tensor f  = b.ffn.forward(n3);
                h = add(h, f);
            }
            const Tensor hn     = dec_ln_.forward(h);
            const Tensor logits = heads_[(size_t) head_idx].forward(hn);

            Tensor       dlogits;
            const double ce = cross_entropy(logits, entry.ids, &dlogits);
            stats.loss += ce * T / total_tokens;
            stats.loss_per_modality[m] += ce * T;
            tokens_per_modality[m] += T;
            const double scale = (double) T / total_tokens;
            for (auto & v : dlogits.data) {
                v *= scale;
            }

            // ---- decoder backward
            Tensor dh = dec_ln_.backward(heads_[(size_t) head_idx].backward(dlogits));
            for (int l = cfg_.dec_layers - 1; l >= 0; --l) {
                auto & b = dec_[(size_t) l];
                {
                    const Tensor df = b.ffn.backward(dh);
                    const Tensor dn = b.ln3.backward(df);
                    dh = add(dh, dn);
                }
                if (enc_out.rows() > 0) {
                    const auto [dq_x, dkv_x] = b.cross_attn.backward(dh);
                    const Tensor dn = b.ln2.backward(dq_x);
                    dh = add(dh, dn);
                    for (size_t i = 0; i < d_enc.data.size(); ++i) {
                        d_enc.data[i] += dkv_x.data[i];
                    }
                }
                {
                    const auto [dq_s, dkv_s] = b.self_attn.backward(dh);
                    const Tensor dn = b.ln1.backward(add(dq_s, dkv_s));
                    dh = add(dh, dn);
                }
            }
            // scatter query gradients
            for (int t = 0; t < T; ++t) {
                const GatherRef & ref = q_gathers[(size_t) t];
                for (int c = 0; c < cfg_.dim; ++c) {
                    const double g = dh.at(t, c);
                    modality_emb_.grad.at(ref.mod_row, c) += g;
                    if (ref.table >= 0) {
                        tok_tables_[(size_t) ref.table].grad.at(ref.id, c) += g;
                    }
                }
            }
        }

        // ---- encoder backward
        if (n_rows > 0) {
            Tensor dx = enc_ln_.backward(d_enc);
            for (int l = cfg_.enc_layers - 1; l >= 0; --l) {
                auto & b = enc_[(size_t) l];
                {
                    const Tensor df = b.ffn.backward(dx);
                    const Tensor dn = b.ln2.backward(df);
                    dx = add(dx, dn);
                }
                {
                    const auto [dq, dkv] = b.attn.backward(dx);
                    const Tensor dn = b.ln1.backward(add(dq, dkv));
                    dx = add(dx, dn);
                }
            }
            const int n_tok = (int) asm_.gathers.size();
            for (int r = 0; r < n_tok; ++r) {
                const GatherRef & ref = asm_.gathers[(size_t) r];
                for (int c = 0; c < cfg_.dim; ++c) {
                    const double g = dx.at(r, c);
                    modality_emb_.grad.at(ref.mod_row, c) += g;
                    tok_tables_[(size_t) ref.table].grad.at(ref.id, c) += g;
                }
            }
            if (asm_.pixel_rows > 0) {
                Tensor d_pix({asm_.pixel_rows, cfg_.dim});
                for (int r = 0; r < asm_.pixel_rows; ++r) {
                    for (int c = 0; c < cfg_.dim; ++c) {
                        const double g = dx.at(n_tok + r, c);
                        d_pix.at(r, c) = g;
                        modality_emb_.grad.at(kModalityCount, c) += g;
                    }
                }
                pixel_proj_.backward(d_pix);
            }
        }
    }

    for (auto & [m, l] : stats.loss_per_modality) {
        l /= tokens_per_modality[m];
    }
    return stats;
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

void Model::save(const std::string & path, const AdamW * opt) {
    save_checkpoint(path, cfg_.to_json(), parameters(), opt);
}

Model Model::load(const std::string & path, AdamW * opt) {
    const LoadedCheckpoint ck = load_checkpoint(path);
    Model model(ModelConfig::from_json(ck.config_json()));
    ck.restore_params(model.parameters());
    if (opt) {
        opt->bind(model.parameters());
        ck.restore_optimizer(*opt);
    }
    return model;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

TrainResult train_model(Model & model, AdamW & opt, const MaskingConfig & mask_cfg,
                        const std::vector<TokenizedDataset> & data, const Vocabulary & vocab,
                        const TrainConfig & tcfg) {
    TrainResult result;
    uint64_t    draw = 0;
    for (int step = 0; step < tcfg.steps; ++step) {
        std::vector<TokenBatch> batch;
        int input_tokens = 0;
        for (int b = 0; b < tcfg.batch_size; ++b) {
            batch.push_back(sample_training_example(mask_cfg, data, vocab, tcfg.seed, draw++));
            input_tokens += batch.back().input_tokens();
        }
        opt.zero_grad();
        const Model::StepStats stats = model.forward_backward(batch);
        if (!std::isfinite(stats.loss)) {
            throw NumericError("training loss is not finite at step " + std::to_string(step) +
                               (tcfg.checkpoint_path.empty() ? ""
                                                             : "; last good checkpoint: " + tcfg.checkpoint_path));
        }
        opt.step((uint64_t) (input_tokens + stats.target_tokens));

        if (step == 0) {
            result.first_loss = stats.loss;
        }
        result.last_loss = stats.loss;
        if (step % tcfg.log_every == 0 || step + 1 == tcfg.steps) {
            result.loss_curve.push_back(stats.loss);
            result.lr_curve.push_back(opt.current_lr());
        }
        if (step + 1 == tcfg.steps) {
            result.final_loss_per_modality = stats.loss_per_modality;
        }
        if (!tcfg.checkpoint_path.empty() &&
            ((step + 1) % tcfg.checkpoint_every == 0 || step + 1 == tcfg.steps)) {
            model.save(tcfg.checkpoint_path, &opt);
        }
        result.steps_run = (uint64_t) step + 1;
    }
    return result;
}

} // namespace anymodal
