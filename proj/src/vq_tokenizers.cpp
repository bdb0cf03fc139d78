#include "anymodal/vq_tokenizers.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "anymodal/checkpoint.hpp"
#include "anymodal/errors.hpp"
#include "anymodal/optim.hpp"

namespace anymodal {

using nlohmann::json;

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

const char * recon_loss_name(ReconLoss l) {
    switch (l) {
        case ReconLoss::smooth_l1:     return "smooth_l1";
        case ReconLoss::l1:            return "l1";
        case ReconLoss::mse:           return "mse";
        case ReconLoss::cosine:        return "cosine";
        case ReconLoss::cross_entropy: return "cross_entropy";
        case ReconLoss::dice:          return "dice";
    }
    return "?";
}

ReconLoss recon_loss_from_name(const std::string & name) {
    for (ReconLoss l : {ReconLoss::smooth_l1, ReconLoss::l1, ReconLoss::mse, ReconLoss::cosine,
                        ReconLoss::cross_entropy, ReconLoss::dice}) {
        if (name == recon_loss_name(l)) {
            return l;
        }
    }
    throw ConfigError("unknown reconstruction loss '" + name + "'");
}

double recon_loss_continuous(ReconLoss kind, const Tensor & y, const Tensor & target, Tensor & dy,
                             double smooth_beta) {
    if (!y.same_shape(target)) {
        throw InvalidInput("recon loss: shape mismatch " + shape_str(y) + " vs " + shape_str(target));
    }
    dy.resize(y.shape);
    const size_t n = y.numel();
    double loss = 0.0;
    switch (kind) {
        case ReconLoss::smooth_l1: {
            const double b = smooth_beta;
            for (size_t i = 0; i < n; ++i) {
                const double d  = y.data[i] - target.data[i];
                const double ad = std::fabs(d);
                loss += ad < b ? 0.5 * d * d / b : ad - 0.5 * b;
                dy.data[i] = std::clamp(d / b, -1.0, 1.0) / (double) n;
            }
            return loss / (double) n;
        }
        case ReconLoss::l1: {
            for (size_t i = 0; i < n; ++i) {
                const double d = y.data[i] - target.data[i];
                loss += std::fabs(d);
                dy.data[i] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / (double) n;
            }
            return loss / (double) n;
        }
        case ReconLoss::mse: {
            for (size_t i = 0; i < n; ++i) {
                const double d = y.data[i] - target.data[i];
                loss += d * d;
                dy.data[i] = 2.0 * d / (double) n;
            }
            return loss / (double) n;
        }
        case ReconLoss::cosine: {
            const int R = y.rows(), C = y.cols();
            for (int r = 0; r < R; ++r) {
                const double * yr = y.data.data() + (size_t) r * C;
                const double * tr = target.data.data() + (size_t) r * C;
                double yy = 1e-12, tt = 1e-12, yt = 0.0;
                for (int c = 0; c < C; ++c) {
                    yy += yr[c] * yr[c];
                    tt += tr[c] * tr[c];
                    yt += yr[c] * tr[c];
                }
                const double ny = std::sqrt(yy), nt = std::sqrt(tt);
                const double cosv = yt / (ny * nt);
                loss += 1.0 - cosv;
                double * dr = dy.data.data() + (size_t) r * C;
                for (int c = 0; c < C; ++c) {
                    dr[c] = -(tr[c] / (ny * nt) - cosv * yr[c] / yy) / (double) R;
                }
            }
            return loss / (double) R;
        }
        default:
            throw InvalidInput("recon_loss_continuous: categorical loss kind");
    }
}

double recon_loss_categorical(const Tensor & y, const std::vector<int> & targets, int classes, Tensor & dy) {
    const int rows = y.rows();
    const int pix  = y.cols() / classes;
    if ((int) targets.size() != rows * pix) {
        throw InvalidInput("categorical loss: target count mismatch");
    }
    // view as [rows*pix, classes]
    Tensor view({rows * pix, classes});
    view.data = y.data;
    Tensor dview;
    const double loss = cross_entropy(view, targets, &dview);
    dy.resize(y.shape);
    dy.data = dview.data;
    return loss;
}

double recon_loss_dice(const Tensor & y, const std::vector<int> & targets, Tensor & dy) {
    const int rows = y.rows();
    const int pix  = y.cols() / 2;
    if ((int) targets.size() != rows * pix) {
        throw InvalidInput("dice loss: target count mismatch");
    }
    dy.resize(y.shape);
    dy.zero();
    const double eps = 1.0;
    double loss = 0.0;
    for (int r = 0; r < rows; ++r) {
        const double * row = y.data.data() + (size_t) r * y.cols();
        double sum_p = 0.0, sum_t = 0.0, sum_pt = 0.0;
        std::vector<double> p((size_t) pix);
        for (int i = 0; i < pix; ++i) {
            const double l0 = row[2 * i], l1 = row[2 * i + 1];
            p[(size_t) i] = 1.0 / (1.0 + std::exp(l0 - l1));
            const double t = targets[(size_t) (r * pix + i)] ? 1.0 : 0.0;
            sum_p += p[(size_t) i];
            sum_t += t;
            sum_pt += p[(size_t) i] * t;
        }
        const double denom = sum_p + sum_t + eps;
        const double dice  = (2.0 * sum_pt + eps) / denom;
        loss += 1.0 - dice;
        double * drow = dy.data.data() + (size_t) r * y.cols();
        for (int i = 0; i < pix; ++i) {
            const double t  = targets[(size_t) (r * pix + i)] ? 1.0 : 0.0;
            const double dd = (2.0 * t * denom - (2.0 * sum_pt + eps)) / (denom * denom);
            const double dp = -dd / rows; // d(1 - dice)/dp
            const double s  = p[(size_t) i] * (1.0 - p[(size_t) i]);
            drow[2 * i + 1] += dp * s;
            drow[2 * i] -= dp * s;
        }
    }
    return loss / rows;
}

// ---------------------------------------------------------------------------
// patch adapters
// ---------------------------------------------------------------------------

template <typename G>
static Tensor patches_impl(const G & g, int patch_h, int patch_w, double scale, double offset) {
    const int H = g.height, W = g.width, C = g.channels;
    if (H % patch_h != 0 || W % patch_w != 0) {
        throw InvalidInput("patch size does not divide the grid");
    }
    const int gh = H / patch_h, gw = W / patch_w;
    Tensor out({gh * gw, patch_h * patch_w * C});
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            double * row = out.data.data() + (size_t) (py * gw + px) * out.cols();
            int      idx = 0;
            for (int y = 0; y < patch_h; ++y) {
                for (int x = 0; x < patch_w; ++x) {
                    for (int c = 0; c < C; ++c) {
                        row[idx++] = (double) g.at(py * patch_h + y, px * patch_w + x, c) * scale + offset;
                    }
                }
            }
        }
    }
    return out;
}

Tensor patches_from_f32(const GridF32 & g, int patch_h, int patch_w, double scale, double offset) {
    return patches_impl(g, patch_h, patch_w, scale, offset);
}

Tensor patches_from_u8(const GridU8 & g, int patch_h, int patch_w, double scale, double offset) {
    return patches_impl(g, patch_h, patch_w, scale, offset);
}

Tensor patches_onehot(const GridI32 & ids, int classes, int patch_h, int patch_w) {
    const int H = ids.height, W = ids.width;
    const int gh = H / patch_h, gw = W / patch_w;
    Tensor out({gh * gw, patch_h * patch_w * classes});
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            double * row = out.data.data() + (size_t) (py * gw + px) * out.cols();
            int      idx = 0;
            for (int y = 0; y < patch_h; ++y) {
                for (int x = 0; x < patch_w; ++x) {
                    const int cls = ids.at(py * patch_h + y, px * patch_w + x);
                    if (cls < 0 || cls >= classes) {
                        throw InvalidInput("patches_onehot: class id out of range");
                    }
                    row[idx + cls] = 1.0;
                    idx += classes;
                }
            }
        }
    }
    return out;
}

std::vector<int> patch_targets(const GridI32 & ids, int patch_h, int patch_w) {
    const int H = ids.height, W = ids.width;
    const int gh = H / patch_h, gw = W / patch_w;
    std::vector<int> out;
    out.reserve((size_t) H * W);
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            for (int y = 0; y < patch_h; ++y) {
                for (int x = 0; x < patch_w; ++x) {
                    out.push_back(ids.at(py * patch_h + y, px * patch_w + x));
                }
            }
        }
    }
    return out;
}

std::vector<int> patch_targets_u8(const GridU8 & mask, int patch_h, int patch_w) {
    GridI32 ids(mask.height, mask.width);
    for (size_t i = 0; i < mask.data.size(); ++i) {
        ids.data[i] = mask.data[i] ? 1 : 0;
    }
    return patch_targets(ids, patch_h, patch_w);
}

GridF32 grid_from_patches(const Tensor & patches, int H, int W, int channels, int patch_h, int patch_w,
                          double scale, double offset) {
    const int gh = H / patch_h, gw = W / patch_w;
    GridF32 g(H, W, channels);
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            const double * row = patches.data.data() + (size_t) (py * gw + px) * patches.cols();
            int idx = 0;
            for (int y = 0; y < patch_h; ++y) {
                for (int x = 0; x < patch_w; ++x) {
                    for (int c = 0; c < channels; ++c) {
                        g.at(py * patch_h + y, px * patch_w + x, c) = (float) (row[idx++] * scale + offset);
                    }
                }
            }
        }
    }
    return g;
}

GridI32 ids_from_patch_logits(const Tensor & logits, int H, int W, int classes, int patch_h, int patch_w) {
    const int gh = H / patch_h, gw = W / patch_w;
    GridI32 g(H, W);
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            const double * row = logits.data.data() + (size_t) (py * gw + px) * logits.cols();
            int idx = 0;
            for (int y = 0; y < patch_h; ++y) {
                for (int x = 0; x < patch_w; ++x) {
                    int    arg  = 0;
                    double best = row[idx];
                    for (int c = 1; c < classes; ++c) {
                        if (row[idx + c] > best) {
                            best = row[idx + c];
                            arg  = c;
                        }
                    }
                    g.at(py * patch_h + y, px * patch_w + x) = arg;
                    idx += classes;
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// spatial tokenizer
// ---------------------------------------------------------------------------

std::string SpatialTokenizerConfig::to_json() const {
    json j;
    j["name"]        = name;
    j["image_size"]  = image_size;
    j["in_channels"] = in_channels;
    j["patch_h"]     = patch_h;
    j["patch_w"]     = patch_w;
    j["latent_dim"]  = latent_dim;
    j["width"]       = width;
    j["vocab"]       = vocab;
    j["loss"]        = recon_loss_name(loss);
    j["classes"]     = classes;
    j["smooth_l1_beta"] = smooth_l1_beta;
    return j.dump();
}

SpatialTokenizerConfig SpatialTokenizerConfig::from_json(const std::string & js) {
    const json j = json::parse(js);
    SpatialTokenizerConfig c;
    c.name        = j.at("name");
    c.image_size  = j.at("image_size");
    c.in_channels = j.at("in_channels");
    c.patch_h     = j.at("patch_h");
    c.patch_w     = j.at("patch_w");
    c.latent_dim  = j.at("latent_dim");
    c.width       = j.at("width");
    c.vocab       = j.at("vocab");
    c.loss        = recon_loss_from_name(j.at("loss"));
    c.classes     = j.at("classes");
    c.smooth_l1_beta = j.at("smooth_l1_beta");
    return c;
}

std::vector<int> SpatialTokenizer::tokenize(const Tensor & patches) const {
    if (!trained) {
        throw InvalidInput("tokenize: tokenizer '" + cfg.name + "' is untrained");
    }
    const Tensor z = enc.infer(patches);
    std::vector<int> ids((size_t) z.rows());
    for (int r = 0; r < z.rows(); ++r) {
        ids[(size_t) r] = quantize(book, z.data.data() + (size_t) r * z.cols()).index;
    }
    return ids;
}

Tensor SpatialTokenizer::detokenize(const std::vector<int> & ids) const {
    if (!trained) {
        throw InvalidInput("detokenize: tokenizer '" + cfg.name + "' is untrained");
    }
    Tensor zq({(int) ids.size(), book.D});
    for (size_t r = 0; r < ids.size(); ++r) {
        const int id = ids[r];
        if (id < 0 || id >= book.K) {
            throw InvalidInput("detokenize: id outside codebook");
        }
        std::copy_n(book.vectors.data() + (size_t) id * book.D, book.D, zq.data.data() + r * book.D);
    }
    return dec.infer(zq);
}

void SpatialTokenizer::collect(std::vector<Parameter *> & out) {
    enc.collect(out);
    dec.collect(out);
}

static void save_codebook_sections(SectionFile & f, const std::string & base, const Codebook & b) {
    Section meta;
    meta.name  = base + "/meta";
    meta.shape = {3};
    meta.data  = {(double) b.K, (double) b.D, b.decay};
    f.sections.push_back(meta);
    f.add_raw(base + "/vectors", b.vectors);
    f.add_raw(base + "/counts", b.ema_counts);
    f.add_raw(base + "/sums", b.ema_sums);
}

static Codebook load_codebook_sections(const SectionFile & f, const std::string & base) {
    const Section & meta = f.find(base + "/meta");
    Codebook b;
    b.K          = (int) meta.data[0];
    b.D          = (int) meta.data[1];
    b.decay      = meta.data[2];
    b.vectors    = f.find(base + "/vectors").data;
    b.ema_counts = f.find(base + "/counts").data;
    b.ema_sums   = f.find(base + "/sums").data;
    return b;
}

void SpatialTokenizer::save(const std::string & path) const {
    SectionFile f;
    f.config = cfg.to_json();
    std::vector<Parameter *> params;
    const_cast<SpatialTokenizer *>(this)->collect(params);
    for (const Parameter * p : params) {
        f.add("param/" + p->name, p->value);
    }
    save_codebook_sections(f, "codebook", book);
    f.save(path, "VQTK", 1);
}

SpatialTokenizer SpatialTokenizer::load(const std::string & path) {
    const SectionFile f = SectionFile::load(path, "VQTK", 1);
    SpatialTokenizer  tok;
    tok.cfg = SpatialTokenizerConfig::from_json(f.config);
    Rng rng(0);
    tok.enc.setup(tok.cfg.name + ".enc", tok.cfg.patch_dim(), tok.cfg.width, tok.cfg.latent_dim, rng);
    tok.dec.setup(tok.cfg.name + ".dec", tok.cfg.latent_dim, tok.cfg.width, tok.cfg.out_dim(), rng);
    std::vector<Parameter *> params;
    tok.collect(params);
    for (Parameter * p : params) {
        const Section & s = f.find("param/" + p->name);
        if (s.shape != p->value.shape) {
            throw ArtifactError("tokenizer section shape mismatch for " + p->name);
        }
        p->value.data = s.data;
    }
    tok.book    = load_codebook_sections(f, "codebook");
    tok.trained = true;
    return tok;
}

SpatialTokenizer train_spatial_tokenizer(const std::vector<Tensor> & images,
                                         const std::vector<std::vector<int>> & targets,
                                         const SpatialTokenizerConfig & cfg, TokenizerTrainReport * report) {
    if (images.empty()) {
        throw ConfigError("train_spatial_tokenizer: empty training set");
    }
    const bool categorical = cfg.classes > 0;
    if (categorical && targets.size() != images.size()) {
        throw ConfigError("train_spatial_tokenizer: categorical targets missing");
    }
    if (cfg.image_size % cfg.patch_h != 0 || cfg.image_size % cfg.patch_w != 0) {
        throw ConfigError("patch size must divide image_size");
    }

    Rng rng(cfg.seed);
    SpatialTokenizer tok;
    tok.cfg = cfg;
    tok.enc.setup(cfg.name + ".enc", cfg.patch_dim(), cfg.width, cfg.latent_dim, rng);
    tok.dec.setup(cfg.name + ".dec", cfg.latent_dim, cfg.width, cfg.out_dim(), rng);

    const int n_hold  = std::max(1, (int) std::llround(cfg.holdout_fraction * (double) images.size()));
    const int n_train = std::max(1, (int) images.size() - n_hold);

    // codebook init: k-means over encoder outputs of a sample of patches
    {
        const int    want = 4096;
        const int    tpi  = cfg.tokens_per_image();
        Tensor       init_x({std::min(want, n_train * tpi), cfg.patch_dim()});
        for (int r = 0; r < init_x.rows(); ++r) {
            const Tensor & img = images[(size_t) rng.uniform_int(n_train)];
            const int      p   = rng.uniform_int(tpi);
            std::copy_n(img.data.data() + (size_t) p * cfg.patch_dim(), cfg.patch_dim(),
                        init_x.data.data() + (size_t) r * cfg.patch_dim());
        }
        const Tensor z0 = tok.enc.infer(init_x);
        const int    k  = std::min(cfg.vocab, z0.rows());
        tok.book        = kmeans_init(z0.data.data(), z0.rows(), cfg.latent_dim, k, cfg.seed ^ 0xc0deb00c,
                                      cfg.codebook_decay);
        if (k < cfg.vocab) {
            // pad tiny training sets by repeating entries
            tok.book.K = cfg.vocab;
            tok.book.vectors.resize((size_t) cfg.vocab * cfg.latent_dim);
            tok.book.ema_counts.resize((size_t) cfg.vocab, 1.0);
            tok.book.ema_sums.resize((size_t) cfg.vocab * cfg.latent_dim);
            for (int i = k; i < cfg.vocab; ++i) {
                std::copy_n(tok.book.vectors.data() + (size_t) (i % k) * cfg.latent_dim, cfg.latent_dim,
                            tok.book.vectors.data() + (size_t) i * cfg.latent_dim);
                std::copy_n(tok.book.ema_sums.data() + (size_t) (i % k) * cfg.latent_dim, cfg.latent_dim,
                            tok.book.ema_sums.data() + (size_t) i * cfg.latent_dim);
            }
        }
    }

    AdamWConfig ocfg;
    ocfg.lr           = cfg.lr;
    ocfg.beta1        = 0.9;
    ocfg.beta2        = 0.999;
    ocfg.weight_decay = 0.0;
    ocfg.warmup_tokens = (uint64_t) cfg.steps * (uint64_t) (cfg.batch_images * cfg.tokens_per_image()) / 20;
    ocfg.total_tokens  = (uint64_t) cfg.steps * (uint64_t) (cfg.batch_images * cfg.tokens_per_image());
    AdamW opt(ocfg);
    std::vector<Parameter *> params;
    tok.collect(params);
    opt.bind(params);

    const int tpi = cfg.tokens_per_image();
    const int B   = cfg.batch_images * tpi;
    Tensor    x({B, cfg.patch_dim()});
    std::vector<int> batch_targets((size_t) cfg.batch_images * (size_t) (tpi * cfg.pix()));
    std::vector<int> ids((size_t) B);
    Tensor           zq, dy;

    for (int step = 0; step < cfg.steps; ++step) {
        Tensor target({B, cfg.patch_dim()});
        for (int bi = 0; bi < cfg.batch_images; ++bi) {
            const int      im  = rng.uniform_int(n_train);
            const Tensor & img = images[(size_t) im];
            std::copy_n(img.data.data(), (size_t) tpi * cfg.patch_dim(),
                        x.data.data() + (size_t) bi * tpi * cfg.patch_dim());
            if (categorical) {
                std::copy_n(targets[(size_t) im].data(), (size_t) tpi * cfg.pix(),
                            batch_targets.data() + (size_t) bi * tpi * cfg.pix());
            } else {
                std::copy_n(img.data.data(), (size_t) tpi * cfg.patch_dim(),
                            target.data.data() + (size_t) bi * tpi * cfg.patch_dim());
            }
        }

        const Tensor z = tok.enc.forward(x);
        zq.resize(z.shape);
        for (int r = 0; r < B; ++r) {
            const QuantizeResult q = quantize(tok.book, z.data.data() + (size_t) r * cfg.latent_dim);
            ids[(size_t) r] = q.index;
            std::copy_n(tok.book.vectors.data() + (size_t) q.index * cfg.latent_dim, cfg.latent_dim,
                        zq.data.data() + (size_t) r * cfg.latent_dim);
        }
        const Tensor y = tok.dec.forward(zq);

        double loss;
        if (categorical) {
            loss = cfg.loss == ReconLoss::dice ? recon_loss_dice(y, batch_targets, dy)
                                               : recon_loss_categorical(y, batch_targets, cfg.classes, dy);
        } else {
            loss = recon_loss_continuous(cfg.loss, y, target, dy, cfg.smooth_l1_beta);
        }
        if (!std::isfinite(loss)) {
            throw NumericError("tokenizer '" + cfg.name + "' diverged at step " + std::to_string(step) +
                               " (loss not finite)");
        }

        opt.zero_grad();
        Tensor dz = tok.dec.backward(dy); // straight-through: encoder sees the quantized-value gradient
        double commit = 0.0;
        if (cfg.commitment_beta > 0.0) {
            const double scale = 2.0 * cfg.commitment_beta / (double) z.numel();
            for (size_t i = 0; i < dz.data.size(); ++i) {
                const double diff = z.data[i] - zq.data[i];
                commit += diff * diff;
                dz.data[i] += scale * diff;
            }
            commit *= cfg.commitment_beta / (double) z.numel();
        }
        tok.enc.backward(dz);
        opt.step((uint64_t) B);
        ema_update(tok.book, z.data.data(), ids, B, rng);

        if (report && (step % 25 == 0 || step + 1 == cfg.steps)) {
            report->loss_curve.push_back(loss + commit);
        }
    }

    tok.trained = true;

    if (report) {
        report->steps = cfg.steps;
        double hold_loss = 0.0, hold_metric = 0.0;
        int    count = 0;
        for (size_t i = (size_t) n_train; i < images.size(); ++i) {
            const Tensor & img = images[i];
            const auto     tid = tok.tokenize(img);
            const Tensor   rec = tok.detokenize(tid);
            Tensor         dummy;
            if (categorical) {
                hold_loss += cfg.loss == ReconLoss::dice
                                 ? recon_loss_dice(rec, targets[i], dummy)
                                 : recon_loss_categorical(rec, targets[i], cfg.classes, dummy);
                // IoU over foreground classes (macro)
                const int pix = cfg.pix();
                double    iou_sum = 0.0;
                int       iou_n   = 0;
                for (int cls = 1; cls < cfg.classes; ++cls) {
                    size_t inter = 0, uni = 0;
                    for (int r = 0; r < rec.rows(); ++r) {
                        const double * row = rec.data.data() + (size_t) r * rec.cols();
                        for (int p = 0; p < pix; ++p) {
                            int    arg  = 0;
                            double best = row[(size_t) p * cfg.classes];
                            for (int c = 1; c < cfg.classes; ++c) {
                                if (row[(size_t) p * cfg.classes + c] > best) {
                                    best = row[(size_t) p * cfg.classes + c];
                                    arg  = c;
                                }
                            }
                            const bool pa = arg == cls;
                            const bool pb = targets[i][(size_t) (r * pix + p)] == cls;
                            inter += (pa && pb) ? 1 : 0;
                            uni += (pa || pb) ? 1 : 0;
                        }
                    }
                    if (uni > 0) {
                        iou_sum += (double) inter / (double) uni;
                        iou_n++;
                    }
                }
                hold_metric += iou_n > 0 ? iou_sum / iou_n : 1.0;
            } else {
                const double l = recon_loss_continuous(cfg.loss, rec, img, dummy, cfg.smooth_l1_beta);
                hold_loss += l;
                hold_metric += -l;
            }
            count++;
        }
        report->holdout_loss   = count ? hold_loss / count : 0.0;
        report->holdout_metric = count ? hold_metric / count : 0.0;
    }
    return tok;
}

SpatialTokenizer train_mask_tokenizer(const std::vector<GridU8> & masks, const SpatialTokenizerConfig & cfg_in,
                                      TokenizerTrainReport * report) {
    if (masks.empty()) {
        throw ConfigError("train_mask_tokenizer: empty training set");
    }
    SpatialTokenizerConfig cfg = cfg_in;
    cfg.in_channels = 1;
    cfg.classes     = 2;
    if (cfg.loss != ReconLoss::cross_entropy && cfg.loss != ReconLoss::dice) {
        cfg.loss = ReconLoss::cross_entropy;
    }
    std::vector<Tensor>           images;
    std::vector<std::vector<int>> targets;
    images.reserve(masks.size());
    for (const auto & m : masks) {
        if (m.height != cfg.image_size || m.width != cfg.image_size) {
            throw InvalidInput("mask tokenizer expects " + std::to_string(cfg.image_size) + "^2 masks");
        }
        images.push_back(patches_from_u8(m, cfg.patch_h, cfg.patch_w));
        targets.push_back(patch_targets_u8(m, cfg.patch_h, cfg.patch_w));
    }
    return train_spatial_tokenizer(images, targets, cfg, report);
}

double mask_tokenizer_iou(const SpatialTokenizer & tok, const std::vector<GridU8> & masks) {
    double total = 0.0;
    for (const auto & m : masks) {
        const Tensor patches = patches_from_u8(m, tok.cfg.patch_h, tok.cfg.patch_w);
        const Tensor rec     = tok.detokenize(tok.tokenize(patches));
        const GridI32 recon  = ids_from_patch_logits(rec, tok.cfg.image_size, tok.cfg.image_size, tok.cfg.classes,
                                                     tok.cfg.patch_h, tok.cfg.patch_w);
        GridU8 rmask(m.height, m.width, 1, 0);
        for (size_t i = 0; i < rmask.data.size(); ++i) {
            rmask.data[i] = recon.data[i] == 1 ? 1 : 0;
        }
        total += mask_iou(m, rmask);
    }
    return total / (double) masks.size();
}

// ---------------------------------------------------------------------------
// bottleneck VAE
// ---------------------------------------------------------------------------

std::string BottleneckVAEConfig::to_json() const {
    json j;
    j["name"]      = name;
    j["input_dim"] = input_dim;
    j["n_tokens"]  = n_tokens;
    j["slice_dim"] = slice_dim;
    j["width"]     = width;
    j["vocab"]     = vocab;
    j["loss"]      = recon_loss_name(loss);
    j["smooth_l1_beta"] = smooth_l1_beta;
    return j.dump();
}

BottleneckVAEConfig BottleneckVAEConfig::from_json(const std::string & js) {
    const json j = json::parse(js);
    BottleneckVAEConfig c;
    c.name      = j.at("name");
    c.input_dim = j.at("input_dim");
    c.n_tokens  = j.at("n_tokens");
    c.slice_dim = j.at("slice_dim");
    c.width     = j.at("width");
    c.vocab     = j.at("vocab");
    c.loss      = recon_loss_from_name(j.at("loss"));
    c.smooth_l1_beta = j.at("smooth_l1_beta");
    return c;
}

std::vector<int> BottleneckVAE::encode_vec(const std::vector<double> & x) const {
    if (!trained) {
        throw InvalidInput("encode: bottleneck VAE '" + cfg.name + "' is untrained");
    }
    if ((int) x.size() != cfg.input_dim) {
        throw InvalidInput("encode: input dim mismatch");
    }
    Tensor xt({1, cfg.input_dim});
    std::copy(x.begin(), x.end(), xt.data.begin());
    const Tensor z = enc.infer(xt);
    std::vector<int>    ids((size_t) cfg.n_tokens);
    std::vector<double> zq((size_t) cfg.latent_dim());
    quant.quantize_vec(z.data.data(), ids.data(), zq.data());
    return ids;
}

std::vector<double> BottleneckVAE::decode_ids(const std::vector<int> & ids) const {
    if (!trained) {
        throw InvalidInput("decode: bottleneck VAE '" + cfg.name + "' is untrained");
    }
    if ((int) ids.size() != cfg.n_tokens) {
        throw InvalidInput("decode: expected " + std::to_string(cfg.n_tokens) + " ids, got " +
                           std::to_string(ids.size()));
    }
    Tensor zq({1, cfg.latent_dim()});
    quant.decode_ids(ids.data(), zq.data.data());
    const Tensor y = dec.infer(zq);
    return y.data;
}

void BottleneckVAE::collect(std::vector<Parameter *> & out) {
    enc.collect(out);
    dec.collect(out);
}

void BottleneckVAE::save(const std::string & path) const {
    SectionFile f;
    f.config = cfg.to_json();
    std::vector<Parameter *> params;
    const_cast<BottleneckVAE *>(this)->collect(params);
    for (const Parameter * p : params) {
        f.add("param/" + p->name, p->value);
    }
    for (int h = 0; h < quant.heads; ++h) {
        save_codebook_sections(f, "codebook/h" + std::to_string(h), quant.books[(size_t) h]);
    }
    f.save(path, "VQTK", 1);
}

BottleneckVAE BottleneckVAE::load(const std::string & path) {
    const SectionFile f = SectionFile::load(path, "VQTK", 1);
    BottleneckVAE     vae;
    vae.cfg = BottleneckVAEConfig::from_json(f.config);
    Rng rng(0);
    vae.enc.setup(vae.cfg.name + ".enc", vae.cfg.input_dim, vae.cfg.width, vae.cfg.latent_dim(), rng);
    vae.dec.setup(vae.cfg.name + ".dec", vae.cfg.latent_dim(), vae.cfg.width, vae.cfg.input_dim, rng);
    std::vector<Parameter *> params;
    vae.collect(params);
    for (Parameter * p : params) {
        const Section & s = f.find("param/" + p->name);
        if (s.shape != p->value.shape) {
            throw ArtifactError("tokenizer section shape mismatch for " + p->name);
        }
        p->value.data = s.data;
    }
    vae.quant.heads    = vae.cfg.n_tokens;
    vae.quant.head_dim = vae.cfg.slice_dim;
    for (int h = 0; h < vae.quant.heads; ++h) {
        vae.quant.books.push_back(load_codebook_sections(f, "codebook/h" + std::to_string(h)));
    }
    vae.trained = true;
    return vae;
}

BottleneckVAE train_bottleneck_vae(const std::vector<std::vector<double>> & data, const BottleneckVAEConfig & cfg,
                                   TokenizerTrainReport * report) {
    if (data.empty()) {
        throw ConfigError("train_bottleneck_vae: empty training set");
    }
    for (const auto & row : data) {
        if ((int) row.size() != cfg.input_dim) {
            throw InvalidInput("train_bottleneck_vae: input dim mismatch");
        }
    }
    Rng rng(cfg.seed);
    BottleneckVAE vae;
    vae.cfg = cfg;
    vae.enc.setup(cfg.name + ".enc", cfg.input_dim, cfg.width, cfg.latent_dim(), rng);
    vae.dec.setup(cfg.name + ".dec", cfg.latent_dim(), cfg.width, cfg.input_dim, rng);

    const int n_hold  = std::max(1, (int) std::llround(cfg.holdout_fraction * (double) data.size()));
    const int n_train = std::max(1, (int) data.size() - n_hold);

    {
        const int n_init = std::min((int) 4096, n_train);
        Tensor    x0({n_init, cfg.input_dim});
        for (int r = 0; r < n_init; ++r) {
            const auto & row = data[(size_t) rng.uniform_int(n_train)];
            std::copy(row.begin(), row.end(), x0.data.data() + (size_t) r * cfg.input_dim);
        }
        const Tensor z0 = vae.enc.infer(x0);
        const int    k  = std::min(cfg.vocab, n_init);
        vae.quant = MemcodesQuantizer::init(z0.data.data(), z0.rows(), cfg.latent_dim(), cfg.n_tokens, k,
                                            cfg.seed ^ 0x3e3c0del, cfg.codebook_decay);
        (void) k;
    }

    AdamWConfig ocfg;
    ocfg.lr           = cfg.lr;
    ocfg.beta1        = 0.9;
    ocfg.beta2        = 0.999;
    ocfg.weight_decay = 0.0;
    ocfg.warmup_tokens = (uint64_t) cfg.steps * (uint64_t) std::min(cfg.batch, (int) data.size()) / 20;
    ocfg.total_tokens  = (uint64_t) cfg.steps * (uint64_t) std::min(cfg.batch, (int) data.size());
    AdamW opt(ocfg);
    std::vector<Parameter *> params;
    vae.collect(params);
    opt.bind(params);

    const int B = std::min(cfg.batch, n_train);
    Tensor    x({B, cfg.input_dim});
    std::vector<int> ids((size_t) B * (size_t) cfg.n_tokens);
    Tensor           zq, dy;

    for (int step = 0; step < cfg.steps; ++step) {
        for (int r = 0; r < B; ++r) {
            const auto & row = data[(size_t) rng.uniform_int(n_train)];
            std::copy(row.begin(), row.end(), x.data.data() + (size_t) r * cfg.input_dim);
        }
        const Tensor z = vae.enc.forward(x);
        zq.resize(z.shape);
        for (int r = 0; r < B; ++r) {
            vae.quant.quantize_vec(z.data.data() + (size_t) r * cfg.latent_dim(),
                                   ids.data() + (size_t) r * cfg.n_tokens,
                                   zq.data.data() + (size_t) r * cfg.latent_dim());
        }
        const Tensor y    = vae.dec.forward(zq);
        const double loss = recon_loss_continuous(cfg.loss, y, x, dy, cfg.smooth_l1_beta);
        if (!std::isfinite(loss)) {
            throw NumericError("bottleneck VAE '" + cfg.name + "' diverged at step " + std::to_string(step));
        }

        opt.zero_grad();
        Tensor dz = vae.dec.backward(dy);
        if (cfg.commitment_beta > 0.0) {
            const double scale = 2.0 * cfg.commitment_beta / (double) z.numel();
            for (size_t i = 0; i < dz.data.size(); ++i) {
                dz.data[i] += scale * (z.data[i] - zq.data[i]);
            }
        }
        vae.enc.backward(dz);
        opt.step((uint64_t) B);
        vae.quant.ema_update_batch(z.data.data(), ids, B, rng);

        if (report && (step % 25 == 0 || step + 1 == cfg.steps)) {
            report->loss_curve.push_back(loss);
        }
    }
    vae.trained = true;

    if (report) {
        report->steps = cfg.steps;
        double hold_loss = 0.0, hold_cos = 0.0;
        int    count = 0;
        Tensor dummy;
        for (size_t i = (size_t) n_train; i < data.size(); ++i) {
            const auto rec = vae.decode_ids(vae.encode_vec(data[i]));
            Tensor yt({1, cfg.input_dim}), tt({1, cfg.input_dim});
            std::copy(rec.begin(), rec.end(), yt.data.begin());
            std::copy(data[i].begin(), data[i].end(), tt.data.begin());
            hold_loss += recon_loss_continuous(cfg.loss, yt, tt, dummy, cfg.smooth_l1_beta);
            double yy = 1e-12, ttn = 1e-12, yt2 = 0.0;
            for (int c = 0; c < cfg.input_dim; ++c) {
                yy += rec[(size_t) c] * rec[(size_t) c];
                ttn += data[i][(size_t) c] * data[i][(size_t) c];
                yt2 += rec[(size_t) c] * data[i][(size_t) c];
            }
            hold_cos += yt2 / (std::sqrt(yy) * std::sqrt(ttn));
            count++;
        }
        report->holdout_loss   = count ? hold_loss / count : 0.0;
        report->holdout_metric = count ? hold_cos / count : 0.0;
    }
    return vae;
}

BottleneckVAE train_path_tokenizer(const std::vector<std::vector<PolyPoint>> & polygons, int n_points,
                                   const BottleneckVAEConfig & cfg_in, TokenizerTrainReport * report) {
    BottleneckVAEConfig cfg = cfg_in;
    cfg.input_dim = 2 * n_points;
    std::vector<std::vector<double>> rows;
    rows.reserve(polygons.size());
    for (const auto & poly : polygons) {
        const auto rs = resample_polygon(poly, n_points); // rejects degenerate polygons
        std::vector<double> row;
        row.reserve((size_t) 2 * n_points);
        for (const auto & p : rs) {
            row.push_back(p[0]);
            row.push_back(p[1]);
        }
        rows.push_back(std::move(row));
    }
    BottleneckVAE vae = train_bottleneck_vae(rows, cfg, report);
    if (report) {
        report->holdout_metric = path_tokenizer_iou(vae, polygons, n_points);
    }
    return vae;
}

double path_tokenizer_iou(const BottleneckVAE & vae, const std::vector<std::vector<PolyPoint>> & polygons,
                          int n_points, int raster_size) {
    double total = 0.0;
    for (const auto & poly : polygons) {
        const auto rs = resample_polygon(poly, n_points);
        std::vector<double> row;
        for (const auto & p : rs) {
            row.push_back(p[0]);
            row.push_back(p[1]);
        }
        const auto rec = vae.decode_ids(vae.encode_vec(row));
        std::vector<PolyPoint> rpoly;
        for (int i = 0; i < n_points; ++i) {
            rpoly.push_back({std::clamp((float) rec[(size_t) (2 * i)], 0.0f, 1.0f),
                             std::clamp((float) rec[(size_t) (2 * i + 1)], 0.0f, 1.0f)});
        }
        total += mask_iou(rasterize_polygon(rs, raster_size), rasterize_polygon(rpoly, raster_size));
    }
    return total / (double) polygons.size();
}

BottleneckVAE train_global_tokenizer(const std::vector<std::vector<double>> & embeddings,
                                     const BottleneckVAEConfig & cfg_in, TokenizerTrainReport * report) {
    BottleneckVAEConfig cfg = cfg_in;
    cfg.loss = ReconLoss::cosine;
    return train_bottleneck_vae(embeddings, cfg, report);
}

BottleneckVAE train_pose_tokenizer(const std::vector<std::vector<double>> & keypoint_vecs,
                                   const BottleneckVAEConfig & cfg_in, TokenizerTrainReport * report) {
    BottleneckVAEConfig cfg = cfg_in;
    cfg.loss     = ReconLoss::smooth_l1;
    cfg.n_tokens = 8;
    return train_bottleneck_vae(keypoint_vecs, cfg, report);
}

double grid_psnr(const GridF32 & a, const GridF32 & b, double peak) {
    if (a.data.size() != b.data.size()) {
        throw InvalidInput("grid_psnr: size mismatch");
    }
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = (double) a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= (double) a.data.size();
    if (mse <= 0.0) {
        return 99.0;
    }
    return 10.0 * std::log10(peak * peak / mse);
}

} // namespace anymodal
