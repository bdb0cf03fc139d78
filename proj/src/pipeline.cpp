#include "anymodal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "anymodal/binio.hpp"
#include "anymodal/polygon.hpp"

namespace anymodal {

// per-modality continuous scaling into tokenizer input space
static constexpr double kDepthScale = 1.0 / 10.0;
static constexpr double kRgbScale   = 1.0 / 255.0;

// ---------------------------------------------------------------------------
// tokenizer training
// ---------------------------------------------------------------------------

static SpatialTokenizerConfig spatial_cfg(const TokenizerBuildConfig & cfg, const std::string & name,
                                          int in_channels, int classes, ReconLoss loss, uint64_t salt) {
    SpatialTokenizerConfig c;
    c.name         = name;
    c.image_size   = 64;
    c.in_channels  = in_channels;
    c.patch_h      = 8;
    c.patch_w      = 8;
    c.latent_dim   = cfg.latent_dim;
    c.width        = cfg.width;
    c.vocab        = cfg.grid_vocab;
    c.loss         = loss;
    c.classes      = classes;
    c.steps        = cfg.spatial_steps;
    c.batch_images = 16;
    c.lr           = cfg.lr;
    c.seed         = cfg.seed ^ salt;
    return c;
}

TokenizerSet train_tokenizer_set(const std::vector<MultimodalSample> & samples, const TokenizerBuildConfig & cfg,
                                 std::map<std::string, double> * metrics) {
    if (samples.empty()) {
        throw ConfigError("train_tokenizer_set: no samples");
    }
    TokenizerSet toks;
    toks.caps = cfg.caps;

    // joint text vocabulary from the caption corpus
    {
        std::vector<std::string> corpus;
        for (const auto & s : samples) {
            if (!s.payload.caption.empty()) {
                corpus.push_back(s.payload.caption);
            }
        }
        VocabConfig vc;
        vc.target_size   = cfg.text_vocab_target;
        vc.pose_vq_vocab = cfg.pose_vocab;
        vc.mask_vq_vocab = cfg.mask_vocab;
        toks.vocab = Vocabulary::train(corpus, vc);
    }

    auto note = [&](const std::string & key, double v) {
        if (metrics) {
            (*metrics)[key] = v;
        }
    };

    // spatial tokenizers
    {
        std::vector<Tensor> images;
        for (const auto & s : samples) {
            images.push_back(patches_from_u8(s.payload.rgb, 8, 8, kRgbScale));
        }
        TokenizerTrainReport rep;
        toks.rgb = train_spatial_tokenizer(images, {},
                                           spatial_cfg(cfg, "rgb", 3, 0, ReconLoss::smooth_l1, 0x11), &rep);
        note("tokenizer.rgb.holdout_loss", rep.holdout_loss);
    }
    {
        std::vector<Tensor> images;
        for (const auto & s : samples) {
            images.push_back(patches_from_f32(s.payload.depth, 8, 8, kDepthScale));
        }
        TokenizerTrainReport rep;
        toks.depth = train_spatial_tokenizer(images, {},
                                             spatial_cfg(cfg, "depth", 1, 0, ReconLoss::smooth_l1, 0x12), &rep);
        note("tokenizer.depth.holdout_loss", rep.holdout_loss);
    }
    {
        std::vector<Tensor> images;
        for (const auto & s : samples) {
            images.push_back(patches_from_f32(s.payload.normals, 8, 8));
        }
        TokenizerTrainReport rep;
        toks.normals = train_spatial_tokenizer(images, {},
                                               spatial_cfg(cfg, "normals", 3, 0, ReconLoss::smooth_l1, 0x13), &rep);
        note("tokenizer.normals.holdout_loss", rep.holdout_loss);
    }
    {
        std::vector<Tensor>           images;
        std::vector<std::vector<int>> targets;
        for (const auto & s : samples) {
            images.push_back(patches_onehot(s.payload.semantic, 16, 8, 8));
            targets.push_back(patch_targets(s.payload.semantic, 8, 8));
        }
        TokenizerTrainReport rep;
        toks.semantic = train_spatial_tokenizer(images, targets,
                                                spatial_cfg(cfg, "semantic", 16, 16, ReconLoss::cross_entropy, 0x14),
                                                &rep);
        note("tokenizer.semantic.holdout_iou", rep.holdout_metric);
    }
    {
        // shared tokenizer for both edge modalities
        std::vector<Tensor>           images;
        std::vector<std::vector<int>> targets;
        for (const auto & s : samples) {
            images.push_back(patches_from_u8(s.payload.edges_rgb, 8, 8));
            targets.push_back(patch_targets_u8(s.payload.edges_rgb, 8, 8));
            images.push_back(patches_from_u8(s.payload.edges_inst, 8, 8));
            targets.push_back(patch_targets_u8(s.payload.edges_inst, 8, 8));
        }
        TokenizerTrainReport rep;
        toks.edges = train_spatial_tokenizer(images, targets,
                                             spatial_cfg(cfg, "edges", 1, 2, ReconLoss::cross_entropy, 0x15), &rep);
        note("tokenizer.edges.holdout_iou", rep.holdout_metric);
    }
    {
        std::vector<Tensor> images;
        for (const auto & s : samples) {
            images.push_back(patches_from_f32(s.payload.dense_feat, 1, 1));
        }
        SpatialTokenizerConfig dc = spatial_cfg(cfg, "dense_feat", 64, 0, ReconLoss::smooth_l1, 0x16);
        dc.image_size = 8;
        dc.patch_h    = 1;
        dc.patch_w    = 1;
        TokenizerTrainReport rep;
        toks.dense_feat = train_spatial_tokenizer(images, {}, dc, &rep);
        note("tokenizer.dense_feat.holdout_loss", rep.holdout_loss);
    }
    {
        // instance-mask tokenizer: 64x64 crops -> 16 tokens
        std::vector<GridU8> masks;
        for (const auto & s : samples) {
            for (const auto & inst : s.payload.instances) {
                masks.push_back(crop_resize_mask(inst.mask, 64));
            }
        }
        SpatialTokenizerConfig mc = spatial_cfg(cfg, "instance_mask", 1, 2, ReconLoss::cross_entropy, 0x17);
        mc.patch_h = 16;
        mc.patch_w = 16;
        mc.vocab   = cfg.mask_vocab;
        mc.steps   = cfg.mask_steps;
        mc.lr      = std::max(cfg.lr, 3e-3);
        TokenizerTrainReport rep;
        toks.instance_mask = train_mask_tokenizer(masks, mc, &rep);
        note("tokenizer.instance_mask.holdout_iou", rep.holdout_metric);
    }
    {
        std::vector<std::vector<double>> rows;
        for (const auto & s : samples) {
            for (const auto & pose : s.payload.poses) {
                rows.emplace_back(pose.keypoints.begin(), pose.keypoints.end());
            }
        }
        if (rows.size() < 32) {
            // tiny corpora still need a functional pose tokenizer
            Rng pad_rng(cfg.seed ^ 0x18);
            while (rows.size() < 32) {
                std::vector<double> r(20);
                for (auto & v : r) {
                    v = pad_rng.uniform();
                }
                rows.push_back(std::move(r));
            }
        }
        BottleneckVAEConfig pc;
        pc.name      = "pose";
        pc.input_dim = 20;
        pc.n_tokens  = 8;
        pc.slice_dim = 6;
        pc.width     = cfg.width;
        pc.vocab     = cfg.pose_vocab;
        pc.steps     = cfg.vae_steps;
        pc.batch     = 64;
        pc.lr        = cfg.lr;
        pc.seed      = cfg.seed ^ 0x19;
        TokenizerTrainReport rep;
        toks.pose_vae = train_pose_tokenizer(rows, pc, &rep);
        note("tokenizer.pose.holdout_loss", rep.holdout_loss);
    }
    {
        std::vector<std::vector<double>> rows;
        for (const auto & s : samples) {
            rows.emplace_back(s.payload.global_emb.begin(), s.payload.global_emb.end());
        }
        BottleneckVAEConfig gc;
        gc.name      = "global";
        gc.input_dim = 64;
        gc.n_tokens  = 16;
        gc.slice_dim = 8;
        gc.width     = cfg.width;
        gc.vocab     = cfg.set_vocab;
        gc.steps     = cfg.vae_steps;
        gc.batch     = 64;
        gc.lr        = cfg.lr;
        gc.seed      = cfg.seed ^ 0x1a;
        TokenizerTrainReport rep;
        toks.global_vae = train_global_tokenizer(rows, gc, &rep);
        note("tokenizer.global.holdout_cosine", rep.holdout_metric);
    }
    return toks;
}

void save_tokenizer_set(const TokenizerSet & toks, const std::string & dir) {
    std::filesystem::create_directories(dir);
    toks.vocab.save(dir + "/vocab.txt");
    toks.registry.save(dir + "/metadata_types.txt");
    toks.rgb.save(dir + "/rgb.vqtk");
    toks.depth.save(dir + "/depth.vqtk");
    toks.normals.save(dir + "/normals.vqtk");
    toks.semantic.save(dir + "/semantic.vqtk");
    toks.edges.save(dir + "/edges.vqtk");
    toks.dense_feat.save(dir + "/dense_feat.vqtk");
    toks.instance_mask.save(dir + "/instance_mask.vqtk");
    toks.pose_vae.save(dir + "/pose.vqtk");
    toks.global_vae.save(dir + "/global.vqtk");
}

TokenizerSet load_tokenizer_set(const std::string & dir) {
    TokenizerSet toks;
    toks.vocab         = Vocabulary::load(dir + "/vocab.txt");
    toks.registry      = MetadataTypeRegistry::load(dir + "/metadata_types.txt");
    toks.rgb           = SpatialTokenizer::load(dir + "/rgb.vqtk");
    toks.depth         = SpatialTokenizer::load(dir + "/depth.vqtk");
    toks.normals       = SpatialTokenizer::load(dir + "/normals.vqtk");
    toks.semantic      = SpatialTokenizer::load(dir + "/semantic.vqtk");
    toks.edges         = SpatialTokenizer::load(dir + "/edges.vqtk");
    toks.dense_feat    = SpatialTokenizer::load(dir + "/dense_feat.vqtk");
    toks.instance_mask = SpatialTokenizer::load(dir + "/instance_mask.vqtk");
    toks.pose_vae      = BottleneckVAE::load(dir + "/pose.vqtk");
    toks.global_vae    = BottleneckVAE::load(dir + "/global.vqtk");
    return toks;
}

// ---------------------------------------------------------------------------
// tokenize / detokenize
// ---------------------------------------------------------------------------

TokenizedSample tokenize_sample(const MultimodalSample & sample, const TokenizerSet & toks, uint64_t order_seed) {
    const PayloadSet & p = sample.payload;
    TokenizedSample    out;
    out.id = sample.id;
    const ModalitySet cov = sample.coverage;

    if (cov.has(Modality::rgb) && !p.rgb.empty()) {
        out.of(Modality::rgb) = toks.rgb.tokenize(patches_from_u8(p.rgb, 8, 8, kRgbScale));
        out.rgb_pixels        = patches_from_u8(p.rgb, 8, 8, kRgbScale);
    }
    if (cov.has(Modality::depth) && !p.depth.empty()) {
        out.of(Modality::depth) = toks.depth.tokenize(patches_from_f32(p.depth, 8, 8, kDepthScale));
    }
    if (cov.has(Modality::normals) && !p.normals.empty()) {
        out.of(Modality::normals) = toks.normals.tokenize(patches_from_f32(p.normals, 8, 8));
    }
    if (cov.has(Modality::semantic) && !p.semantic.empty()) {
        out.of(Modality::semantic) = toks.semantic.tokenize(patches_onehot(p.semantic, 16, 8, 8));
    }
    if (cov.has(Modality::edges_rgb) && !p.edges_rgb.empty()) {
        out.of(Modality::edges_rgb) = toks.edges.tokenize(patches_from_u8(p.edges_rgb, 8, 8));
    }
    if (cov.has(Modality::edges_inst) && !p.edges_inst.empty()) {
        out.of(Modality::edges_inst) = toks.edges.tokenize(patches_from_u8(p.edges_inst, 8, 8));
    }
    if (cov.has(Modality::dense_feat) && !p.dense_feat.empty()) {
        out.of(Modality::dense_feat) = toks.dense_feat.tokenize(patches_from_f32(p.dense_feat, 1, 1));
    }
    if (cov.has(Modality::global_emb) && !p.global_emb.empty()) {
        std::vector<double> emb(p.global_emb.begin(), p.global_emb.end());
        out.of(Modality::global_emb) = toks.global_vae.encode_vec(emb);
    }
    if (cov.has(Modality::caption) && !p.caption.empty()) {
        out.of(Modality::caption) = encode_caption(p.caption, toks.vocab, toks.caps.caption).ids;
    }
    if (cov.has(Modality::bbox) && !p.bboxes.empty()) {
        auto ids = encode_bbox_set(p.bboxes, toks.vocab).ids;
        if ((int) ids.size() > toks.caps.bbox) {
            ids.resize((size_t) (toks.caps.bbox / 5 * 5)); // whole boxes only
        }
        out.of(Modality::bbox) = ids;
    }
    if (cov.has(Modality::metadata)) {
        out.of(Modality::metadata) =
            encode_metadata(p.metadata, toks.registry.all_fields(), order_seed ^ 0x3d5eedull, toks.vocab,
                            toks.registry)
                .ids;
    }
    if (cov.has(Modality::palette)) {
        Rng rng = Rng::derive(order_seed, 0x9a1);
        const int c = 1 + rng.uniform_int(7); // palette granularity drawn per sample
        out.of(Modality::palette) = encode_palette(p.palettes[(size_t) (c - 1)], toks.vocab).ids;
    }
    if (cov.has(Modality::pose)) {
        std::vector<std::vector<int>> vq_ids;
        for (const auto & pose : p.poses) {
            std::vector<double> kp(pose.keypoints.begin(), pose.keypoints.end());
            vq_ids.push_back(toks.pose_vae.encode_vec(kp));
        }
        auto ids = encode_pose_sequence(p.poses, vq_ids, order_seed ^ 0x905eull, toks.vocab).ids;
        if ((int) ids.size() > toks.caps.pose) {
            ids.resize((size_t) (toks.caps.pose / 16 * 16));
            if (ids.empty()) {
                ids.push_back(toks.vocab.identifier_id(Identifier::none));
            }
        }
        out.of(Modality::pose) = ids;
    }
    if (cov.has(Modality::instance) && !p.instances.empty()) {
        std::vector<BBox>             boxes;
        std::vector<std::vector<int>> vq_ids;
        const int max_instances = toks.caps.instance / 21;
        for (const auto & inst : p.instances) {
            if ((int) boxes.size() >= max_instances) {
                break;
            }
            // tight box of the visible mask, in [0,1]
            int x0 = inst.mask.width, x1 = -1, y0 = inst.mask.height, y1 = -1;
            for (int y = 0; y < inst.mask.height; ++y) {
                for (int x = 0; x < inst.mask.width; ++x) {
                    if (inst.mask.at(y, x)) {
                        x0 = std::min(x0, x);
                        x1 = std::max(x1, x);
                        y0 = std::min(y0, y);
                        y1 = std::max(y1, y);
                    }
                }
            }
            if (x1 < 0) {
                continue;
            }
            BBox b;
            b.xmin = (float) x0 / inst.mask.width;
            b.xmax = (float) (x1 + 1) / inst.mask.width;
            b.ymin = (float) y0 / inst.mask.height;
            b.ymax = (float) (y1 + 1) / inst.mask.height;
            b.class_id = inst.class_id;
            boxes.push_back(b);
            vq_ids.push_back(toks.instance_mask.tokenize(
                patches_from_u8(crop_resize_mask(inst.mask, 64), 16, 16)));
        }
        if (!boxes.empty()) {
            out.of(Modality::instance) = encode_instance_set(boxes, vq_ids, toks.vocab).ids;
        }
    }
    return out;
}

GridU8 detokenize_rgb(const TokenizerSet & toks, const std::vector<int> & ids) {
    const Tensor  rec = toks.rgb.detokenize(ids);
    const GridF32 f   = grid_from_patches(rec, 64, 64, 3, 8, 8);
    GridU8 out(64, 64, 3);
    for (size_t i = 0; i < f.data.size(); ++i) {
        out.data[i] = (uint8_t) std::clamp((int) std::lround(f.data[i] * 255.0), 0, 255);
    }
    return out;
}

GridF32 detokenize_depth(const TokenizerSet & toks, const std::vector<int> & ids) {
    const Tensor rec = toks.depth.detokenize(ids);
    GridF32 out = grid_from_patches(rec, 64, 64, 1, 8, 8);
    for (auto & v : out.data) {
        v = (float) std::max(0.0, (double) v / kDepthScale);
    }
    return out;
}

GridF32 detokenize_normals(const TokenizerSet & toks, const std::vector<int> & ids) {
    const Tensor rec = toks.normals.detokenize(ids);
    GridF32 out = grid_from_patches(rec, 64, 64, 3, 8, 8);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            double n2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                n2 += (double) out.at(y, x, c) * out.at(y, x, c);
            }
            if (n2 < 1e-12) {
                out.at(y, x, 2) = 1.0f;
            } else {
                const double inv = 1.0 / std::sqrt(n2);
                for (int c = 0; c < 3; ++c) {
                    out.at(y, x, c) = (float) (out.at(y, x, c) * inv);
                }
            }
        }
    }
    return out;
}

GridI32 detokenize_semantic(const TokenizerSet & toks, const std::vector<int> & ids) {
    const Tensor rec = toks.semantic.detokenize(ids);
    return ids_from_patch_logits(rec, 64, 64, 16, 8, 8);
}

GridU8 detokenize_edges(const TokenizerSet & toks, const std::vector<int> & ids) {
    const Tensor  rec = toks.edges.detokenize(ids);
    const GridI32 cls = ids_from_patch_logits(rec, 64, 64, 2, 8, 8);
    GridU8 out(64, 64, 1);
    for (size_t i = 0; i < cls.data.size(); ++i) {
        out.data[i] = cls.data[i] ? 1 : 0;
    }
    return out;
}

GridF32 detokenize_dense(const TokenizerSet & toks, const std::vector<int> & ids) {
    const Tensor rec = toks.dense_feat.detokenize(ids);
    return grid_from_patches(rec, 8, 8, 64, 1, 1);
}

std::vector<float> detokenize_global(const TokenizerSet & toks, const std::vector<int> & ids) {
    const std::vector<double> rec = toks.global_vae.decode_ids(ids);
    double n2 = 0.0;
    for (double v : rec) {
        n2 += v * v;
    }
    const double inv = n2 > 1e-12 ? 1.0 / std::sqrt(n2) : 0.0;
    std::vector<float> out(rec.size());
    for (size_t i = 0; i < rec.size(); ++i) {
        out[i] = (float) (rec[i] * inv);
    }
    if (inv == 0.0) {
        out[0] = 1.0f;
    }
    return out;
}

GridU8 detokenize_instance_mask(const TokenizerSet & toks, const std::vector<int> & vq_ids) {
    const Tensor  rec = toks.instance_mask.detokenize(vq_ids);
    const GridI32 cls = ids_from_patch_logits(rec, 64, 64, 2, 16, 16);
    GridU8 out(64, 64, 1);
    for (size_t i = 0; i < cls.data.size(); ++i) {
        out.data[i] = cls.data[i] ? 1 : 0;
    }
    return out;
}

TokenBatch batch_from_sample(const TokenizedSample & sample, ModalitySet include, bool rgb_as_pixels) {
    TokenBatch batch;
    batch.sample_id     = sample.id;
    batch.rgb_as_pixels = rgb_as_pixels;
    if (rgb_as_pixels && sample.rgb_pixels.numel() > 0) {
        batch.rgb_pixels = sample.rgb_pixels;
    }
    for (int mi = 0; mi < kModalityCount; ++mi) {
        const Modality m = (Modality) mi;
        if (!include.has(m) || !sample.has(m)) {
            continue;
        }
        TokenBatchEntry e;
        e.modality = m;
        for (size_t i = 0; i < sample.of(m).size(); ++i) {
            e.ids.push_back(sample.of(m)[i]);
            e.positions.push_back((int) i);
        }
        batch.input.push_back(std::move(e));
    }
    return batch;
}

// ---------------------------------------------------------------------------
// token shards
// ---------------------------------------------------------------------------

static constexpr uint32_t kTokenShardVersion = 1;

void save_tokenized_dataset(const TokenizedDataset & ds, const std::string & path) {
    BinWriter w(path);
    w.magic("4MTS");
    w.u32(kTokenShardVersion);
    w.str(ds.name);
    w.u64(ds.samples.size());
    for (const auto & s : ds.samples) {
        w.u64(s.id);
        for (int mi = 0; mi < kModalityCount; ++mi) {
            w.u32((uint32_t) s.tokens[(size_t) mi].size());
            for (int id : s.tokens[(size_t) mi]) {
                w.u32((uint32_t) id);
            }
        }
        w.u32((uint32_t) s.rgb_pixels.rows());
        w.u32((uint32_t) s.rgb_pixels.cols());
        for (double v : s.rgb_pixels.data) {
            w.f32((float) v);
        }
    }
    w.close();
}

TokenizedDataset load_tokenized_dataset(const std::string & path) {
    BinReader r(path);
    r.expect_magic("4MTS");
    if (r.u32() != kTokenShardVersion) {
        throw ArtifactError("unsupported token shard version in " + path);
    }
    TokenizedDataset ds;
    ds.name = r.str();
    const uint64_t n = r.u64();
    for (uint64_t i = 0; i < n; ++i) {
        TokenizedSample s;
        s.id = r.u64();
        for (int mi = 0; mi < kModalityCount; ++mi) {
            const uint32_t len = r.u32();
            s.tokens[(size_t) mi].resize(len);
            for (uint32_t j = 0; j < len; ++j) {
                s.tokens[(size_t) mi][j] = (int) r.u32();
            }
        }
        const uint32_t rows = r.u32();
        const uint32_t cols = r.u32();
        if (rows > 0) {
            s.rgb_pixels.resize({(int) rows, (int) cols});
            const auto raw = r.f32s((size_t) rows * cols);
            for (size_t j = 0; j < raw.size(); ++j) {
                s.rgb_pixels.data[j] = raw[j];
            }
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::vector<DatasetRole> default_dataset_roles(int n_full, int n_core, int n_text) {
    ModalitySet core;
    for (Modality m : {Modality::rgb, Modality::caption, Modality::depth, Modality::normals, Modality::semantic,
                       Modality::bbox, Modality::dense_feat}) {
        core.add(m);
    }
    ModalitySet text;
    text.add(Modality::caption);
    return {
        {"full", ModalitySet::all(), n_full},
        {"core7", core, n_core},
        {"text", text, n_text},
    };
}

} // namespace anymodal
