#include <algorithm>
#include <cmath>
#include <cstring>

#include "anymodal/errors.hpp"
#include "anymodal/rng.hpp"
#include "anymodal/synth.hpp"

namespace anymodal {

static constexpr float kBackgroundDepth = 10.0f;

void GenerationConfig::validate() const {
    if (image_size < 32 || (image_size & (image_size - 1)) != 0) {
        throw ConfigError("image_size must be a power of two >= 32");
    }
    if (min_shapes < 1) {
        throw ConfigError("min_shapes must be >= 1");
    }
    if (max_shapes < min_shapes || max_shapes > 8) {
        throw ConfigError("max_shapes must be in [min_shapes, 8]");
    }
    if (feature_grid < 1 || image_size % feature_grid != 0) {
        throw ConfigError("feature_grid must divide image_size");
    }
    if (embed_dim < 1) {
        throw ConfigError("embed_dim must be >= 1");
    }
}

// ---------------------------------------------------------------------------
// Scene sampling
// ---------------------------------------------------------------------------

static const std::array<std::array<uint8_t, 3>, 6> kBackgroundColors = {{
    {200, 205, 212}, {178, 196, 212}, {214, 206, 188}, {186, 186, 186}, {204, 214, 198}, {168, 178, 192},
}};

static uint8_t jitter_channel(uint8_t base, Rng & rng) {
    const int v = (int) base + rng.uniform_int(41) - 20;
    return (uint8_t) std::clamp(v, 0, 255);
}

static ShapePrimitive sample_shape(Rng & rng, const GenerationConfig & cfg, const Ontology & onto) {
    ShapePrimitive s;
    s.is_human = rng.bernoulli(cfg.p_human);
    if (s.is_human) {
        s.kind     = ShapeKind::rectangle;
        s.class_id = 3; // person
        s.aspect   = 1.0f;
    } else if (rng.bernoulli(cfg.p_walkable)) {
        s.kind     = ShapeKind::rectangle;
        s.class_id = 1 + rng.uniform_int(2); // road or floor
        s.aspect   = 0.25f + 0.25f * (float) rng.uniform();
    } else if (rng.bernoulli(cfg.p_scenery)) {
        s.kind     = (ShapeKind) rng.uniform_int(3);
        s.class_id = 13 + rng.uniform_int(3); // wall, cloud, water
        s.aspect   = 0.6f + 0.4f * (float) rng.uniform();
    } else {
        s.kind     = (ShapeKind) rng.uniform_int(3);
        s.class_id = 4 + rng.uniform_int(9); // countable, excluding person
        s.aspect   = 0.6f + 0.4f * (float) rng.uniform();
    }
    const auto & base = onto.cls(s.class_id).base_color;
    for (int c = 0; c < 3; ++c) {
        s.color[(size_t) c] = jitter_channel(base[(size_t) c], rng);
    }
    s.size   = 0.08f + 0.34f * (float) rng.uniform();
    const float half = s.size * 0.5f + 0.01f;
    s.cx     = half + (1.0f - 2.0f * half) * (float) rng.uniform();
    s.cy     = half + (1.0f - 2.0f * half) * (float) rng.uniform();
    s.tilt_x = (float) rng.uniform(-0.45, 0.45);
    s.tilt_y = (float) rng.uniform(-0.45, 0.45);
    return s;
}

// Pixel-space instance rasterization, painter's order handled by the caller.
static bool inside_shape(const ShapePrimitive & s, float u, float v) {
    if (s.is_human) {
        const float rh = s.size / 6.0f;
        const float head_cy = s.cy - s.size * 0.5f + rh;
        const float du = u - s.cx, dv = v - head_cy;
        if (du * du + dv * dv <= rh * rh) {
            return true;
        }
        const float body_top = s.cy - s.size * 0.5f + 2.0f * rh;
        const float body_bot = s.cy + s.size * 0.5f;
        const float body_hw  = s.size * 0.2f;
        return std::fabs(u - s.cx) <= body_hw && v >= body_top && v <= body_bot;
    }
    switch (s.kind) {
        case ShapeKind::circle: {
            const float r  = s.size * 0.5f;
            const float du = u - s.cx, dv = v - s.cy;
            return du * du + dv * dv <= r * r;
        }
        case ShapeKind::rectangle: {
            const float hw = s.size * 0.5f;
            const float hh = s.size * 0.5f * s.aspect;
            return std::fabs(u - s.cx) <= hw && std::fabs(v - s.cy) <= hh;
        }
        case ShapeKind::triangle: {
            // isoceles, apex up
            const float h = s.size;
            const float top = s.cy - h * 0.5f;
            const float bot = s.cy + h * 0.5f;
            if (v < top || v > bot) {
                return false;
            }
            const float frac = (v - top) / h; // 0 at apex, 1 at base
            const float hw   = 0.5f * s.size * frac;
            return std::fabs(u - s.cx) <= hw;
        }
    }
    return false;
}

static void shape_bounds(const ShapePrimitive & s, float & xmin, float & ymin, float & xmax, float & ymax) {
    if (s.is_human) {
        const float hw = std::max(s.size / 6.0f, s.size * 0.2f);
        xmin = s.cx - hw;
        xmax = s.cx + hw;
        ymin = s.cy - s.size * 0.5f;
        ymax = s.cy + s.size * 0.5f;
        return;
    }
    float hw = s.size * 0.5f;
    float hh = s.size * 0.5f;
    if (s.kind == ShapeKind::rectangle) {
        hh *= s.aspect;
    }
    xmin = s.cx - hw;
    xmax = s.cx + hw;
    ymin = s.cy - hh;
    ymax = s.cy + hh;
}

static PoseRecord pose_for_human(const ShapePrimitive & s) {
    PoseRecord p;
    float xmin, ymin, xmax, ymax;
    shape_bounds(s, xmin, ymin, xmax, ymax);
    p.bbox = {xmin, ymin, xmax, ymax};

    const float rh   = s.size / 6.0f;
    const float head = s.cy - s.size * 0.5f + rh;
    const float neck = s.cy - s.size * 0.5f + 2.0f * rh;
    const float hw   = s.size * 0.2f;
    const std::array<std::array<float, 2>, 10> pts = {{
        {s.cx, head},                         // head
        {s.cx, neck},                         // neck
        {s.cx - hw * 0.8f, neck + rh * 0.5f}, // shoulders
        {s.cx + hw * 0.8f, neck + rh * 0.5f},
        {s.cx - hw * 0.9f, s.cy},             // hands
        {s.cx + hw * 0.9f, s.cy},
        {s.cx, s.cy},                         // chest
        {s.cx, s.cy + s.size * 0.2f},         // hip
        {s.cx - hw * 0.5f, ymax - 0.002f},    // feet
        {s.cx + hw * 0.5f, ymax - 0.002f},
    }};
    for (int i = 0; i < 10; ++i) {
        p.keypoints[(size_t) (2 * i)]     = std::clamp(pts[(size_t) i][0], xmin, xmax);
        p.keypoints[(size_t) (2 * i + 1)] = std::clamp(pts[(size_t) i][1], ymin, ymax);
    }
    p.shape_scalar = std::clamp((s.size - 0.05f) / 0.45f, 0.0f, 1.0f);
    return p;
}

static void normal_at(const ShapePrimitive & s, float u, float v, float n[3]) {
    if (!s.is_human && s.kind == ShapeKind::circle) {
        const float r  = s.size * 0.5f;
        float nx = (u - s.cx) / r;
        float ny = (v - s.cy) / r;
        float d2 = nx * nx + ny * ny;
        if (d2 > 1.0f) {
            const float inv = 1.0f / std::sqrt(d2);
            nx *= inv;
            ny *= inv;
            d2 = 1.0f;
        }
        const float nz = std::sqrt(std::max(0.0f, 1.0f - d2));
        n[0] = nx;
        n[1] = ny;
        n[2] = nz;
    } else {
        n[0] = s.tilt_x;
        n[1] = s.tilt_y;
        n[2] = 1.0f;
    }
    const float inv = 1.0f / std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    n[0] *= inv;
    n[1] *= inv;
    n[2] *= inv;
}

void render_scene(const Scene & scene, PayloadSet & out, GridI32 & instance_ids) {
    const int S = scene.image_size;
    out.rgb      = GridU8(S, S, 3);
    out.depth    = GridF32(S, S, 1, kBackgroundDepth);
    out.normals  = GridF32(S, S, 3);
    out.semantic = GridI32(S, S, 1, 0);
    instance_ids = GridI32(S, S, 1, -1);

    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            out.rgb.at(y, x, 0) = scene.background_color[0];
            out.rgb.at(y, x, 1) = scene.background_color[1];
            out.rgb.at(y, x, 2) = scene.background_color[2];
            out.normals.at(y, x, 2) = 1.0f;
        }
    }

    // painter's order: farthest first, nearest overwrites
    std::vector<int> order(scene.shapes.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = (int) i;
    }
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return scene.shapes[(size_t) a].depth > scene.shapes[(size_t) b].depth; });

    for (int idx : order) {
        const ShapePrimitive & s = scene.shapes[(size_t) idx];
        float bx0, by0, bx1, by1;
        shape_bounds(s, bx0, by0, bx1, by1);
        const int x0 = std::max(0, (int) std::floor(bx0 * S) - 1);
        const int x1 = std::min(S - 1, (int) std::ceil(bx1 * S) + 1);
        const int y0 = std::max(0, (int) std::floor(by0 * S) - 1);
        const int y1 = std::min(S - 1, (int) std::ceil(by1 * S) + 1);
        for (int y = y0; y <= y1; ++y) {
            const float v = ((float) y + 0.5f) / (float) S;
            for (int x = x0; x <= x1; ++x) {
                const float u = ((float) x + 0.5f) / (float) S;
                if (!inside_shape(s, u, v)) {
                    continue;
                }
                out.rgb.at(y, x, 0) = s.color[0];
                out.rgb.at(y, x, 1) = s.color[1];
                out.rgb.at(y, x, 2) = s.color[2];
                out.depth.at(y, x)  = s.depth;
                out.semantic.at(y, x)  = s.class_id;
                instance_ids.at(y, x)  = idx;
                float n[3];
                normal_at(s, u, v, n);
                out.normals.at(y, x, 0) = n[0];
                out.normals.at(y, x, 1) = n[1];
                out.normals.at(y, x, 2) = n[2];
            }
        }
    }
}

static int visible_pixels(const GridI32 & instance_ids, int idx) {
    int n = 0;
    for (int32_t v : instance_ids.data) {
        if (v == idx) {
            n++;
        }
    }
    return n;
}

Scene sample_scene(uint64_t seed, const GenerationConfig & cfg) {
    cfg.validate();
    const Ontology & onto = Ontology::synthetic();
    Rng rng = Rng::derive(seed, 0x5ce4e);

    Scene scene;
    scene.seed       = seed;
    scene.image_size = cfg.image_size;
    {
        const auto & base = kBackgroundColors[(size_t) rng.uniform_int((int) kBackgroundColors.size())];
        for (int c = 0; c < 3; ++c) {
            scene.background_color[(size_t) c] = jitter_channel(base[(size_t) c], rng);
        }
    }

    const int n = cfg.min_shapes + rng.uniform_int(cfg.max_shapes - cfg.min_shapes + 1);
    for (int i = 0; i < n; ++i) {
        scene.shapes.push_back(sample_shape(rng, cfg, onto));
    }

    // depth ranks: walkable surfaces pushed behind everything else, then a
    // shuffled rank order with jitter keeps depths positive and distinct
    std::vector<int> fg, bg;
    for (int i = 0; i < n; ++i) {
        if (scene.shapes[(size_t) i].class_id == 1 || scene.shapes[(size_t) i].class_id == 2) {
            bg.push_back(i);
        } else {
            fg.push_back(i);
        }
    }
    rng.shuffle(fg);
    rng.shuffle(bg);
    std::vector<int> ranked = fg;
    ranked.insert(ranked.end(), bg.begin(), bg.end());
    for (size_t r = 0; r < ranked.size(); ++r) {
        scene.shapes[(size_t) ranked[r]].depth = 1.0f + (float) r + 0.4f * (float) rng.uniform();
    }

    // reject placements that leave any shape nearly invisible
    PayloadSet tmp;
    GridI32    ids;
    for (int attempt = 0; attempt < 24; ++attempt) {
        render_scene(scene, tmp, ids);
        int worst = -1;
        for (int i = 0; i < (int) scene.shapes.size(); ++i) {
            if (visible_pixels(ids, i) < 4) {
                worst = i;
                break;
            }
        }
        if (worst < 0) {
            break;
        }
        ShapePrimitive & s = scene.shapes[(size_t) worst];
        const float half = s.size * 0.5f + 0.01f;
        s.cx = half + (1.0f - 2.0f * half) * (float) rng.uniform();
        s.cy = half + (1.0f - 2.0f * half) * (float) rng.uniform();
        if (attempt >= 16 && scene.shapes.size() > 1) {
            scene.shapes.erase(scene.shapes.begin() + worst);
        }
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Caption templating
// ---------------------------------------------------------------------------

static const char * color_name(const std::array<uint8_t, 3> & c) {
    struct Named {
        const char * name;
        int r, g, b;
    };
    static const Named table[] = {
        {"red", 210, 60, 60},   {"orange", 230, 140, 50}, {"yellow", 235, 210, 90}, {"green", 70, 160, 80},
        {"teal", 70, 160, 160}, {"blue", 70, 100, 200},   {"purple", 140, 80, 180}, {"pink", 230, 150, 170},
        {"brown", 150, 110, 70},{"gray", 130, 130, 130},  {"white", 235, 235, 235}, {"black", 30, 30, 30},
    };
    const Named * best   = table;
    long          best_d = -1;
    for (const auto & t : table) {
        const long dr = (long) c[0] - t.r, dg = (long) c[1] - t.g, db = (long) c[2] - t.b;
        const long d = dr * dr + dg * dg + db * db;
        if (best_d < 0 || d < best_d) {
            best_d = d;
            best   = &t;
        }
    }
    return best->name;
}

static std::string count_word(int n) {
    static const char * words[] = {"zero", "one", "two", "three", "four", "five", "six", "seven", "eight"};
    return n <= 8 ? words[n] : std::to_string(n);
}

std::string caption_for(const Scene & scene, uint64_t seed, const GenerationConfig & cfg) {
    const Ontology & onto = Ontology::synthetic();
    Rng rng = Rng::derive(seed, 0xca9710);

    struct Group {
        std::string descr; // "red ball"
        std::string plural;
        int         count = 0;
    };
    std::vector<Group> groups;
    for (const auto & s : scene.shapes) {
        std::string noun = onto.cls(s.class_id).name;
        std::string descr;
        if (s.is_human) {
            descr = "person";
        } else {
            descr = std::string(color_name(s.color)) + " " + noun;
        }
        bool found = false;
        for (auto & g : groups) {
            if (g.descr == descr) {
                g.count++;
                found = true;
                break;
            }
        }
        if (!found) {
            Group g;
            g.descr  = descr;
            g.plural = s.is_human ? "people" : descr + "s";
            g.count  = 1;
            groups.push_back(g);
        }
    }

    std::string text;
    if (rng.bernoulli(cfg.p_two_sentence_caption)) {
        text += "the scene shows " + count_word((int) scene.shapes.size()) +
                (scene.shapes.size() == 1 ? " shape. " : " shapes. ");
    }
    for (size_t i = 0; i < groups.size(); ++i) {
        if (i > 0) {
            text += (i + 1 == groups.size()) ? " and " : ", ";
        }
        const Group & g = groups[i];
        if (g.count == 1) {
            text += "a " + g.descr;
        } else {
            text += count_word(g.count) + " " + g.plural;
        }
    }
    text += ".";
    return text;
}

// ---------------------------------------------------------------------------
// Full sample assembly
// ---------------------------------------------------------------------------

MultimodalSample generate_sample(uint64_t seed, const GenerationConfig & cfg) {
    cfg.validate();
    const Ontology & onto = Ontology::synthetic();

    MultimodalSample sample;
    sample.id    = seed;
    sample.scene = sample_scene(seed, cfg);

    PayloadSet & p = sample.payload;
    GridI32      instance_ids;
    render_scene(sample.scene, p, instance_ids);

    // instances and boxes follow shape order; fully occluded shapes were
    // already rejected during scene sampling
    const int S = sample.scene.image_size;
    for (int i = 0; i < (int) sample.scene.shapes.size(); ++i) {
        const ShapePrimitive & s = sample.scene.shapes[(size_t) i];
        InstanceMask m;
        m.mask     = GridU8(S, S, 1, 0);
        m.class_id = s.class_id;
        int nvis = 0;
        for (size_t px = 0; px < instance_ids.size(); ++px) {
            if (instance_ids.data[px] == i) {
                m.mask.data[px] = 1;
                nvis++;
            }
        }
        if (nvis == 0) {
            continue;
        }
        p.instances.push_back(std::move(m));
        float x0, y0, x1, y1;
        shape_bounds(s, x0, y0, x1, y1);
        p.bboxes.push_back({std::clamp(x0, 0.0f, 1.0f), std::clamp(y0, 0.0f, 1.0f), std::clamp(x1, 0.0f, 1.0f),
                            std::clamp(y1, 0.0f, 1.0f), s.class_id});
        if (s.is_human) {
            p.poses.push_back(pose_for_human(s));
        }
    }

    p.edges_rgb  = extract_edges_rgb(p.rgb, cfg.edge_tau);
    p.edges_inst = extract_edges_instances(instance_ids);
    p.caption    = caption_for(sample.scene, seed, cfg);
    for (int c = 1; c <= 7; ++c) {
        p.palettes[(size_t) (c - 1)] = extract_palette(p.rgb, c, cfg.palette_seed);
    }
    synth_embeddings(p, instance_ids, cfg, p.dense_feat, p.global_emb);

    MetadataRecord & md = p.metadata;
    semantic_scores(p.semantic, p.instances, p.poses, p.caption, onto, md);
    image_stats(p.rgb, md);
    md.colorfulness         = colorfulness(p.rgb);
    md.occlusion_score      = occlusion_score(p.depth, cfg.occlusion_threshold);
    md.geometric_complexity = geometric_complexity(p.normals);
    {
        Rng rng = Rng::derive(seed, 0x0e161);
        md.orig_height = 64 + (int) rng.uniform_u64(936);
        md.orig_width  = 64 + (int) rng.uniform_u64(936);
    }

    sample.coverage = ModalitySet::all();
    return sample;
}

void validate_payload(const PayloadSet & p, const Ontology & onto) {
    for (int y = 0; y < p.normals.height; ++y) {
        for (int x = 0; x < p.normals.width; ++x) {
            const float nx = p.normals.at(y, x, 0), ny = p.normals.at(y, x, 1), nz = p.normals.at(y, x, 2);
            const float n = std::sqrt(nx * nx + ny * ny + nz * nz);
            if (std::fabs(n - 1.0f) > 1e-5f) {
                throw InvalidInput("non-unit normal at (" + std::to_string(y) + "," + std::to_string(x) + ")");
            }
        }
    }
    for (int32_t c : p.semantic.data) {
        if (!onto.valid_class(c)) {
            throw InvalidInput("semantic map contains unknown class " + std::to_string(c));
        }
    }
    for (const auto & inst : p.instances) {
        int nvis = 0;
        for (uint8_t v : inst.mask.data) {
            nvis += v;
        }
        if (nvis == 0) {
            throw InvalidInput("empty instance mask");
        }
    }
    if (!p.global_emb.empty()) {
        double n2 = 0.0;
        for (float v : p.global_emb) {
            n2 += (double) v * v;
        }
        if (std::fabs(std::sqrt(n2) - 1.0) > 1e-6) {
            throw InvalidInput("global embedding not unit norm");
        }
    }
    for (const auto & pose : p.poses) {
        for (int i = 0; i < 10; ++i) {
            const float x = pose.keypoints[(size_t) (2 * i)], y = pose.keypoints[(size_t) (2 * i + 1)];
            if (x < pose.bbox[0] - 1e-6f || x > pose.bbox[2] + 1e-6f || y < pose.bbox[1] - 1e-6f ||
                y > pose.bbox[3] + 1e-6f) {
                throw InvalidInput("pose keypoint outside bbox");
            }
        }
    }
}

} // namespace anymodal
