#include <algorithm>
#include <cmath>
#include <set>

#include "anymodal/errors.hpp"
#include "anymodal/kmeans.hpp"
#include "anymodal/rng.hpp"
#include "anymodal/synth.hpp"

namespace anymodal {

float colorfulness(const GridU8 & rgb) {
    if (rgb.empty()) {
        throw InvalidInput("colorfulness: empty image");
    }
    const size_t n = (size_t) rgb.height * rgb.width;
    double sum_rg = 0, sum_rg2 = 0, sum_yb = 0, sum_yb2 = 0;
    for (size_t i = 0; i < n; ++i) {
        const double r  = rgb.data[i * 3 + 0];
        const double g  = rgb.data[i * 3 + 1];
        const double b  = rgb.data[i * 3 + 2];
        const double rg = r - g;
        const double yb = 0.5 * (r + g) - b;
        sum_rg  += rg;
        sum_rg2 += rg * rg;
        sum_yb  += yb;
        sum_yb2 += yb * yb;
    }
    const double mu_rg  = sum_rg / (double) n;
    const double mu_yb  = sum_yb / (double) n;
    const double var_rg = std::max(0.0, sum_rg2 / (double) n - mu_rg * mu_rg);
    const double var_yb = std::max(0.0, sum_yb2 / (double) n - mu_yb * mu_yb);
    return (float) (std::sqrt(var_rg + var_yb) + 0.3 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb));
}

// 3x3 Sobel with replicated borders on depth normalized to [0,1].
float occlusion_score(const GridF32 & depth, float threshold) {
    const int H = depth.height, W = depth.width;
    float lo = depth.data[0], hi = depth.data[0];
    for (float v : depth.data) {
        if (!std::isfinite(v)) {
            throw InvalidInput("occlusion_score: non-finite depth");
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float range = hi - lo;
    if (range <= 0.0f) {
        return 0.0f;
    }
    auto norm = [&](int y, int x) {
        y = std::clamp(y, 0, H - 1);
        x = std::clamp(x, 0, W - 1);
        return (depth.at(y, x) - lo) / range;
    };
    int over = 0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const float gx = -norm(y - 1, x - 1) + norm(y - 1, x + 1) - 2.0f * norm(y, x - 1) +
                             2.0f * norm(y, x + 1) - norm(y + 1, x - 1) + norm(y + 1, x + 1);
            const float gy = -norm(y - 1, x - 1) - 2.0f * norm(y - 1, x) - norm(y - 1, x + 1) +
                             norm(y + 1, x - 1) + 2.0f * norm(y + 1, x) + norm(y + 1, x + 1);
            if (std::sqrt(gx * gx + gy * gy) > threshold) {
                over++;
            }
        }
    }
    return (float) over / (float) (H * W);
}

float geometric_complexity(const GridF32 & normals) {
    const size_t n = (size_t) normals.height * normals.width;
    double mx = 0, my = 0, mz = 0;
    for (size_t i = 0; i < n; ++i) {
        const double x = normals.data[i * 3 + 0];
        const double y = normals.data[i * 3 + 1];
        const double z = normals.data[i * 3 + 2];
        const double len = std::sqrt(x * x + y * y + z * z);
        if (std::fabs(len - 1.0) > 1e-3) {
            throw InvalidInput("geometric_complexity: non-unit normal (len=" + std::to_string(len) + ")");
        }
        mx += x;
        my += y;
        mz += z;
    }
    mx /= (double) n;
    my /= (double) n;
    mz /= (double) n;
    const double resultant = std::sqrt(mx * mx + my * my + mz * mz);
    return (float) std::clamp(1.0 - resultant, 0.0, 1.0);
}

void semantic_scores(const GridI32 & semantic, const std::vector<InstanceMask> & instances,
                     const std::vector<PoseRecord> & poses, const std::string & caption,
                     const Ontology & onto, MetadataRecord & out) {
    size_t walkable = 0, countable = 0;
    std::set<int> present;
    for (int32_t c : semantic.data) {
        const OntologyClass & oc = onto.cls(c); // throws on unknown id
        walkable  += oc.walkable ? 1 : 0;
        countable += oc.countable ? 1 : 0;
        present.insert(c);
    }
    const double total = (double) semantic.size();
    out.walkability = (float) ((double) walkable / total);
    out.objectness  = (float) ((double) countable / total);
    out.semantic_diversity = (int) present.size();

    out.crowdedness = (int) poses.size();
    out.sam_clutter = (int) instances.size();
    out.coco_clutter = 0;
    std::set<int> countable_present;
    for (const auto & inst : instances) {
        if (onto.is_countable(inst.class_id)) {
            out.coco_clutter++;
            countable_present.insert(inst.class_id);
        }
    }
    out.instance_diversity = (int) countable_present.size();

    out.caption_chars = (int) caption.size();
    out.caption_words = 0;
    bool in_word = false;
    for (char ch : caption) {
        const bool is_space = ch == ' ' || ch == '\t' || ch == '\n';
        if (!is_space && !in_word) {
            out.caption_words++;
        }
        in_word = !is_space;
    }
    out.caption_sentences = (int) std::count_if(caption.begin(), caption.end(), [](char ch) {
        return ch == '.' || ch == '!' || ch == '?';
    });
}

void image_stats(const GridU8 & rgb, MetadataRecord & out) {
    const size_t n = (size_t) rgb.height * rgb.width;
    double sum = 0, sum2 = 0, sat = 0;
    std::array<int, 256> hist{};
    for (size_t i = 0; i < n; ++i) {
        const double r = rgb.data[i * 3 + 0];
        const double g = rgb.data[i * 3 + 1];
        const double b = rgb.data[i * 3 + 2];
        const double gray = 0.299 * r + 0.587 * g + 0.114 * b;
        sum  += gray;
        sum2 += gray * gray;
        hist[(size_t) std::clamp((int) gray, 0, 255)]++;
        const double mx = std::max({r, g, b});
        const double mn = std::min({r, g, b});
        sat += mx > 0.0 ? (mx - mn) / mx : 0.0;
    }
    const double mean = sum / (double) n;
    out.brightness = (float) mean;
    out.contrast   = (float) std::sqrt(std::max(0.0, sum2 / (double) n - mean * mean));
    out.saturation = (float) (sat / (double) n);
    double ent = 0.0;
    for (int h : hist) {
        if (h > 0) {
            const double p = (double) h / (double) n;
            ent -= p * std::log2(p);
        }
    }
    out.entropy = (float) ent;
}

PaletteColors extract_palette(const GridU8 & rgb, int c, uint64_t seed) {
    if (c < 1 || c > 7) {
        throw InvalidInput("palette size must be in [1,7]");
    }
    const int n = rgb.height * rgb.width;
    std::vector<float> pts((size_t) n * 3);
    for (size_t i = 0; i < (size_t) n; ++i) {
        pts[i * 3 + 0] = rgb.data[i * 3 + 0];
        pts[i * 3 + 1] = rgb.data[i * 3 + 1];
        pts[i * 3 + 2] = rgb.data[i * 3 + 2];
    }
    KmeansResult km = kmeans(pts.data(), n, 3, c, seed);

    std::vector<int> order(km.k);
    for (int i = 0; i < km.k; ++i) {
        order[i] = i;
    }
    auto rgb_of = [&](int k) {
        std::array<uint8_t, 3> col;
        for (int j = 0; j < 3; ++j) {
            col[(size_t) j] = (uint8_t) std::clamp((int) std::lround(km.centers[(size_t) k * 3 + j]), 0, 255);
        }
        return col;
    };
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (km.counts[(size_t) a] != km.counts[(size_t) b]) {
            return km.counts[(size_t) a] > km.counts[(size_t) b];
        }
        return rgb_of(a) < rgb_of(b);
    });
    PaletteColors pal;
    for (int k : order) {
        pal.colors.push_back(rgb_of(k));
    }
    return pal;
}

GridU8 extract_edges_rgb(const GridU8 & rgb, float tau) {
    const int H = rgb.height, W = rgb.width;
    GridF32 gray(H, W);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            gray.at(y, x) = 0.299f * rgb.at(y, x, 0) + 0.587f * rgb.at(y, x, 1) + 0.114f * rgb.at(y, x, 2);
        }
    }
    auto g = [&](int y, int x) { return gray.at(std::clamp(y, 0, H - 1), std::clamp(x, 0, W - 1)); };
    GridF32 mag(H, W);
    float   peak = 0.0f;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const float gx = -g(y - 1, x - 1) + g(y - 1, x + 1) - 2.0f * g(y, x - 1) + 2.0f * g(y, x + 1) -
                             g(y + 1, x - 1) + g(y + 1, x + 1);
            const float gy = -g(y - 1, x - 1) - 2.0f * g(y - 1, x) - g(y - 1, x + 1) + g(y + 1, x - 1) +
                             2.0f * g(y + 1, x) + g(y + 1, x + 1);
            mag.at(y, x) = std::sqrt(gx * gx + gy * gy);
            peak         = std::max(peak, mag.at(y, x));
        }
    }
    GridU8 edges(H, W, 1, 0);
    if (peak <= 0.0f) {
        return edges;
    }
    const float cut = tau * peak;
    for (size_t i = 0; i < mag.size(); ++i) {
        edges.data[i] = mag.data[i] > cut ? 1 : 0;
    }
    return edges;
}

GridU8 extract_edges_instances(const GridI32 & ids) {
    const int H = ids.height, W = ids.width;
    GridU8 edges(H, W, 1, 0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const int32_t v = ids.at(y, x);
            const bool edge = (y > 0 && ids.at(y - 1, x) != v) || (y + 1 < H && ids.at(y + 1, x) != v) ||
                              (x > 0 && ids.at(y, x - 1) != v) || (x + 1 < W && ids.at(y, x + 1) != v);
            edges.at(y, x) = edge ? 1 : 0;
        }
    }
    return edges;
}

void synth_embeddings(const PayloadSet & payload, const GridI32 & instance_ids, const GenerationConfig & cfg,
                      GridF32 & dense_feat, std::vector<float> & global_emb) {
    (void) instance_ids;
    const Ontology & onto = Ontology::synthetic();
    const int G     = cfg.feature_grid;
    const int S     = payload.rgb.height;
    const int patch = S / G;
    const int ncls  = onto.size();
    const int raw_dim = 3 + 1 + 3 + ncls;
    const int D       = cfg.embed_dim;

    // fixed seeded projection, same for every sample
    std::vector<float> proj((size_t) raw_dim * D);
    {
        Rng rng = Rng::derive(cfg.embed_seed, 0x9e0);
        const float scale = 1.0f / std::sqrt((float) raw_dim);
        for (auto & w : proj) {
            w = (float) rng.uniform(-1.0, 1.0) * scale;
        }
    }

    dense_feat = GridF32(G, G, D);
    std::vector<double> raw((size_t) raw_dim);
    for (int gy = 0; gy < G; ++gy) {
        for (int gx = 0; gx < G; ++gx) {
            std::fill(raw.begin(), raw.end(), 0.0);
            for (int py = 0; py < patch; ++py) {
                for (int px = 0; px < patch; ++px) {
                    const int y = gy * patch + py, x = gx * patch + px;
                    raw[0] += payload.rgb.at(y, x, 0) / 255.0;
                    raw[1] += payload.rgb.at(y, x, 1) / 255.0;
                    raw[2] += payload.rgb.at(y, x, 2) / 255.0;
                    raw[3] += payload.depth.at(y, x) / 10.0;
                    raw[4] += payload.normals.at(y, x, 0);
                    raw[5] += payload.normals.at(y, x, 1);
                    raw[6] += payload.normals.at(y, x, 2);
                    raw[(size_t) (7 + payload.semantic.at(y, x))] += 1.0;
                }
            }
            const double inv = 1.0 / (patch * patch);
            for (auto & v : raw) {
                v *= inv;
            }
            for (int d = 0; d < D; ++d) {
                double acc = 0.0;
                for (int j = 0; j < raw_dim; ++j) {
                    acc += raw[(size_t) j] * proj[(size_t) j * D + d];
                }
                dense_feat.at(gy, gx, d) = (float) acc;
            }
        }
    }

    global_emb.assign((size_t) D, 0.0f);
    for (int gy = 0; gy < G; ++gy) {
        for (int gx = 0; gx < G; ++gx) {
            for (int d = 0; d < D; ++d) {
                global_emb[(size_t) d] += dense_feat.at(gy, gx, d);
            }
        }
    }
    double n2 = 0.0;
    for (auto & v : global_emb) {
        v /= (float) (G * G);
        n2 += (double) v * v;
    }
    const double norm = std::sqrt(n2);
    if (norm < 1e-12) {
        global_emb[0] = 1.0f;
    } else {
        for (auto & v : global_emb) {
            v = (float) (v / norm);
        }
    }
}

} // namespace anymodal
