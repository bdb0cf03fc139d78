#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace anymodal {

// Every data stream the pipeline can tokenize, mask, model and generate.
// Grid modalities carry one token per spatial patch (2D positions), set
// modalities a fixed-length unordered token set (1D positions, full
// attention), sequence modalities a grammar sequence over the joint text
// vocabulary (1D positions, causal attention).
enum class Modality : uint8_t {
    rgb = 0,
    depth,
    normals,
    semantic,
    edges_rgb,
    edges_inst,
    dense_feat,
    global_emb,
    caption,
    bbox,
    metadata,
    palette,
    pose,
    instance,
    COUNT
};

constexpr int kModalityCount = (int) Modality::COUNT;

enum class ModalityKind : uint8_t { grid, set, sequence };

const char *             modality_name(Modality m);
std::optional<Modality>  modality_from_name(const std::string & name);
ModalityKind             modality_kind(Modality m);

inline bool is_sequence(Modality m) { return modality_kind(m) == ModalityKind::sequence; }
inline bool is_grid(Modality m) { return modality_kind(m) == ModalityKind::grid; }

// Bitmask over modalities (dataset coverage, query subsets).
struct ModalitySet {
    uint32_t bits = 0;

    void add(Modality m) { bits |= 1u << (int) m; }
    void remove(Modality m) { bits &= ~(1u << (int) m); }
    bool has(Modality m) const { return (bits >> (int) m) & 1u; }
    bool empty() const { return bits == 0; }
    int  count() const { return __builtin_popcount(bits); }

    static ModalitySet all() {
        ModalitySet s;
        s.bits = (1u << kModalityCount) - 1;
        return s;
    }

    std::vector<Modality> list() const {
        std::vector<Modality> v;
        for (int i = 0; i < kModalityCount; ++i) {
            if (has((Modality) i)) {
                v.push_back((Modality) i);
            }
        }
        return v;
    }
};

} // namespace anymodal
