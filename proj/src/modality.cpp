#include "anymodal/modality.hpp"

namespace anymodal {

static const char * kNames[kModalityCount] = {
    "rgb", "depth", "normals", "semantic", "edges_rgb", "edges_inst", "dense_feat",
    "global_emb", "caption", "bbox", "metadata", "palette", "pose", "instance",
};

const char * modality_name(Modality m) {
    return kNames[(int) m];
}

std::optional<Modality> modality_from_name(const std::string & name) {
    for (int i = 0; i < kModalityCount; ++i) {
        if (name == kNames[i]) {
            return (Modality) i;
        }
    }
    return std::nullopt;
}

ModalityKind modality_kind(Modality m) {
    switch (m) {
        case Modality::rgb:
        case Modality::depth:
        case Modality::normals:
        case Modality::semantic:
        case Modality::edges_rgb:
        case Modality::edges_inst:
        case Modality::dense_feat:
            return ModalityKind::grid;
        case Modality::global_emb:
            return ModalityKind::set;
        default:
            return ModalityKind::sequence;
    }
}

} // namespace anymodal
