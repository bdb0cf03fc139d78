#pragma once

#include <map>
#include <string>
#include <vector>

#include "anymodal/model.hpp"
#include "anymodal/pipeline.hpp"

namespace anymodal {

// ---------------------------------------------------------------------------
// Decoding schedules
// ---------------------------------------------------------------------------

enum class ScheduleKind : uint8_t { cosine, linear };

struct DecodeSchedule {
    int          steps = 8;
    ScheduleKind kind  = ScheduleKind::cosine;
    double       temperature = 1.0; // value sampling; also scales confidence noise (0 = greedy)
    int          top_k       = 0;   // sequence sampling (0 = full distribution)
    int          max_seq_len = 96;
    std::vector<int> custom_counts; // overrides the schedule when non-empty
};

// per-step commit counts; remaining fraction follows cos(pi*t/(2S)) and the
// differenced counts are forced to sum to total
std::vector<int> schedule_counts(int total, int steps, ScheduleKind kind);

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

// MaskGIT-style iterative parallel decoding for grid/set modalities;
// step_commits (when given) records the positions committed at each step
std::vector<int> iterative_decode(const Model & model, const TokenBatch & inputs, Modality target,
                                  const DecodeSchedule & schedule, Rng & rng,
                                  std::vector<std::vector<int>> * step_commits = nullptr);

struct SeqDecodeResult {
    bool             ok = false;
    std::vector<int> ids;   // generated ids (no EOS); raw tokens when !ok
    std::string      error;
};

// left-to-right sampling until EOS/max_len, grammar-validated post hoc via the
// sequence codecs; invalid sequences are resampled up to 3 times
SeqDecodeResult autoregressive_decode(const Model & model, const TokenBatch & inputs, Modality target,
                                      const TokenizerSet & toks, const DecodeSchedule & schedule, Rng & rng);

// ---------------------------------------------------------------------------
// Chained generation
// ---------------------------------------------------------------------------

struct ChainPlan {
    std::vector<Modality> targets; // generated in order, each feeding back as conditioning

    void validate() const; // rejects duplicates
};

struct ChainResult {
    std::map<Modality, std::vector<int>> tokens;
    PayloadSet  payload;      // detokenized grid/set outputs and decoded sequences
    std::vector<std::string> failures; // per-modality decode failures (partial results kept)
};

ChainResult chain_generate(const Model & model, const TokenizerSet & toks, const TokenBatch & seed_inputs,
                           const ChainPlan & plan, const DecodeSchedule & schedule, Rng & rng);

// ---------------------------------------------------------------------------
// Ensembling
// ---------------------------------------------------------------------------

struct EnsembleRule {
    int n = 10;
};

// n independent seeded decodes reduced per modality kind: majority vote for
// categorical maps (ties -> lowest class id), renormalized unit-vector mean
// for normals, per-channel median for continuous maps, first-sample for
// sequences
GridI32 ensemble_semantic(const Model & model, const TokenizerSet & toks, const TokenBatch & inputs,
                          const DecodeSchedule & schedule, const EnsembleRule & rule, Rng & rng);
GridF32 ensemble_normals(const Model & model, const TokenizerSet & toks, const TokenBatch & inputs,
                         const DecodeSchedule & schedule, const EnsembleRule & rule, Rng & rng);
GridF32 ensemble_depth(const Model & model, const TokenizerSet & toks, const TokenBatch & inputs,
                       const DecodeSchedule & schedule, const EnsembleRule & rule, Rng & rng);
std::vector<int> ensemble_sequence(const Model & model, const TokenizerSet & toks, const TokenBatch & inputs,
                                   Modality target, const DecodeSchedule & schedule, const EnsembleRule & rule,
                                   Rng & rng);

// mean angular error in degrees between unit-normal maps
double normals_angular_error(const GridF32 & a, const GridF32 & b);

// mean IoU over semantic classes present in either map set
double semantic_miou(const std::vector<GridI32> & pred, const std::vector<GridI32> & truth, int classes);

} // namespace anymodal
