#pragma once

#include <cstdint>
#include <vector>

#include "anymodal/nn.hpp"

namespace anymodal {

struct AdamWConfig {
    double   lr           = 1e-4;
    double   beta1        = 0.9;
    double   beta2        = 0.95;
    double   eps          = 1e-8;
    double   weight_decay = 0.05;
    double   grad_clip    = 0.0; // 0 = off, global L2 norm otherwise
    uint64_t warmup_tokens = 0;  // linear warmup over tokens seen
    uint64_t total_tokens  = 0;  // cosine decay to 0 at this point; 0 = constant lr after warmup
};

// AdamW with decoupled weight decay and a warmup-linear / cosine-decay
// token-based schedule. Moments are keyed by position in the parameter list,
// which must be stable across steps (and across save/load).
class AdamW {
  public:
    explicit AdamW(const AdamWConfig & cfg) : cfg_(cfg) {}

    void bind(const std::vector<Parameter *> & params);

    double current_lr() const;
    void   step(uint64_t tokens_this_step);
    void   zero_grad();

    uint64_t step_count() const { return step_count_; }
    uint64_t tokens_seen() const { return tokens_seen_; }
    const AdamWConfig & config() const { return cfg_; }

    // serialized state access (checkpointing)
    struct Slot {
        std::vector<double> m, v;
    };
    const std::vector<Slot> & slots() const { return slots_; }
    void restore(const std::vector<Slot> & slots, uint64_t step_count, uint64_t tokens_seen);
    const std::vector<Parameter *> & params() const { return params_; }

  private:
    AdamWConfig              cfg_;
    std::vector<Parameter *> params_;
    std::vector<Slot>        slots_;
    uint64_t                 step_count_  = 0;
    uint64_t                 tokens_seen_ = 0;
};

} // namespace anymodal
