#include "anymodal/optim.hpp"

#include <cmath>

namespace anymodal {

void AdamW::bind(const std::vector<Parameter *> & params) {
    params_ = params;
    slots_.clear();
    slots_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        slots_[i].m.assign(params[i]->value.numel(), 0.0);
        slots_[i].v.assign(params[i]->value.numel(), 0.0);
    }
}

double AdamW::current_lr() const {
    const double t = (double) tokens_seen_;
    if (cfg_.warmup_tokens > 0 && t < (double) cfg_.warmup_tokens) {
        return cfg_.lr * t / (double) cfg_.warmup_tokens;
    }
    if (cfg_.total_tokens > cfg_.warmup_tokens) {
        const double span = (double) (cfg_.total_tokens - cfg_.warmup_tokens);
        const double frac = std::min(1.0, (t - (double) cfg_.warmup_tokens) / span);
        return cfg_.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
    }
    return cfg_.lr;
}

void AdamW::zero_grad() {
    for (Parameter * p : params_) {
        p->zero_grad();
    }
}

void AdamW::step(uint64_t tokens_this_step) {
    tokens_seen_ += tokens_this_step;
    step_count_ += 1;
    const double lr = current_lr();
    const double bc1 = 1.0 - std::pow(cfg_.beta1, (double) step_count_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, (double) step_count_);

    double clip_scale = 1.0;
    if (cfg_.grad_clip > 0.0) {
        double norm2 = 0.0;
        for (Parameter * p : params_) {
            for (double g : p->grad.data) {
                norm2 += g * g;
            }
        }
        const double norm = std::sqrt(norm2);
        if (norm > cfg_.grad_clip) {
            clip_scale = cfg_.grad_clip / norm;
        }
    }

    for (size_t i = 0; i < params_.size(); ++i) {
        Parameter & p = *params_[i];
        Slot &      s = slots_[i];
        for (size_t j = 0; j < p.value.data.size(); ++j) {
            const double g = p.grad.data[j] * clip_scale;
            s.m[j] = cfg_.beta1 * s.m[j] + (1.0 - cfg_.beta1) * g;
            s.v[j] = cfg_.beta2 * s.v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = s.m[j] / bc1;
            const double vhat = s.v[j] / bc2;
            p.value.data[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p.value.data[j]);
        }
    }
}

void AdamW::restore(const std::vector<Slot> & slots, uint64_t step_count, uint64_t tokens_seen) {
    if (slots.size() != slots_.size()) {
        throw ArtifactError("optimizer state slot count mismatch");
    }
    slots_       = slots;
    step_count_  = step_count;
    tokens_seen_ = tokens_seen;
}

} // namespace anymodal
