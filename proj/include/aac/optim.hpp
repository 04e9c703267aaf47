#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aac/model.hpp"

namespace aac::optim {

struct OptimConfig {
    double lr0 = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-6;
    double clip_norm = 10.0;
    std::size_t epochs = 100;

    void validate() const;
};

/// lr_k = 0.5 * (1 + cos(k*pi/K)) * lr0, for 0 <= k <= K.
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0);

/// Global L2 norm over every gradient buffer present.
double global_grad_norm(const std::vector<model::NamedParameter>& params);

/// Rescales all gradients by clip_norm/g when the global norm g exceeds
/// clip_norm. Returns the factor applied (1 when untouched). Non-finite
/// gradients throw.
double clip_global_norm(std::vector<model::NamedParameter>& params, double clip_norm);

struct MomentState {
    std::vector<double> m;
    std::vector<double> v;
    friend bool operator==(const MomentState&, const MomentState&) = default;
};

struct AdamWState {
    std::uint64_t step = 0;
    std::map<std::string, MomentState> moments;

    friend bool operator==(const AdamWState&, const AdamWState&) = default;
};

/// One AdamW update. Parameters flagged decay_exempt skip the decoupled
/// decay term. Parameters with no gradient buffer are treated as having a
/// zero gradient.
///
///   theta <- theta * (1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps)
void adamw_step(std::vector<model::NamedParameter>& params, AdamWState& state, double lr, const OptimConfig& config);

void zero_grad(std::vector<model::NamedParameter>& params);

}  // namespace aac::optim
