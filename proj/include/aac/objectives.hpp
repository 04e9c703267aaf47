#pragma once

#include <span>
#include <string>

#include "aac/tensor.hpp"

namespace aac::loss {

enum class SerCriterion { smooth_l1, mse, l1, cosine };

std::string to_string(SerCriterion c);
SerCriterion ser_criterion_from_string(std::string_view s);

struct LossConfig {
    double label_smoothing = 0.1;
    double lambda = 100.0;
    double beta = 1.0;
    SerCriterion criterion = SerCriterion::smooth_l1;
    /// When false the SER branch is not built at all (no projection head).
    bool ser_enabled = true;

    void validate() const;
};

/// Label-smoothed cross-entropy averaged over positions whose target is not
/// `pad_id`. The smoothed target puts 1-eps+eps/V on the reference class and
/// eps/V elsewhere.
Tensor cross_entropy_smoothed(const Tensor& logits, std::span<const int> targets, double epsilon, int pad_id = 0);

/// Elementwise SmoothL1 (quadratic below beta, linear above), mean over all
/// elements.
Tensor smooth_l1(const Tensor& predicted, const Tensor& target, double beta);

Tensor mse(const Tensor& predicted, const Tensor& target);
Tensor l1(const Tensor& predicted, const Tensor& target);
/// Mean over rows of 1 - cos(predicted_row, target_row). Zero-norm rows throw.
Tensor cosine_distance(const Tensor& predicted, const Tensor& target);

/// Dispatches on the configured regression criterion.
Tensor ser_loss(const Tensor& predicted, const Tensor& target, const LossConfig& config);

/// L = L_t + lambda * L_s.
Tensor combined_loss(const Tensor& token_loss, const Tensor& sentence_loss, double lambda);

}  // namespace aac::loss
