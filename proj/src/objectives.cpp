#include "aac/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace aac::loss {

std::string to_string(SerCriterion c) {
    switch (c) {
        case SerCriterion::smooth_l1: return "smooth_l1";
        case SerCriterion::mse: return "mse";
        case SerCriterion::l1: return "l1";
        case SerCriterion::cosine: return "cosine";
    }
    return "smooth_l1";
}

SerCriterion ser_criterion_from_string(std::string_view s) {
    if (s == "smooth_l1") return SerCriterion::smooth_l1;
    if (s == "mse") return SerCriterion::mse;
    if (s == "l1") return SerCriterion::l1;
    if (s == "cosine") return SerCriterion::cosine;
    throw std::invalid_argument("unknown SER criterion '" + std::string(s) + "'");
}

void LossConfig::validate() const {
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw std::invalid_argument("loss: label_smoothing must be in [0, 1)");
    if (!(lambda >= 0.0)) throw std::invalid_argument("loss: lambda must be >= 0");
    if (!(beta > 0.0)) throw std::invalid_argument("loss: beta must be > 0");
}

Tensor cross_entropy_smoothed(const Tensor& logits, std::span<const int> targets, double epsilon, int pad_id) {
    if (logits.ndim() != 2) throw std::invalid_argument("cross_entropy: logits must be [L x V]");
    const std::size_t n = logits.rows(), v = logits.cols();
    if (targets.size() != n) throw std::invalid_argument("cross_entropy: target count does not match logits rows");
    std::vector<int> tgt(targets.begin(), targets.end());
    std::size_t count = 0;
    for (int t : tgt) {
        if (t == pad_id) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= v) throw std::out_of_range("cross_entropy: target id out of range");
        ++count;
    }
    if (count == 0) throw std::invalid_argument("cross_entropy: every position is padding");

    const double off = epsilon / static_cast<double>(v);
    const double on = 1.0 - epsilon + off;
    auto d = logits.data();
    std::vector<double> probs(n * v, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (tgt[i] == pad_id) continue;
        const double* row = d.data() + i * v;
        double mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < v; ++j) s += std::exp(row[j] - mx);
        const double lse = mx + std::log(s);
        double loss = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
            const double logp = row[j] - lse;
            probs[i * v + j] = std::exp(logp);
            const double q = static_cast<std::size_t>(tgt[i]) == j ? on : off;
            if (q != 0.0) loss -= q * logp;
        }
        total += loss;
    }
    const double inv = 1.0 / static_cast<double>(count);
    return make_op({1}, {total * inv}, {logits},
                   [logits, tgt = std::move(tgt), probs = std::move(probs), n, v, on, off, inv, pad_id](
                       std::span<const double>, std::span<const double> g) {
                       Tensor l = logits;
                       auto gl = l.grad_buffer();
                       for (std::size_t i = 0; i < n; ++i) {
                           if (tgt[i] == pad_id) continue;
                           for (std::size_t j = 0; j < v; ++j) {
                               const double q = static_cast<std::size_t>(tgt[i]) == j ? on : off;
                               gl[i * v + j] += g[0] * inv * (probs[i * v + j] - q);
                           }
                       }
                   });
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    if (a.size() == 0) throw std::invalid_argument(std::string(op) + ": empty input");
}

// Elementwise loss with derivative dl/dd, d = predicted - target, mean-reduced.
template <typename Value, typename Slope>
Tensor elementwise_regression(const Tensor& predicted, const Tensor& target, Value value, Slope slope) {
    const std::size_t n = predicted.size();
    auto p = predicted.data(), t = target.data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += value(p[i] - t[i]);
    const double inv = 1.0 / static_cast<double>(n);
    return make_op({1}, {total * inv}, {predicted, target},
                   [predicted, target, inv, slope](std::span<const double>, std::span<const double> g) {
                       auto p = predicted.data(), t = target.data();
                       Tensor pp = predicted, tt = target;
                       auto gp = pp.requires_grad() ? pp.grad_buffer() : std::span<double>{};
                       auto gt = tt.requires_grad() ? tt.grad_buffer() : std::span<double>{};
                       for (std::size_t i = 0; i < p.size(); ++i) {
                           const double s = g[0] * inv * slope(p[i] - t[i]);
                           if (!gp.empty()) gp[i] += s;
                           if (!gt.empty()) gt[i] -= s;
                       }
                   });
}

}  // namespace

Tensor smooth_l1(const Tensor& predicted, const Tensor& target, double beta) {
    require_same(predicted, target, "smooth_l1");
    if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be > 0");
    return elementwise_regression(
        predicted, target,
        [beta](double d) {
            const double a = std::abs(d);
            return a < beta ? d * d / (2.0 * beta) : a - beta / 2.0;
        },
        [beta](double d) {
            if (std::abs(d) < beta) return d / beta;
            return d > 0.0 ? 1.0 : -1.0;
        });
}

Tensor mse(const Tensor& predicted, const Tensor& target) {
    require_same(predicted, target, "mse");
    return elementwise_regression(
        predicted, target, [](double d) { return d * d; }, [](double d) { return 2.0 * d; });
}

Tensor l1(const Tensor& predicted, const Tensor& target) {
    require_same(predicted, target, "l1");
    return elementwise_regression(
        predicted, target, [](double d) { return std::abs(d); },
        [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); });
}

Tensor cosine_distance(const Tensor& predicted, const Tensor& target) {
    require_same(predicted, target, "cosine_distance");
    const std::size_t cols = predicted.cols();
    const std::size_t rows = predicted.size() / cols;
    auto p = predicted.data(), t = target.data();
    std::vector<double> dots(rows), np(rows), nt(rows);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0, a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            dot += p[r * cols + j] * t[r * cols + j];
            a += p[r * cols + j] * p[r * cols + j];
            b += t[r * cols + j] * t[r * cols + j];
        }
        if (a == 0.0 || b == 0.0) throw std::domain_error("cosine_distance: zero-norm vector");
        dots[r] = dot;
        np[r] = std::sqrt(a);
        nt[r] = std::sqrt(b);
        total += 1.0 - dot / (np[r] * nt[r]);
    }
    const double inv = 1.0 / static_cast<double>(rows);
    return make_op({1}, {total * inv}, {predicted, target},
                   [predicted, target, rows, cols, inv, dots = std::move(dots), np = std::move(np), nt = std::move(nt)](
                       std::span<const double>, std::span<const double> g) {
                       auto p = predicted.data(), t = target.data();
                       Tensor pp = predicted, tt = target;
                       auto gp = pp.requires_grad() ? pp.grad_buffer() : std::span<double>{};
                       auto gt = tt.requires_grad() ? tt.grad_buffer() : std::span<double>{};
                       for (std::size_t r = 0; r < rows; ++r) {
                           const double c = dots[r] / (np[r] * nt[r]);
                           for (std::size_t j = 0; j < cols; ++j) {
                               const double pj = p[r * cols + j], tj = t[r * cols + j];
                               // d(cos)/dp = t/(|p||t|) - cos * p/|p|^2
                               if (!gp.empty())
                                   gp[r * cols + j] -= g[0] * inv * (tj / (np[r] * nt[r]) - c * pj / (np[r] * np[r]));
                               if (!gt.empty())
                                   gt[r * cols + j] -= g[0] * inv * (pj / (np[r] * nt[r]) - c * tj / (nt[r] * nt[r]));
                           }
                       }
                   });
}

Tensor ser_loss(const Tensor& predicted, const Tensor& target, const LossConfig& config) {
    switch (config.criterion) {
        case SerCriterion::smooth_l1: return smooth_l1(predicted, target, config.beta);
        case SerCriterion::mse: return mse(predicted, target);
        case SerCriterion::l1: return l1(predicted, target);
        case SerCriterion::cosine: return cosine_distance(predicted, target);
    }
    throw std::logic_error("ser_loss: unhandled criterion");
}

Tensor combined_loss(const Tensor& token_loss, const Tensor& sentence_loss, double lambda) {
    if (token_loss.size() != 1 || sentence_loss.size() != 1) throw std::invalid_argument("combined_loss: inputs must be scalars");
    return add(token_loss, scale(sentence_loss, lambda));
}

}  // namespace aac::loss
