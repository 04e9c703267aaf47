#include "aac/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace aac::optim {

void OptimConfig::validate() const {
    if (!(lr0 > 0.0)) throw std::invalid_argument("optim: lr0 must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("optim: betas must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("optim: weight decay must be >= 0");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("optim: clip_norm must be > 0");
    if (!(eps > 0.0)) throw std::invalid_argument("optim: eps must be > 0");
    if (epochs == 0) throw std::invalid_argument("optim: epochs must be >= 1");
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0) {
    if (total_epochs == 0) throw std::invalid_argument("cosine_lr: total epochs must be >= 1");
    if (epoch > total_epochs)
        throw std::out_of_range("cosine_lr: epoch " + std::to_string(epoch) + " beyond schedule of " +
                                std::to_string(total_epochs));
    const double angle = static_cast<double>(epoch) * std::numbers::pi / static_cast<double>(total_epochs);
    return 0.5 * (1.0 + std::cos(angle)) * lr0;
}

double global_grad_norm(const std::vector<model::NamedParameter>& params) {
    double s = 0.0;
    for (const auto& p : params)
        for (double g : p.tensor.grad()) s += g * g;
    return std::sqrt(s);
}

double clip_global_norm(std::vector<model::NamedParameter>& params, double clip_norm) {
    const double norm = global_grad_norm(params);
    if (!std::isfinite(norm)) throw std::runtime_error("clip_global_norm: non-finite gradient");
    if (norm <= clip_norm) return 1.0;
    const double factor = clip_norm / norm;
    for (auto& p : params)
        for (double& g : p.tensor.grad_buffer()) g *= factor;
    return factor;
}

void adamw_step(std::vector<model::NamedParameter>& params, AdamWState& state, double lr, const OptimConfig& config) {
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(config.beta1, t);
    const double bc2 = 1.0 - std::pow(config.beta2, t);
    for (auto& p : params) {
        const std::size_t n = p.tensor.size();
        auto& mom = state.moments[p.name];
        if (mom.m.empty()) {
            mom.m.assign(n, 0.0);
            mom.v.assign(n, 0.0);
        }
        if (mom.m.size() != n || mom.v.size() != n)
            throw std::invalid_argument("adamw_step: state shape mismatch for " + p.name);
        auto theta = p.tensor.mutable_data();
        auto grad = p.tensor.grad();
        const double decay = p.decay_exempt ? 1.0 : 1.0 - lr * config.weight_decay;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = grad.empty() ? 0.0 : grad[i];
            mom.m[i] = config.beta1 * mom.m[i] + (1.0 - config.beta1) * g;
            mom.v[i] = config.beta2 * mom.v[i] + (1.0 - config.beta2) * g * g;
            const double m_hat = mom.m[i] / bc1;
            const double v_hat = mom.v[i] / bc2;
            theta[i] = theta[i] * decay - lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

void zero_grad(std::vector<model::NamedParameter>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace aac::optim
