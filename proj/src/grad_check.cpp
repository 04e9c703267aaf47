#include "aac/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aac/model.hpp"
#include "aac/objectives.hpp"

namespace aac {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double eps, double rtol) {
    if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be > 0");
    for (const auto& t : inputs)
        if (!t.is_leaf() || !t.requires_grad()) throw std::invalid_argument("grad_check: inputs must be grad leaves");

    for (auto& t : inputs) t.zero_grad();
    Tensor out = f();
    if (out.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    const double floor = 1e-6 * std::max(1.0, std::abs(out.item()));
    out.backward();
    std::vector<std::vector<double>> analytic;
    for (const auto& t : inputs) {
        auto g = t.grad();
        analytic.emplace_back(g.begin(), g.end());
        if (analytic.back().empty()) analytic.back().assign(t.size(), 0.0);
    }

    GradCheckReport r;
    NoGradGuard no_grad;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto x = inputs[k].mutable_data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double orig = x[i];
            x[i] = orig + eps;
            const double fp = f().item();
            x[i] = orig - eps;
            const double fm = f().item();
            x[i] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[k][i];
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
            r.max_abs_error = std::max(r.max_abs_error, abs_err);
            if (rel > r.max_rel_error || r.worst.empty()) {
                r.max_rel_error = std::max(r.max_rel_error, rel);
                r.worst = std::to_string(k) + "#" + std::to_string(i);
            }
            ++r.checked;
        }
    }
    r.passed = r.max_rel_error < rtol;
    for (auto& t : inputs) t.zero_grad();
    return r;
}

namespace {

Tensor random_param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor random_const(Shape shape, Rng& rng) {
    Tensor t = random_param(std::move(shape), rng);
    t.set_requires_grad(false);
    return t;
}

// Projects an arbitrary tensor onto a scalar with fixed random weights so that
// every output coordinate contributes a distinct gradient.
struct Probe {
    Tensor weights;
    Tensor operator()(const Tensor& t) const { return sum(mul(t, weights)); }
};

Probe probe_for(const Shape& shape, Rng& rng) { return {random_const(shape, rng)}; }

using Case = std::pair<std::function<Tensor()>, std::vector<Tensor>>;

model::ModelConfig tiny_config() {
    model::ModelConfig c;
    c.d_model = 8;
    c.layers = 2;
    c.heads = 2;
    c.ffn_dim = 12;
    c.dropout = 0.0;
    c.d_enc = 5;
    c.d_sent = 6;
    c.max_len = 6;
    c.vocab_size = 7;
    c.sent_layers = 1;
    c.sent_heads = 2;
    c.sent_ffn_dim = 10;
    return c;
}

}  // namespace

std::vector<GradSuiteRow> run_grad_suite(std::size_t n_seeds, double eps, double rtol) {
    std::vector<GradSuiteRow> rows;
    for (std::size_t s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = 1000 + s;
        Rng rng(seed);
        std::vector<std::pair<std::string, Case>> cases;

        {
            Tensor a = random_param({3, 4}, rng), b = random_param({4, 2}, rng);
            auto p = probe_for({3, 2}, rng);
            cases.push_back({"matmul", {[=] { return p(matmul(a, b)); }, {a, b}}});
        }
        {
            Tensor a = random_param({3, 4}, rng);
            auto p = probe_for({4, 3}, rng);
            cases.push_back({"transpose", {[=] { return p(transpose(a)); }, {a}}});
        }
        {
            Tensor a = random_param({2, 3}, rng), b = random_param({2, 3}, rng);
            auto p = probe_for({2, 3}, rng);
            cases.push_back({"add", {[=] { return p(add(a, b)); }, {a, b}}});
            cases.push_back({"sub", {[=] { return p(sub(a, b)); }, {a, b}}});
            cases.push_back({"mul", {[=] { return p(mul(a, b)); }, {a, b}}});
            cases.push_back({"scale", {[=] { return p(scale(a, -1.7)); }, {a}}});
        }
        {
            Tensor x = random_param({3, 4}, rng), bias = random_param({4}, rng);
            auto p = probe_for({3, 4}, rng);
            cases.push_back({"add_bias", {[=] { return p(add_bias(x, bias)); }, {x, bias}}});
            cases.push_back({"sum", {[=] { return scale(sum(mul(x, x)), 0.5); }, {x}}});
            cases.push_back({"mean", {[=] { return mean(mul(x, x)); }, {x}}});
            auto pr = probe_for({1, 4}, rng);
            cases.push_back({"mean_rows", {[=] { return pr(mean_rows(x)); }, {x}}});
            auto p2 = probe_for({2, 6}, rng);
            cases.push_back({"reshape", {[=] { return p2(reshape(x, {2, 6})); }, {x}}});
        }
        {
            Tensor x = random_param({3, 5}, rng, -2.0, 2.0);
            auto p = probe_for({3, 5}, rng);
            cases.push_back({"softmax", {[=] { return p(softmax(x)); }, {x}}});
            cases.push_back({"softmax_axis0", {[=] { return p(softmax(x, 0)); }, {x}}});
            cases.push_back({"log_softmax", {[=] { return p(log_softmax(x)); }, {x}}});
            cases.push_back({"gelu", {[=] { return p(gelu(x)); }, {x}}});
        }
        {
            Tensor x = random_param({3, 5}, rng), g = random_param({5}, rng), b = random_param({5}, rng);
            auto p = probe_for({3, 5}, rng);
            cases.push_back({"layer_norm", {[=] { return p(layer_norm(x, g, b, 1e-5)); }, {x, g, b}}});
        }
        {
            Tensor table = random_param({5, 3}, rng);
            const std::vector<int> ids{0, 3, 3, 1};
            auto p = probe_for({4, 3}, rng);
            cases.push_back({"embedding", {[=] { return p(embedding(table, ids)); }, {table}}});
        }
        {
            Tensor x = random_param({4, 6}, rng);
            auto p = probe_for({4, 6}, rng);
            const std::uint64_t mask_seed = seed * 7 + 1;
            cases.push_back({"dropout", {[=] {
                                             Rng r(mask_seed);
                                             return p(dropout(x, 0.3, true, r));
                                         },
                                         {x}}});
        }
        {
            Tensor x = random_param({4, 6}, rng), y = random_param({2, 6}, rng), z = random_param({4, 2}, rng);
            auto pc = probe_for({4, 3}, rng);
            auto pr = probe_for({2, 6}, rng);
            auto pcc = probe_for({4, 8}, rng);
            auto prr = probe_for({6, 6}, rng);
            cases.push_back({"slice_cols", {[=] { return pc(slice_cols(x, 2, 3)); }, {x}}});
            cases.push_back({"slice_rows", {[=] { return pr(slice_rows(x, 1, 2)); }, {x}}});
            cases.push_back({"concat_cols", {[=] { return pcc(concat_cols({x, z})); }, {x, z}}});
            cases.push_back({"concat_rows", {[=] { return prr(concat_rows({x, y})); }, {x, y}}});
        }
        {
            Tensor q = random_param({3, 4}, rng), k = random_param({5, 4}, rng), v = random_param({5, 4}, rng);
            Tensor qs = random_param({3, 4}, rng), ks = random_param({3, 4}, rng), vs = random_param({3, 4}, rng);
            auto p = probe_for({3, 4}, rng);
            cases.push_back({"attention", {[=] { return p(model::attend(q, k, v, 2, nullptr)); }, {q, k, v}}});
            cases.push_back({"causal_attention", {[=] {
                                                      const Tensor m = model::causal_mask(3);
                                                      return p(model::attend(qs, ks, vs, 2, &m));
                                                  },
                                                  {qs, ks, vs}}});
        }
        {
            Tensor logits = random_param({4, 6}, rng, -2.0, 2.0);
            const std::vector<int> targets{3, 5, 0, 2};  // position 2 is padding
            cases.push_back({"cross_entropy", {[=] { return loss::cross_entropy_smoothed(logits, targets, 0.1); }, {logits}}});
            Tensor a = random_param({2, 5}, rng, -2.0, 2.0), b = random_param({2, 5}, rng, -2.0, 2.0);
            cases.push_back({"smooth_l1", {[=] { return loss::smooth_l1(a, b, 1.0); }, {a, b}}});
            cases.push_back({"mse", {[=] { return loss::mse(a, b); }, {a, b}}});
            cases.push_back({"l1", {[=] { return loss::l1(a, b); }, {a, b}}});
            cases.push_back({"cosine", {[=] { return loss::cosine_distance(a, b); }, {a, b}}});
        }

        // Decoder with both heads and both losses, against every trainable
        // parameter plus the input features.
        const auto cfg = tiny_config();
        auto captioner = std::make_shared<model::Captioner>(cfg, seed);
        text::Vocabulary sent_vocab(text::VocabKind::word, {"w0", "w1", "w2", "w3", "w4"});
        auto encoder = std::make_shared<model::SentenceEncoder>(cfg, sent_vocab);
        {
            Tensor features = random_param({4, cfg.d_enc}, rng);
            const text::TokenSequence prev{text::kBos, 4, 6, 5};
            const std::vector<int> targets{4, 6, 5, text::kEos};
            const text::TokenSequence ref_ids{4, 7, 5, 8, text::kEos};
            Tensor e_s = encoder->from_tokens(ref_ids).detach();
            std::vector<Tensor> inputs{features};
            for (const auto& p : captioner->parameters()) inputs.push_back(p.tensor);
            cases.push_back({"decoder_composite",
                             {[=] {
                                  Tensor memory = captioner->encode_project(features);
                                  auto out = captioner->decode_teacher_forced(memory, prev);
                                  Tensor lt = loss::cross_entropy_smoothed(out.logits, targets, 0.1);
                                  Tensor e_hat = encoder->from_vectors(captioner->ser_project(out.token_embeddings));
                                  Tensor ls = loss::smooth_l1(e_hat, e_s, 1.0);
                                  return loss::combined_loss(lt, ls, 100.0);
                              },
                              inputs}});
        }
        {
            Tensor vectors = random_param({4, cfg.d_sent}, rng);
            auto p = probe_for({1, cfg.d_sent}, rng);
            cases.push_back({"sentence_encoder", {[=] { return p(encoder->from_vectors(vectors)); }, {vectors}}});
        }

        for (auto& [name, c] : cases) rows.push_back({name, seed, grad_check(c.first, c.second, eps, rtol)});
    }
    return rows;
}

}  // namespace aac
