#include "aac/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aac::decode {

void DecodeConfig::validate() const {
    if (beam_size < 1) throw std::invalid_argument("decode: beam_size must be >= 1");
    if (min_len < 1 || min_len > max_len) throw std::invalid_argument("decode: need 1 <= min_len <= max_len");
}

std::unordered_set<int> stopword_ids(const text::Vocabulary& vocab, const text::StopwordSet& stopwords) {
    std::unordered_set<int> ids;
    // Entries such as "don't" appear in captions only in normalized form.
    for (const auto& w : stopwords.words())
        for (const auto& form : {w, text::normalize(w)})
            if (vocab.contains(form)) ids.insert(vocab.id(form));
    return ids;
}

std::vector<bool> allowed_tokens(const TokenSequence& prefix, std::size_t vocab_size, const DecodeConfig& config) {
    if (prefix.empty() || prefix.front() != text::kBos) throw std::invalid_argument("allowed_tokens: prefix must start with bos");
    const std::size_t emitted = prefix.size() - 1;
    std::vector<bool> mask(vocab_size, false);
    if (emitted >= config.max_len) {
        mask[text::kEos] = true;
        return mask;
    }
    std::fill(mask.begin(), mask.end(), true);
    mask[text::kPad] = false;
    mask[text::kBos] = false;
    mask[text::kEos] = emitted >= config.min_len;
    for (std::size_t i = 1; i < prefix.size(); ++i) {
        const int t = prefix[i];
        if (t >= 0 && static_cast<std::size_t>(t) < vocab_size && !config.stopword_ids.contains(t)) mask[t] = false;
    }
    return mask;
}

namespace {

std::vector<double> log_softmax_row(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double v : logits) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

// Higher score first, then lexicographically smaller sequence.
bool ranks_before(double score_a, const TokenSequence& a, double score_b, const TokenSequence& b) {
    if (score_a != score_b) return score_a > score_b;
    return a < b;
}

std::vector<double> checked_logits(StepModel& model, const TokenSequence& prefix) {
    auto logits = model.logits(prefix);
    if (logits.size() != model.vocab_size()) throw std::logic_error("step model returned wrong logit count");
    return logits;
}

}  // namespace

Hypothesis beam_search(StepModel& model, const DecodeConfig& config) {
    config.validate();
    const std::size_t vocab = model.vocab_size();
    struct Candidate {
        TokenSequence tokens;
        double score;
    };
    std::vector<Candidate> live{{{text::kBos}, 0.0}};
    std::vector<Candidate> finished;

    for (std::size_t step = 0; step <= config.max_len && !live.empty(); ++step) {
        std::vector<Candidate> candidates;
        for (const auto& h : live) {
            const auto lp = log_softmax_row(checked_logits(model, h.tokens));
            const auto mask = allowed_tokens(h.tokens, vocab, config);
            for (std::size_t t = 0; t < vocab; ++t) {
                if (!mask[t]) continue;
                Candidate c{h.tokens, h.score + lp[t]};
                c.tokens.push_back(static_cast<int>(t));
                candidates.push_back(std::move(c));
            }
        }
        std::sort(candidates.begin(), candidates.end(),
                  [](const Candidate& a, const Candidate& b) { return ranks_before(a.score, a.tokens, b.score, b.tokens); });
        std::vector<Candidate> next;
        for (auto& c : candidates) {
            if (c.tokens.back() == text::kEos) {
                finished.push_back(std::move(c));
            } else {
                next.push_back(std::move(c));
                if (next.size() == config.beam_size) break;
            }
        }
        live = std::move(next);
        if (!finished.empty() && !live.empty()) {
            // Scores only decrease as hypotheses grow, so a finished
            // hypothesis strictly above every live one cannot be beaten.
            double best_finished = finished.front().score;
            for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
            double best_live = live.front().score;
            for (const auto& l : live) best_live = std::max(best_live, l.score);
            if (best_finished > best_live) break;
        }
    }
    if (finished.empty()) throw std::logic_error("beam_search: no hypothesis could be finished");
    auto best = std::min_element(finished.begin(), finished.end(), [](const Candidate& a, const Candidate& b) {
        return ranks_before(a.score, a.tokens, b.score, b.tokens);
    });
    return {best->tokens, best->score, true};
}

Hypothesis greedy_search(StepModel& model, const DecodeConfig& config) {
    config.validate();
    Hypothesis h{{text::kBos}, 0.0, false};
    while (!h.finished) {
        const auto lp = log_softmax_row(checked_logits(model, h.tokens));
        const auto mask = allowed_tokens(h.tokens, model.vocab_size(), config);
        int best = -1;
        for (std::size_t t = 0; t < mask.size(); ++t)
            if (mask[t] && (best < 0 || lp[t] > lp[static_cast<std::size_t>(best)])) best = static_cast<int>(t);
        if (best < 0) throw std::logic_error("greedy_search: no legal token");
        h.tokens.push_back(best);
        h.log_prob += lp[static_cast<std::size_t>(best)];
        h.finished = best == text::kEos;
    }
    return h;
}

Hypothesis exhaustive_search(StepModel& model, const DecodeConfig& config, double guard) {
    config.validate();
    const std::size_t vocab = model.vocab_size();
    if (std::pow(static_cast<double>(vocab), static_cast<double>(config.max_len)) > guard)
        throw std::length_error("exhaustive_search: search space exceeds guard");
    Hypothesis best;
    bool have = false;
    TokenSequence prefix{text::kBos};
    auto visit = [&](auto&& self, double score) -> void {
        const auto lp = log_softmax_row(checked_logits(model, prefix));
        const auto mask = allowed_tokens(prefix, vocab, config);
        for (std::size_t t = 0; t < vocab; ++t) {
            if (!mask[t]) continue;
            const double s = score + lp[t];
            prefix.push_back(static_cast<int>(t));
            if (t == static_cast<std::size_t>(text::kEos)) {
                if (!have || ranks_before(s, prefix, best.log_prob, best.tokens)) {
                    best = {prefix, s, true};
                    have = true;
                }
            } else {
                self(self, s);
            }
            prefix.pop_back();
        }
    };
    visit(visit, 0.0);
    if (!have) throw std::logic_error("exhaustive_search: no legal sequence");
    return best;
}

// ---- CaptionerStepper -----------------------------------------------------

CaptionerStepper::CaptionerStepper(const model::Captioner& model, Tensor memory)
    : model_(model), memory_(std::move(memory)) {}

std::size_t CaptionerStepper::vocab_size() const { return model_.config().vocab_size; }

std::vector<double> CaptionerStepper::logits(const TokenSequence& prefix) {
    if (prefix.empty()) throw std::invalid_argument("CaptionerStepper: empty prefix");
    if (auto it = entries_.find(prefix); it != entries_.end()) return it->second.logits;
    Entry entry;
    if (prefix.size() == 1) {
        entry.cache = model_.start_cache(memory_);
    } else {
        const TokenSequence parent(prefix.begin(), prefix.end() - 1);
        logits(parent);
        entry.cache = entries_.at(parent).cache;
    }
    entry.logits = model_.advance(entry.cache, prefix.back());
    auto [it, _] = entries_.emplace(prefix, std::move(entry));
    return it->second.logits;
}

Hypothesis decode_features(const model::Captioner& model, const Tensor& features, const DecodeConfig& config) {
    NoGradGuard no_grad;
    CaptionerStepper stepper(model, model.encode_project(features));
    return beam_search(stepper, config);
}

}  // namespace aac::decode
