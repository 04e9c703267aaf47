#pragma once

#include <map>
#include <unordered_set>
#include <vector>

#include "aac/model.hpp"
#include "aac/text.hpp"

namespace aac::decode {

using text::TokenSequence;

struct DecodeConfig {
    std::size_t beam_size = 2;
    std::size_t min_len = 3;   // emitted tokens, bos/eos excluded
    std::size_t max_len = 30;
    std::unordered_set<int> stopword_ids;  // exempt from the no-repeat rule

    void validate() const;
};

/// Ids of the vocabulary entries that are stopwords.
std::unordered_set<int> stopword_ids(const text::Vocabulary& vocab, const text::StopwordSet& stopwords);

/// Source of next-token logits for a bos-framed prefix.
class StepModel {
public:
    virtual ~StepModel() = default;
    virtual std::size_t vocab_size() const = 0;
    virtual std::vector<double> logits(const TokenSequence& prefix) = 0;
};

struct Hypothesis {
    TokenSequence tokens;  // bos ... eos
    double log_prob = 0.0;
    bool finished = false;
};

/// Which next tokens are legal after `prefix`: eos only once min_len tokens
/// have been emitted, no non-stopword repeated, only eos at max_len. pad and
/// bos are never legal.
std::vector<bool> allowed_tokens(const TokenSequence& prefix, std::size_t vocab_size, const DecodeConfig& config);

/// Beam search over raw log-probability sums (no length normalization).
/// Candidates are ranked by score, ties by token sequence ascending.
Hypothesis beam_search(StepModel& model, const DecodeConfig& config);

/// Highest-scoring legal token at each step, ties to the lower id.
Hypothesis greedy_search(StepModel& model, const DecodeConfig& config);

/// Enumerates every legal sequence and returns the global argmax (ties to
/// the lexicographically smallest). Throws when vocab^max_len exceeds `guard`.
Hypothesis exhaustive_search(StepModel& model, const DecodeConfig& config, double guard = 1e6);

/// Adapts a Captioner bound to one clip's memory, reusing decoder caches
/// across prefixes that share a parent.
class CaptionerStepper final : public StepModel {
public:
    CaptionerStepper(const model::Captioner& model, Tensor memory);
    std::size_t vocab_size() const override;
    std::vector<double> logits(const TokenSequence& prefix) override;

private:
    struct Entry {
        model::DecoderCache cache;
        std::vector<double> logits;
    };
    const model::Captioner& model_;
    Tensor memory_;
    std::map<TokenSequence, Entry> entries_;
};

/// Projects features, then beam-searches one caption.
Hypothesis decode_features(const model::Captioner& model, const Tensor& features, const DecodeConfig& config);

}  // namespace aac::decode
