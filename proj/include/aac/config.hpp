#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "aac/decoding.hpp"
#include "aac/model.hpp"
#include "aac/objectives.hpp"
#include "aac/optim.hpp"
#include "aac/synth.hpp"
#include "aac/text.hpp"

namespace aac::harness {

struct TrainConfig {
    std::uint64_t seed = 1;
    std::size_t batch_size = 64;
    std::size_t n_seeds = 5;
    /// Validation clips used for the per-epoch SBERT/FENSE pass; 0 means all.
    std::size_t val_clips = 0;
};

struct ExperimentConfig {
    model::ModelConfig model;  // vocab_size and d_enc are filled from the data
    loss::LossConfig loss;
    optim::OptimConfig optim;
    std::size_t beam_size = 2;
    std::size_t min_len = 3;
    std::size_t max_len = 30;
    synth::CorpusConfig data;
    text::VocabKind tokenizer = text::VocabKind::word;
    std::size_t min_count = 1;
    std::size_t subword_size = 256;
    TrainConfig train;

    void validate() const;

    /// Decoder constraints; stopword ids are left for the caller to fill.
    decode::DecodeConfig decode_config() const;
};

/// Sectioned key → value text for every field, defaults included, in a fixed
/// order. Doubles are printed with enough digits to round-trip.
std::map<std::string, std::string> to_key_values(const ExperimentConfig& config);
std::string serialize(const ExperimentConfig& config);

/// Parses `key=value` lines. Keys are either dotted (`model.d_model=32`) or
/// bare under a `[model]` header. Blank lines and `#` comments are skipped.
/// Unknown keys and malformed values throw with the line number.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `section.key=value` assignment.
void set_value(ExperimentConfig& config, std::string_view key, std::string_view value);

}  // namespace aac::harness
