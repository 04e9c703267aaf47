#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "aac/model.hpp"

namespace aac::synth {

enum class Intensity { soft, normal, loud };

std::string to_string(Intensity i);
Intensity intensity_from_string(std::string_view s);
double amplitude(Intensity i);

struct EventSpec {
    std::string name;
    std::vector<std::string> subjects;  // noun phrases, article included
    std::vector<std::string> verbs;
    std::vector<double> signature;      // [d_enc]
};

/// Event inventory with fixed feature signatures.
class EventGrammar {
public:
    /// The built-in 12-event inventory, signatures drawn from `seed`.
    static EventGrammar standard(std::size_t d_enc, std::uint64_t seed);

    EventGrammar(std::vector<EventSpec> events, std::size_t d_enc);

    const std::vector<EventSpec>& events() const noexcept { return events_; }
    std::size_t size() const noexcept { return events_.size(); }
    std::size_t d_enc() const noexcept { return d_enc_; }
    std::size_t index_of(std::string_view name) const;

    /// Adverbs used for soft and loud events (none for normal).
    static const std::vector<std::string>& adverbs(Intensity i);
    static const std::vector<std::string>& conjunctions();

    /// Synonym groups for the sentence encoder: each event's subject head
    /// nouns share a group, as do its verbs and each intensity's adverbs.
    model::LexicalGroups lexical_groups() const;

private:
    std::vector<EventSpec> events_;
    std::size_t d_enc_;
};

struct ActiveEvent {
    std::size_t event = 0;
    std::size_t start = 0;  // frame span [start, end)
    std::size_t end = 0;
    Intensity intensity = Intensity::normal;
    friend bool operator==(const ActiveEvent&, const ActiveEvent&) = default;
};

struct CaptionedClip {
    std::string id;
    std::size_t frames = 0;
    std::size_t d_enc = 0;
    std::vector<double> features;  // row-major [frames × d_enc]
    std::vector<std::string> captions;
    std::vector<ActiveEvent> events;  // ordered by start frame

    Tensor feature_tensor() const;
    friend bool operator==(const CaptionedClip&, const CaptionedClip&) = default;
};

struct SplitOptions {
    std::size_t n_clips = 1;
    std::size_t refs_per_clip = 1;  // 1 or 5
    double noise_sigma = 0.0;
    std::size_t frames = 31;
    std::string id_prefix = "clip";
};

/// Deterministic in (grammar, seed, options). Each clip has 1-3 distinct
/// events; clip i draws from its own stream so clips are independent.
std::vector<CaptionedClip> generate_split(const EventGrammar& grammar, std::uint64_t seed, const SplitOptions& options);

/// One caption for `events`, realized with synonym choices drawn from `rng`.
std::string realize_caption(const EventGrammar& grammar, const std::vector<ActiveEvent>& events, Rng& rng);

struct CorpusConfig {
    std::uint64_t seed = 7;
    std::size_t n_train = 512;
    std::size_t n_val = 64;
    std::size_t n_test = 64;
    std::size_t train_refs = 1;
    std::size_t eval_refs = 5;
    double noise_sigma = 1.0;
    std::size_t frames = 31;
    std::size_t d_enc = 64;
};

struct Corpus {
    std::vector<CaptionedClip> train, val, test;
};

/// Train, val and test splits on independent streams of `config.seed`, all
/// over EventGrammar::standard(config.d_enc, config.seed).
Corpus generate_corpus(const CorpusConfig& config);

struct DatasetStats {
    std::size_t n_clips = 0;
    std::size_t n_captions = 0;
    std::size_t vocab_size = 0;  // word vocabulary, reserved entries excluded
    std::map<std::size_t, std::size_t> caption_lengths;  // words → count
    std::map<std::string, std::size_t> event_counts;

    nlohmann::json to_json() const;
};

DatasetStats dataset_stats(const std::vector<CaptionedClip>& clips, const EventGrammar& grammar);

/// Every caption in the split, in clip order.
std::vector<std::string> all_captions(const std::vector<CaptionedClip>& clips);

// ---- persistence ----------------------------------------------------------
// Features: "AACFEAT\0", u32 version, u64 n_clips, u64 frames, u64 d_enc, then
// n_clips*frames*d_enc little-endian f64. Captions: one JSON object per line
// with id, captions and events, in the same clip order.

void write_features(const std::filesystem::path& path, const std::vector<CaptionedClip>& clips);
void write_captions(const std::filesystem::path& path, const std::vector<CaptionedClip>& clips,
                    const EventGrammar& grammar);
std::vector<CaptionedClip> read_split(const std::filesystem::path& features, const std::filesystem::path& captions,
                                      const EventGrammar& grammar);

/// Writes <dir>/{train,val,test}.{features.bin,captions.jsonl}.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus, const EventGrammar& grammar);
Corpus load_corpus(const std::filesystem::path& dir, const EventGrammar& grammar);

// ---- learnability ---------------------------------------------------------

struct ProbeResult {
    double event_accuracy = 0.0;  // per (clip, event) presence decisions
    double exact_set_accuracy = 0.0;
};

/// One logistic-regression detector per event on time-averaged features,
/// fit on `train` and scored on `test`.
ProbeResult linear_probe(const std::vector<CaptionedClip>& train, const std::vector<CaptionedClip>& test,
                         std::size_t n_events, std::size_t iterations = 400, double lr = 1.0);

}  // namespace aac::synth
