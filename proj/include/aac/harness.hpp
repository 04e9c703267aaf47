#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "aac/checkpoint.hpp"
#include "aac/config.hpp"
#include "aac/metrics.hpp"

namespace aac::harness {

/// Data, vocabularies and the frozen sentence encoder shared by every run of
/// one configuration.
struct Experiment {
    ExperimentConfig config;
    synth::EventGrammar grammar;
    synth::Corpus corpus;
    text::Vocabulary vocab;       // decoder
    text::Vocabulary sent_vocab;  // sentence encoder (always subword)
    std::shared_ptr<const model::SentenceEncoder> encoder;
    decode::DecodeConfig decode;

    /// config.model with vocab_size and d_enc filled in.
    model::ModelConfig model_config() const;
};

/// Generates the corpus from config.data (or loads it from `corpus_dir`) and
/// builds the vocabularies.
Experiment prepare(const ExperimentConfig& config, const std::optional<std::filesystem::path>& corpus_dir = {});

/// Same corpus and sentence encoder, different run settings. The decoder
/// vocabulary is rebuilt when the tokenizer changes.
Experiment with_config(const Experiment& base, const ExperimentConfig& config);

/// Reproducible description of a run: every config value plus derived sizes
/// and hashes. Contains nothing machine- or time-dependent.
nlohmann::json manifest(const Experiment& exp);

struct TrainOptions {
    std::optional<std::filesystem::path> out_dir;  // last.ckpt, best.ckpt, curve.csv
    std::optional<Checkpoint> resume;              // continue from this state
    std::optional<std::size_t> stop_after;         // stop once this many epochs are done
    bool verbose = false;
};

struct TrainResult {
    LearningCurve curve;
    Checkpoint last;
    model::StateDict best_model;
    std::size_t best_epoch = 0;  // 1-based; 0 when no epoch was run
    double best_fense = 0.0;
    double final_decayed_norm = 0.0;
    double final_exempt_norm = 0.0;
    std::uint64_t encoder_hash_before = 0, encoder_hash_after = 0;
};

class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Teacher-forced training with per-epoch validation. Each epoch shuffles the
/// training pairs, steps AdamW per batch with the epoch's cosine learning
/// rate, then scores the validation split: CE on every reference, SBERT and
/// FENSE on beam-decoded captions. The model with the highest validation
/// FENSE is kept (earliest on ties). A non-finite loss or gradient throws
/// TrainingAborted after writing aborted.ckpt when out_dir is set.
TrainResult train(const Experiment& exp, const TrainOptions& options = {});

/// Mean token CE (label smoothing as configured) over every reference of
/// every clip, eval mode.
double mean_ce(const model::Captioner& model, const Experiment& exp, const std::vector<synth::CaptionedClip>& clips);

std::vector<std::string> decode_clips(const model::Captioner& model, const Experiment& exp,
                                      const std::vector<synth::CaptionedClip>& clips);

std::vector<metrics::EvalItem> eval_items(const std::vector<std::string>& candidates,
                                          const std::vector<synth::CaptionedClip>& clips);

/// Builds a captioner from a checkpoint's config, vocabulary and weights.
model::Captioner restore_model(const Checkpoint& ckpt, const Experiment& exp);

// ---- learning curves ------------------------------------------------------

void write_curve_csv(const std::filesystem::path& path, const LearningCurve& curve);
LearningCurve read_curve_csv(const std::filesystem::path& path);

struct CurveSeries {
    std::string label;
    std::string row;  // panel row, e.g. the weight-decay setting
    LearningCurve curve;
};

/// Long-format CSV: run,row,epoch,train_loss,val_ce,val_sbert,val_fense,lr.
std::string curves_csv(const std::vector<CurveSeries>& series);
/// Grid of line charts: one row per distinct `row`, columns val CE and val
/// SBERT cosine, one polyline per series.
std::string curves_svg(const std::vector<CurveSeries>& series);

// ---- ablation -------------------------------------------------------------

struct AblationCell {
    text::VocabKind tokenizer = text::VocabKind::word;
    double lambda = 0.0;
    double weight_decay = 0.0;
    std::string label;
    std::size_t seeds_ok = 0;
    std::vector<std::string> errors;
    metrics::MetricReport mean;  // over successful seeds, test split
    double final_decayed_norm = 0.0;
    double final_exempt_norm = 0.0;
    double ce_rise = 0.0;  // final val CE minus min val CE

    bool failed() const { return !errors.empty(); }
};

struct AblationReport {
    std::vector<AblationCell> cells;
    std::size_t n_seeds = 0;
    std::optional<metrics::MetricReport> cross_reference;

    nlohmann::json to_json() const;
    std::string to_markdown() const;
};

struct AblationOptions {
    std::vector<text::VocabKind> tokenizers{text::VocabKind::word, text::VocabKind::subword};
    std::vector<double> lambdas{0.0, 100.0};
    std::vector<double> weight_decays{1e-6, 2.0};
    std::size_t n_seeds = 5;
    std::optional<std::filesystem::path> out_dir;  // per-run curves
    bool verbose = false;
};

/// Trains every cell of tokenizer × lambda × weight decay for n_seeds seeds
/// on the shared corpus and scores each best checkpoint on the test split.
AblationReport run_ablation(const Experiment& base, const AblationOptions& options);

std::string cell_label(text::VocabKind tokenizer, double lambda);

}  // namespace aac::harness
