#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "aac/model.hpp"

namespace aac::metrics {

struct EvalItem {
    std::string candidate;
    std::vector<std::string> references;
};

struct CorpusScore {
    double score = 0.0;
    std::vector<double> per_item;
};

/// CIDEr-D with n = 1..4, sigma = 6 and x10 scaling. Candidate n-gram weights
/// are clipped by each reference's; document frequencies count the items
/// whose references contain the n-gram. Texts go through normalize() and a
/// whitespace split first.
CorpusScore cider_d(const std::vector<EvalItem>& items);

/// Per-item and corpus mean of (cider + spice) / 2.
CorpusScore spider(const CorpusScore& cider, const std::vector<double>& spice);

/// One score per line. Throws when the file is missing or malformed.
std::vector<double> load_spice_scores(const std::filesystem::path& path);

enum class RefAggregation { mean, max };

std::string to_string(RefAggregation a);
RefAggregation ref_aggregation_from_string(std::string_view s);

/// Cosine between the candidate's sentence embedding and each reference's,
/// aggregated over references.
CorpusScore sbert_similarity(const std::vector<EvalItem>& items, const model::SentenceEncoder& encoder,
                             RefAggregation aggregation = RefAggregation::mean);

struct FluencyLexicon {
    std::unordered_set<std::string> verbs, adverbs, conjunctions, prepositions, articles, stopwords;

    /// The word lists bundled with the library.
    static const FluencyLexicon& bundled();
};

struct FluencyFlags {
    bool incomplete = false;
    bool repeated_event = false;
    bool repeated_adverb = false;
    bool missing_conjunction = false;
    bool missing_verb = false;

    bool any() const noexcept {
        return incomplete || repeated_event || repeated_adverb || missing_conjunction || missing_verb;
    }
    std::vector<std::string> names() const;
};

/// Rule-based fluency checks on one caption:
///  - incomplete: fewer than 3 words, or ends in a conjunction, preposition or article
///  - repeated_event: a bigram of two non-stopwords occurs twice
///  - repeated_adverb: the same adverb recurs within the next 3 words
///  - missing_verb: no word from the verb list
///  - missing_conjunction: an article sits between two verbs with no conjunction between them
FluencyFlags fluency_errors(std::string_view caption, const FluencyLexicon& lexicon = FluencyLexicon::bundled());

/// sbert per item, divided by 10 where any fluency flag fires.
CorpusScore fense(const CorpusScore& sbert, const std::vector<FluencyFlags>& flags);

/// Size of the union of candidate words.
std::size_t unique_words(const std::vector<std::string>& candidates);

struct ItemScores {
    double cider_d = 0.0;
    std::optional<double> spice, spider;
    double sbert = 0.0;
    double fense = 0.0;
    FluencyFlags flags;
};

struct MetricReport {
    std::size_t n_items = 0;
    double cider_d = 0.0;
    std::optional<double> spice, spider;
    double sbert = 0.0;
    double flu_err = 0.0;
    double fense = 0.0;
    double n_words = 0.0;  // fractional when averaged over folds or seeds
    std::vector<ItemScores> items;

    /// Numbers rounded to 6 decimal places.
    nlohmann::json to_json(bool with_items = true) const;
};

struct EvaluateOptions {
    RefAggregation aggregation = RefAggregation::mean;
    std::optional<std::vector<double>> spice;  // per item, same order
};

MetricReport evaluate(const std::vector<EvalItem>& items, const model::SentenceEncoder& encoder,
                      const EvaluateOptions& options = {});

struct CrossReferenceResult {
    MetricReport report;  // mean over the folds, per-item breakdown omitted
    std::vector<MetricReport> folds;
    std::size_t excluded = 0;  // items without exactly 5 references
};

/// Leave-one-out agreement among references: fold i scores reference i of
/// every item against the other four.
CrossReferenceResult cross_reference(const std::vector<EvalItem>& items, const model::SentenceEncoder& encoder,
                                     RefAggregation aggregation = RefAggregation::mean);

/// Candidate/reference pairs built for fold `fold` of cross_reference.
std::vector<EvalItem> cross_reference_fold(const std::vector<EvalItem>& items, std::size_t fold);

/// Field-wise mean of reports (items dropped). spice/spider kept only when
/// present in every report.
MetricReport average_reports(const std::vector<MetricReport>& reports);

double round6(double x);

}  // namespace aac::metrics
