#include "aac/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "aac/lexicon.hpp"

namespace aac::metrics {

namespace {

using Words = std::vector<std::string>;
using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, double>;

constexpr std::size_t kMaxN = 4;
constexpr double kSigma = 6.0;

Words words_of(std::string_view s) { return text::split_words(text::normalize(s)); }

// counts[n-1] holds the n-grams of order n.
std::array<NgramCounts, kMaxN> ngram_counts(const Words& w) {
    std::array<NgramCounts, kMaxN> out;
    for (std::size_t n = 1; n <= kMaxN; ++n)
        for (std::size_t i = 0; i + n <= w.size(); ++i) out[n - 1][Ngram(w.begin() + static_cast<std::ptrdiff_t>(i), w.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
    return out;
}

struct TfIdf {
    std::array<NgramCounts, kMaxN> vec;
    std::array<double, kMaxN> norm{};
    double length = 0.0;
};

TfIdf weigh(const Words& w, const std::map<Ngram, double>& df, double log_n) {
    TfIdf t;
    t.vec = ngram_counts(w);
    t.length = static_cast<double>(w.size());
    for (std::size_t n = 0; n < kMaxN; ++n) {
        double sq = 0.0;
        for (auto& [g, tf] : t.vec[n]) {
            auto it = df.find(g);
            const double d = it == df.end() ? 0.0 : it->second;
            tf *= log_n - std::log(std::max(1.0, d));
            sq += tf * tf;
        }
        t.norm[n] = sq;  // squared; the square root is taken jointly below
    }
    return t;
}

double cider_pair(const TfIdf& cand, const TfIdf& ref) {
    const double delta = cand.length - ref.length;
    const double penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
    double total = 0.0;
    for (std::size_t n = 0; n < kMaxN; ++n) {
        double dot = 0.0;
        for (const auto& [g, v] : cand.vec[n]) {
            auto it = ref.vec[n].find(g);
            if (it != ref.vec[n].end()) dot += std::min(v, it->second) * it->second;
        }
        double val = 0.0;
        if (cand.norm[n] != 0.0 && ref.norm[n] != 0.0) val = dot / std::sqrt(cand.norm[n] * ref.norm[n]);
        total += val * penalty;
    }
    return total / static_cast<double>(kMaxN);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return d / std::sqrt(na * nb);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::unordered_set<std::string> word_set(std::string_view list) {
    auto words = text::parse_word_list(list);
    std::unordered_set<std::string> out;
    for (const auto& w : words) out.insert(text::normalize(w));
    return out;
}

}  // namespace

CorpusScore cider_d(const std::vector<EvalItem>& items) {
    std::map<Ngram, double> df;
    std::vector<std::vector<Words>> refs(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].references.empty()) throw std::invalid_argument("cider_d: item " + std::to_string(i) + " has no references");
        std::set<Ngram> seen;
        for (const auto& r : items[i].references) {
            refs[i].push_back(words_of(r));
            for (const auto& order : ngram_counts(refs[i].back()))
                for (const auto& [g, _] : order) seen.insert(g);
        }
        for (const auto& g : seen) df[g] += 1.0;
    }
    const double log_n = std::log(static_cast<double>(items.size()));
    CorpusScore out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const TfIdf cand = weigh(words_of(items[i].candidate), df, log_n);
        double s = 0.0;
        for (const auto& r : refs[i]) s += cider_pair(cand, weigh(r, df, log_n));
        out.per_item.push_back(10.0 * s / static_cast<double>(refs[i].size()));
    }
    out.score = mean_of(out.per_item);
    return out;
}

CorpusScore spider(const CorpusScore& cider, const std::vector<double>& spice) {
    if (spice.size() != cider.per_item.size())
        throw std::invalid_argument("spider: " + std::to_string(spice.size()) + " SPICE scores for " +
                                    std::to_string(cider.per_item.size()) + " items");
    CorpusScore out;
    for (std::size_t i = 0; i < spice.size(); ++i) out.per_item.push_back((cider.per_item[i] + spice[i]) / 2.0);
    out.score = mean_of(out.per_item);
    return out;
}

std::vector<double> load_spice_scores(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read SPICE scores from " + path.string());
    std::vector<double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(line, &used);
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": not a number");
        }
        if (line.find_first_not_of(" \t\r", used) != std::string::npos)
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": trailing characters");
        out.push_back(v);
    }
    return out;
}

std::string to_string(RefAggregation a) { return a == RefAggregation::mean ? "mean" : "max"; }

RefAggregation ref_aggregation_from_string(std::string_view s) {
    if (s == "mean") return RefAggregation::mean;
    if (s == "max") return RefAggregation::max;
    throw std::invalid_argument("unknown reference aggregation '" + std::string(s) + "'");
}

CorpusScore sbert_similarity(const std::vector<EvalItem>& items, const model::SentenceEncoder& encoder,
                             RefAggregation aggregation) {
    std::map<std::string, std::vector<double>> memo;
    auto embed = [&](const std::string& s) -> const std::vector<double>& {
        const auto key = text::normalize(s);
        auto it = memo.find(key);
        if (it == memo.end()) it = memo.emplace(key, encoder.embed_text(key)).first;
        return it->second;
    };
    CorpusScore out;
    for (const auto& item : items) {
        if (item.references.empty()) throw std::invalid_argument("sbert_similarity: item without references");
        const auto cand = embed(item.candidate);
        std::vector<double> sims;
        for (const auto& r : item.references) sims.push_back(cosine(cand, embed(r)));
        out.per_item.push_back(aggregation == RefAggregation::mean ? mean_of(sims)
                                                                   : *std::max_element(sims.begin(), sims.end()));
    }
    out.score = mean_of(out.per_item);
    return out;
}

const FluencyLexicon& FluencyLexicon::bundled() {
    static const FluencyLexicon lex = [] {
        FluencyLexicon l;
        l.verbs = word_set(lexicon::verbs());
        l.adverbs = word_set(lexicon::adverbs());
        l.conjunctions = word_set(lexicon::conjunctions());
        l.prepositions = word_set(lexicon::prepositions());
        l.articles = word_set(lexicon::articles());
        l.stopwords = word_set(lexicon::stopwords_english());
        return l;
    }();
    return lex;
}

std::vector<std::string> FluencyFlags::names() const {
    std::vector<std::string> out;
    if (incomplete) out.emplace_back("incomplete_sentence");
    if (repeated_event) out.emplace_back("repeated_event");
    if (repeated_adverb) out.emplace_back("repeated_adverb");
    if (missing_conjunction) out.emplace_back("missing_conjunction");
    if (missing_verb) out.emplace_back("missing_verb");
    return out;
}

FluencyFlags fluency_errors(std::string_view caption, const FluencyLexicon& lex) {
    const Words w = words_of(caption);
    FluencyFlags f;
    f.incomplete = w.size() < 3 || lex.conjunctions.contains(w.back()) || lex.prepositions.contains(w.back()) ||
                   lex.articles.contains(w.back());

    std::map<std::pair<std::string, std::string>, int> bigrams;
    for (std::size_t i = 0; i + 1 < w.size(); ++i)
        if (!lex.stopwords.contains(w[i]) && !lex.stopwords.contains(w[i + 1]))
            if (++bigrams[{w[i], w[i + 1]}] >= 2) f.repeated_event = true;

    for (std::size_t i = 0; i < w.size(); ++i)
        if (lex.adverbs.contains(w[i]))
            for (std::size_t j = i + 1; j < w.size() && j <= i + 3; ++j)
                if (w[j] == w[i]) f.repeated_adverb = true;

    std::vector<std::size_t> verbs;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (lex.verbs.contains(w[i])) verbs.push_back(i);
    f.missing_verb = verbs.empty();

    for (std::size_t k = 0; k + 1 < verbs.size(); ++k) {
        bool article = false, conjunction = false;
        for (std::size_t i = verbs[k] + 1; i < verbs[k + 1]; ++i) {
            article |= lex.articles.contains(w[i]);
            conjunction |= lex.conjunctions.contains(w[i]);
        }
        if (article && !conjunction) f.missing_conjunction = true;
    }
    return f;
}

CorpusScore fense(const CorpusScore& sbert, const std::vector<FluencyFlags>& flags) {
    if (flags.size() != sbert.per_item.size()) throw std::invalid_argument("fense: flag count does not match items");
    CorpusScore out;
    for (std::size_t i = 0; i < flags.size(); ++i)
        out.per_item.push_back(flags[i].any() ? sbert.per_item[i] / 10.0 : sbert.per_item[i]);
    out.score = mean_of(out.per_item);
    return out;
}

std::size_t unique_words(const std::vector<std::string>& candidates) {
    std::unordered_set<std::string> vocab;
    for (const auto& c : candidates)
        for (auto& w : words_of(c)) vocab.insert(std::move(w));
    return vocab.size();
}

double round6(double x) { return std::round(x * 1e6) / 1e6; }

nlohmann::json MetricReport::to_json(bool with_items) const {
    nlohmann::json j;
    j["n_items"] = n_items;
    j["cider_d"] = round6(cider_d);
    if (spice) j["spice"] = round6(*spice);
    if (spider) j["spider"] = round6(*spider);
    j["sbert"] = round6(sbert);
    j["flu_err"] = round6(flu_err);
    j["fense"] = round6(fense);
    j["n_words"] = round6(n_words);
    if (with_items) {
        auto arr = nlohmann::json::array();
        for (const auto& it : items) {
            nlohmann::json e;
            e["cider_d"] = round6(it.cider_d);
            if (it.spice) e["spice"] = round6(*it.spice);
            if (it.spider) e["spider"] = round6(*it.spider);
            e["sbert"] = round6(it.sbert);
            e["fense"] = round6(it.fense);
            e["fluency_errors"] = it.flags.names();
            arr.push_back(std::move(e));
        }
        j["items"] = std::move(arr);
    }
    return j;
}

MetricReport evaluate(const std::vector<EvalItem>& items, const model::SentenceEncoder& encoder,
                      const EvaluateOptions& options) {
    if (items.empty()) throw std::invalid_argument("evaluate: no items");
    MetricReport r;
    r.n_items = items.size();
    const auto cider = cider_d(items);
    const auto sbert = sbert_similarity(items, encoder, options.aggregation);
    std::vector<FluencyFlags> flags;
    std::vector<std::string> candidates;
    for (const auto& it : items) {
        flags.push_back(fluency_errors(it.candidate));
        candidates.push_back(it.candidate);
    }
    const auto fen = fense(sbert, flags);
    std::optional<CorpusScore> spi;
    if (options.spice) spi = spider(cider, *options.spice);

    r.cider_d = cider.score;
    r.sbert = sbert.score;
    r.fense = fen.score;
    r.n_words = static_cast<double>(unique_words(candidates));
    std::size_t flagged = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        ItemScores s;
        s.cider_d = cider.per_item[i];
        s.sbert = sbert.per_item[i];
        s.fense = fen.per_item[i];
        s.flags = flags[i];
        if (spi) {
            s.spice = (*options.spice)[i];
            s.spider = spi->per_item[i];
        }
        flagged += flags[i].any();
        r.items.push_back(std::move(s));
    }
    r.flu_err = static_cast<double>(flagged) / static_cast<double>(items.size());
    if (spi) {
        r.spice = mean_of(*options.spice);
        r.spider = spi->score;
    }
    return r;
}

std::vector<EvalItem> cross_reference_fold(const std::vector<EvalItem>& items, std::size_t fold) {
    std::vector<EvalItem> out;
    for (const auto& it : items) {
        if (it.references.size() != 5) continue;
        EvalItem e;
        e.candidate = it.references.at(fold);
        for (std::size_t k = 0; k < 5; ++k)
            if (k != fold) e.references.push_back(it.references[k]);
        out.push_back(std::move(e));
    }
    return out;
}

CrossReferenceResult cross_reference(const std::vector<EvalItem>& items, const model::SentenceEncoder& encoder,
                                     RefAggregation aggregation) {
    CrossReferenceResult res;
    for (const auto& it : items) res.excluded += it.references.size() != 5;
    if (res.excluded > 0)
        std::cerr << "warning: cross_reference skips " << res.excluded << " item(s) without exactly 5 references\n";
    EvaluateOptions opt;
    opt.aggregation = aggregation;
    for (std::size_t fold = 0; fold < 5; ++fold) res.folds.push_back(evaluate(cross_reference_fold(items, fold), encoder, opt));
    res.report = average_reports(res.folds);
    return res;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("average_reports: nothing to average");
    MetricReport m;
    const double k = static_cast<double>(reports.size());
    bool all_spice = true;
    for (const auto& r : reports) {
        m.cider_d += r.cider_d / k;
        m.sbert += r.sbert / k;
        m.flu_err += r.flu_err / k;
        m.fense += r.fense / k;
        m.n_words += r.n_words / k;
        all_spice &= r.spice.has_value() && r.spider.has_value();
    }
    m.n_items = reports.front().n_items;
    if (all_spice) {
        m.spice = 0.0;
        m.spider = 0.0;
        for (const auto& r : reports) {
            *m.spice += *r.spice / k;
            *m.spider += *r.spider / k;
        }
    }
    return m;
}

}  // namespace aac::metrics
