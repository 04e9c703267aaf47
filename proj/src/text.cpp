#include "aac/text.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "aac/lexicon.hpp"

namespace aac::text {

namespace {

#include "unicode_tables.inc"

constexpr std::string_view kReserved[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

// Decodes one code point starting at s[i]; malformed bytes decode as themselves.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = b0;
    if (b0 >= 0xF0 && b0 < 0xF8) {
        len = 4;
        cp = b0 & 0x07;
    } else if (b0 >= 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if (b0 >= 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    }
    if (len > 1) {
        if (i + len > s.size()) {
            ++i;
            return b0;
        }
        for (std::size_t k = 1; k < len; ++k) {
            const auto bk = static_cast<unsigned char>(s[i + k]);
            if ((bk & 0xC0) != 0x80) {
                ++i;
                return b0;
            }
            cp = (cp << 6) | (bk & 0x3F);
        }
    }
    i += len;
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_punctuation(char32_t cp) {
    auto it = std::upper_bound(std::begin(kPunctuationRanges), std::end(kPunctuationRanges), cp,
                               [](char32_t v, const auto& r) { return v < r.first; });
    if (it == std::begin(kPunctuationRanges)) return false;
    --it;
    return cp <= it->second;
}

char32_t to_lower(char32_t cp) {
    if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
    auto it = std::lower_bound(std::begin(kLowercaseMap), std::end(kLowercaseMap), cp,
                               [](const auto& e, char32_t v) { return e.first < v; });
    return (it != std::end(kLowercaseMap) && it->first == cp) ? it->second : cp;
}

bool is_space(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f';
}

bool starts_with_continuation(std::string_view piece) { return piece.starts_with(kContinuationPrefix); }

}  // namespace

std::string normalize(std::string_view caption) {
    std::string out;
    out.reserve(caption.size());
    bool pending_space = false;
    std::size_t i = 0;
    while (i < caption.size()) {
        const char32_t cp = next_code_point(caption, i);
        if (is_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (is_punctuation(cp)) continue;
        if (pending_space) out.push_back(' ');
        pending_space = false;
        append_utf8(out, to_lower(cp));
    }
    return out;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::istringstream in{std::string(text)};
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

std::vector<std::string> utf8_chars(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t start = i;
        next_code_point(text, i);
        out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

std::string to_string(VocabKind kind) { return kind == VocabKind::word ? "word" : "subword"; }

VocabKind vocab_kind_from_string(std::string_view s) {
    if (s == "word") return VocabKind::word;
    if (s == "subword") return VocabKind::subword;
    throw std::invalid_argument("unknown vocabulary kind '" + std::string(s) + "'");
}

// ---- Vocabulary -----------------------------------------------------------

Vocabulary::Vocabulary(VocabKind kind, const std::vector<std::string>& tokens) : kind_(kind) {
    tokens_.assign(std::begin(kReserved), std::end(kReserved));
    for (const auto& t : tokens) {
        if (t.empty()) throw std::invalid_argument("vocabulary: empty token");
        if (std::find(std::begin(kReserved), std::end(kReserved), t) != std::end(kReserved))
            throw std::invalid_argument("vocabulary: reserved token '" + t + "' listed explicitly");
        if (!index_.emplace(t, static_cast<int>(tokens_.size())).second)
            throw std::invalid_argument("vocabulary: duplicate token '" + t + "'");
        tokens_.push_back(t);
    }
    if (tokens_.size() < 5) throw std::invalid_argument("vocabulary: needs at least one non-reserved token");
}

int Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::serialize() const {
    std::string out = "#vocab kind=" + to_string(kind_) + " pad=0 bos=1 eos=2 unk=3\n";
    for (const auto& t : tokens_) out += t + "\n";
    return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string header;
    if (!std::getline(in, header) || !header.starts_with("#vocab "))
        throw std::runtime_error("vocabulary file: missing '#vocab' header");
    const auto kpos = header.find("kind=");
    if (kpos == std::string::npos) throw std::runtime_error("vocabulary file: header lacks kind=");
    const auto kend = header.find(' ', kpos);
    const VocabKind kind = vocab_kind_from_string(header.substr(kpos + 5, kend - kpos - 5));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    if (lines.size() < 4) throw std::runtime_error("vocabulary file: fewer than 4 entries");
    for (std::size_t i = 0; i < 4; ++i)
        if (lines[i] != kReserved[i]) throw std::runtime_error("vocabulary file: reserved entries out of place");
    return Vocabulary(kind, std::vector<std::string>(lines.begin() + 4, lines.end()));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

// ---- vocabulary construction ----------------------------------------------

namespace {

std::vector<std::string> order_by_frequency(const std::map<std::string, std::size_t>& counts) {
    std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    out.reserve(items.size());
    for (auto& [tok, _] : items) out.push_back(tok);
    return out;
}

std::string strip_continuation(const std::string& piece) {
    return starts_with_continuation(piece) ? piece.substr(kContinuationPrefix.size()) : piece;
}

std::vector<std::string> learn_wordpieces(const std::map<std::string, std::size_t>& word_counts, std::size_t target) {
    std::map<std::string, std::vector<std::string>> segs;
    std::map<std::string, bool> pieces;  // ordered set
    for (const auto& [word, _] : word_counts) {
        auto chars = utf8_chars(word);
        std::vector<std::string> seg;
        for (std::size_t i = 0; i < chars.size(); ++i) {
            seg.push_back(i == 0 ? chars[i] : std::string(kContinuationPrefix) + chars[i]);
            pieces[seg.back()] = true;
        }
        segs[word] = std::move(seg);
    }
    const std::size_t reserved = std::size(kReserved);
    while (reserved + pieces.size() < target) {
        std::map<std::string, std::size_t> piece_freq;
        std::map<std::pair<std::string, std::string>, std::size_t> pair_freq;
        for (const auto& [word, seg] : segs) {
            const std::size_t c = word_counts.at(word);
            for (std::size_t i = 0; i < seg.size(); ++i) {
                piece_freq[seg[i]] += c;
                if (i + 1 < seg.size()) pair_freq[{seg[i], seg[i + 1]}] += c;
            }
        }
        if (pair_freq.empty()) break;
        const std::pair<std::string, std::string>* best = nullptr;
        double best_score = -1.0;
        std::size_t best_freq = 0;
        std::string best_merged;
        for (const auto& [pair, f] : pair_freq) {
            const double score = static_cast<double>(f) /
                                 (static_cast<double>(piece_freq[pair.first]) * static_cast<double>(piece_freq[pair.second]));
            std::string merged = pair.first + strip_continuation(pair.second);
            const bool better = score > best_score || (score == best_score && f > best_freq) ||
                                (score == best_score && f == best_freq && merged < best_merged);
            if (better) {
                best = &pair;
                best_score = score;
                best_freq = f;
                best_merged = std::move(merged);
            }
        }
        const auto [left, right] = *best;
        pieces[best_merged] = true;
        for (auto& [word, seg] : segs) {
            std::vector<std::string> next;
            next.reserve(seg.size());
            for (std::size_t i = 0; i < seg.size(); ++i) {
                if (i + 1 < seg.size() && seg[i] == left && seg[i + 1] == right) {
                    next.push_back(best_merged);
                    ++i;
                } else {
                    next.push_back(seg[i]);
                }
            }
            seg = std::move(next);
        }
    }
    std::vector<std::string> out;
    for (const auto& [p, _] : pieces) out.push_back(p);
    return out;
}

}  // namespace

Vocabulary build_vocab(const std::vector<std::string>& corpus, const VocabOptions& options) {
    std::map<std::string, std::size_t> counts;
    for (const auto& caption : corpus)
        for (auto& w : split_words(caption)) ++counts[w];
    if (counts.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    std::erase_if(counts, [&](const auto& kv) { return kv.second < options.min_count; });
    if (counts.empty()) throw std::invalid_argument("build_vocab: no word reaches min_count");

    if (options.kind == VocabKind::word) return Vocabulary(VocabKind::word, order_by_frequency(counts));

    const auto pieces = learn_wordpieces(counts, options.subword_size);
    // Order pieces by how often the greedy segmenter emits them.
    const Vocabulary provisional(VocabKind::subword, pieces);
    std::map<std::string, std::size_t> piece_counts;
    for (const auto& p : pieces) piece_counts[p] = 0;
    for (const auto& [word, c] : counts)
        for (int id : wordpiece_segment(provisional, word)) piece_counts[provisional.token(id)] += c;
    std::erase_if(piece_counts, [](const auto& kv) { return kv.first == "<unk>"; });
    return Vocabulary(VocabKind::subword, order_by_frequency(piece_counts));
}

std::vector<int> wordpiece_segment(const Vocabulary& vocab, std::string_view word) {
    const auto chars = utf8_chars(word);
    std::vector<int> out;
    std::size_t start = 0;
    while (start < chars.size()) {
        std::size_t end = chars.size();
        int found = -1;
        while (end > start) {
            std::string sub = start > 0 ? std::string(kContinuationPrefix) : std::string();
            for (std::size_t k = start; k < end; ++k) sub += chars[k];
            if (vocab.contains(sub)) {
                found = vocab.id(sub);
                break;
            }
            --end;
        }
        if (found < 0) return {kUnk};
        out.push_back(found);
        start = end;
    }
    return out;
}

TokenSequence word_tokenize(const Vocabulary& vocab, std::string_view text) {
    TokenSequence ids{kBos};
    for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
    ids.push_back(kEos);
    return ids;
}

TokenSequence subword_tokenize(const Vocabulary& vocab, std::string_view text) {
    TokenSequence ids{kBos};
    for (const auto& w : split_words(text)) {
        auto pieces = wordpiece_segment(vocab, w);
        ids.insert(ids.end(), pieces.begin(), pieces.end());
    }
    ids.push_back(kEos);
    return ids;
}

TokenSequence encode(const Vocabulary& vocab, std::string_view text) {
    return vocab.kind() == VocabKind::word ? word_tokenize(vocab, text) : subword_tokenize(vocab, text);
}

std::string word_detokenize(const Vocabulary& vocab, const TokenSequence& ids) {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        if (!out.empty()) out.push_back(' ');
        out += vocab.token(id);
    }
    return out;
}

std::string subword_detokenize(const Vocabulary& vocab, const TokenSequence& ids) {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        const std::string& piece = vocab.token(id);
        if (starts_with_continuation(piece) && !out.empty()) {
            out += piece.substr(kContinuationPrefix.size());
        } else {
            if (!out.empty()) out.push_back(' ');
            out += piece;
        }
    }
    return out;
}

std::string decode(const Vocabulary& vocab, const TokenSequence& ids) {
    return vocab.kind() == VocabKind::word ? word_detokenize(vocab, ids) : subword_detokenize(vocab, ids);
}

// ---- stopwords ------------------------------------------------------------

std::vector<std::string> parse_word_list(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        out.push_back(line.substr(first));
    }
    return out;
}

StopwordSet::StopwordSet(std::unordered_set<std::string> words) : words_(std::move(words)) {
    if (words_.empty()) throw std::invalid_argument("stopword set must not be empty");
    for (const auto& w : words_)
        for (char c : w)
            if (c >= 'A' && c <= 'Z') throw std::invalid_argument("stopword '" + w + "' is not lowercase");
}

StopwordSet StopwordSet::parse(std::string_view text) {
    auto list = parse_word_list(text);
    return StopwordSet(std::unordered_set<std::string>(list.begin(), list.end()));
}

StopwordSet StopwordSet::english() { return parse(lexicon::stopwords_english()); }

StopwordSet StopwordSet::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read stopword file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

}  // namespace aac::text
