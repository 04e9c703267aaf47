#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace aac::text {

/// Lowercases, erases every Unicode punctuation character, collapses
/// whitespace runs and trims.
std::string normalize(std::string_view caption);

std::vector<std::string> split_words(std::string_view text);

/// Splits UTF-8 text into code points, each returned as its byte sequence.
std::vector<std::string> utf8_chars(std::string_view text);

using TokenSequence = std::vector<int>;

enum class VocabKind { word, subword };

std::string to_string(VocabKind kind);
VocabKind vocab_kind_from_string(std::string_view s);

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr std::string_view kContinuationPrefix = "##";

class Vocabulary {
public:
    Vocabulary() = default;
    /// `tokens` excludes the four reserved entries, which are always ids 0..3.
    Vocabulary(VocabKind kind, const std::vector<std::string>& tokens);

    VocabKind kind() const noexcept { return kind_; }
    std::size_t size() const noexcept { return tokens_.size(); }
    int id(std::string_view token) const;  // kUnk when absent
    bool contains(std::string_view token) const;
    const std::string& token(int id) const;
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    std::string serialize() const;
    static Vocabulary parse(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.kind_ == b.kind_ && a.tokens_ == b.tokens_;
    }

private:
    VocabKind kind_ = VocabKind::word;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct VocabOptions {
    VocabKind kind = VocabKind::word;
    std::size_t min_count = 1;
    std::size_t subword_size = 512;  // target size including reserved tokens
};

/// Builds a vocabulary from normalized captions. Word vocabularies are ordered
/// by frequency (descending) then lexicographically; subword vocabularies are
/// learned with WordPiece-style pair merges and ordered the same way by piece
/// frequency under the learned segmentation.
Vocabulary build_vocab(const std::vector<std::string>& corpus, const VocabOptions& options);

/// Greedy longest-match segmentation of one word. Continuation pieces carry
/// the "##" prefix. A word with no complete segmentation maps to unk.
std::vector<int> wordpiece_segment(const Vocabulary& vocab, std::string_view word);

/// Encodes normalized text and frames it with bos/eos. Dispatches on the
/// vocabulary kind.
TokenSequence encode(const Vocabulary& vocab, std::string_view text);
TokenSequence word_tokenize(const Vocabulary& vocab, std::string_view text);
TokenSequence subword_tokenize(const Vocabulary& vocab, std::string_view text);

/// Inverse of encode. Reserved framing ids are dropped, unk renders as "<unk>".
std::string decode(const Vocabulary& vocab, const TokenSequence& ids);
std::string word_detokenize(const Vocabulary& vocab, const TokenSequence& ids);
std::string subword_detokenize(const Vocabulary& vocab, const TokenSequence& ids);

class StopwordSet {
public:
    StopwordSet() = default;
    explicit StopwordSet(std::unordered_set<std::string> words);

    /// The bundled English list.
    static StopwordSet english();
    static StopwordSet load(const std::filesystem::path& path);
    static StopwordSet parse(std::string_view text);

    bool contains(std::string_view word) const { return words_.contains(std::string(word)); }
    std::size_t size() const noexcept { return words_.size(); }
    const std::unordered_set<std::string>& words() const noexcept { return words_; }

private:
    std::unordered_set<std::string> words_;
};

/// One-entry-per-line word list; blank lines and '#' comments are skipped.
std::vector<std::string> parse_word_list(std::string_view text);

}  // namespace aac::text
