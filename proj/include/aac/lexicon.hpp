#pragma once

#include <string_view>

namespace aac::lexicon {

// Word lists compiled in from data/. Each is one entry per line.
std::string_view stopwords_english();
std::string_view verbs();
std::string_view adverbs();
std::string_view conjunctions();
std::string_view prepositions();
std::string_view articles();

}  // namespace aac::lexicon
