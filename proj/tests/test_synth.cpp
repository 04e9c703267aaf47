#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "aac/metrics.hpp"
#include "aac/synth.hpp"

using namespace aac;
using namespace aac::synth;

namespace {

SplitOptions opts(std::size_t n, std::size_t refs, double sigma) {
    SplitOptions o;
    o.n_clips = n;
    o.refs_per_clip = refs;
    o.noise_sigma = sigma;
    return o;
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("aac_synth_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Grammar, StandardInventory) {
    auto g = EventGrammar::standard(64, 3);
    EXPECT_EQ(g.size(), 12u);
    for (const auto& e : g.events()) {
        EXPECT_EQ(e.signature.size(), 64u);
        EXPECT_GE(e.subjects.size() * e.verbs.size(), 2u);
    }
    EXPECT_EQ(g.index_of("dog_bark"), 0u);
    EXPECT_THROW(g.index_of("cow_moo"), std::invalid_argument);
}

TEST(Grammar, RejectsCollinearSignatures) {
    EventSpec a{"a", {"x", "y"}, {"v"}, {1, 2}}, b{"b", {"x", "y"}, {"v"}, {2, 4}}, c{"c", {"x", "y"}, {"v"}, {0, 1}};
    EXPECT_THROW(EventGrammar({a, b, c}, 2), std::invalid_argument);
}

TEST(Grammar, GroupsCoverSynonyms) {
    auto g = EventGrammar::standard(8, 1).lexical_groups();
    EXPECT_EQ(g.at("barks"), g.at("yaps"));
    EXPECT_EQ(g.at("dog"), g.at("puppy"));
    EXPECT_NE(g.at("dog"), g.at("barks"));
    EXPECT_EQ(g.at("loudly"), g.at("noisily"));
}

TEST(Generate, DeterministicInSeed) {
    auto g = EventGrammar::standard(16, 2);
    EXPECT_EQ(generate_split(g, 9, opts(20, 5, 0.7)), generate_split(g, 9, opts(20, 5, 0.7)));
    EXPECT_NE(generate_split(g, 9, opts(20, 5, 0.7)), generate_split(g, 10, opts(20, 5, 0.7)));
}

TEST(Generate, NoiselessSingleEventIsScaledSignature) {
    auto g = EventGrammar::standard(16, 2);
    auto clips = generate_split(g, 4, opts(200, 1, 0.0));
    std::size_t checked = 0;
    for (const auto& c : clips) {
        if (c.events.size() != 1) continue;
        const auto& e = c.events[0];
        const auto& sig = g.events()[e.event].signature;
        for (std::size_t t = 0; t < c.frames; ++t)
            for (std::size_t d = 0; d < c.d_enc; ++d) {
                const double want = (t >= e.start && t < e.end) ? amplitude(e.intensity) * sig[d] : 0.0;
                ASSERT_EQ(c.features[t * c.d_enc + d], want);
            }
        ++checked;
    }
    EXPECT_GT(checked, 20u);
}

TEST(Generate, StructuralInvariants) {
    auto g = EventGrammar::standard(16, 2);
    auto clips = generate_split(g, 5, opts(300, 5, 1.0));
    const auto& lex = metrics::FluencyLexicon::bundled();
    for (const auto& c : clips) {
        EXPECT_EQ(c.frames, 31u);
        EXPECT_GE(c.events.size(), 1u);
        EXPECT_LE(c.events.size(), 3u);
        std::set<std::size_t> distinct;
        for (const auto& e : c.events) {
            distinct.insert(e.event);
            EXPECT_LT(e.start, e.end);
            EXPECT_LE(e.end, c.frames);
        }
        EXPECT_EQ(distinct.size(), c.events.size());
        ASSERT_EQ(c.captions.size(), 5u);
        EXPECT_EQ(std::set<std::string>(c.captions.begin(), c.captions.end()).size(), 5u) << c.id;
        for (const auto& cap : c.captions) {
            EXPECT_EQ(text::normalize(cap), cap);
            EXPECT_FALSE(metrics::fluency_errors(cap, lex).any()) << cap;
            // the caption names exactly the active events through their verbs
            const auto words = text::split_words(cap);
            for (std::size_t e = 0; e < g.size(); ++e) {
                bool mentioned = false;
                for (const auto& v : g.events()[e].verbs) mentioned |= std::find(words.begin(), words.end(), v) != words.end();
                const bool active = distinct.contains(e);
                // speaks/talks are shared by the two speaker events
                if (!active && mentioned) {
                    const bool shared = (e == 1 && distinct.contains(2)) || (e == 2 && distinct.contains(1));
                    EXPECT_TRUE(shared) << cap;
                }
                if (active) {
                    EXPECT_TRUE(mentioned) << cap;
                }
            }
        }
    }
}

TEST(Generate, RejectsBadOptions) {
    auto g = EventGrammar::standard(8, 2);
    EXPECT_THROW(generate_split(g, 1, opts(0, 1, 0.0)), std::invalid_argument);
    EXPECT_THROW(generate_split(g, 1, opts(3, 2, 0.0)), std::invalid_argument);
}

TEST(Corpus, DefaultSplitSizes) {
    CorpusConfig c;
    c.d_enc = 8;
    auto corpus = generate_corpus(c);
    EXPECT_EQ(corpus.train.size(), 512u);
    EXPECT_EQ(corpus.val.size(), 64u);
    EXPECT_EQ(corpus.test.size(), 64u);
    EXPECT_EQ(corpus.train[0].captions.size(), 1u);
    EXPECT_EQ(corpus.test[0].captions.size(), 5u);
    EXPECT_EQ(corpus.val[0].id, "val_00000");
}

TEST(Stats, TrivialAndConsistent) {
    auto g = EventGrammar::standard(8, 2);
    auto one = generate_split(g, 1, opts(1, 1, 0.0));
    auto s = dataset_stats(one, g);
    EXPECT_EQ(s.n_clips, 1u);
    EXPECT_EQ(s.caption_lengths.size(), 1u);
    EXPECT_EQ(s.caption_lengths.begin()->first, text::split_words(one[0].captions[0]).size());

    auto clips = generate_split(g, 2, opts(50, 5, 0.3));
    auto a = dataset_stats(clips, g);
    EXPECT_EQ(a.to_json(), dataset_stats(generate_split(g, 2, opts(50, 5, 0.3)), g).to_json());
    text::VocabOptions vo;
    vo.kind = text::VocabKind::word;
    vo.min_count = 1;
    EXPECT_EQ(a.vocab_size + 4, text::build_vocab(all_captions(clips), vo).size());
    EXPECT_THROW(dataset_stats({}, g), std::invalid_argument);
}

TEST(Persistence, RoundTrip) {
    CorpusConfig c;
    c.n_train = 10;
    c.n_val = 3;
    c.n_test = 4;
    c.d_enc = 6;
    auto g = EventGrammar::standard(c.d_enc, c.seed);
    auto corpus = generate_corpus(c);
    auto dir = scratch("roundtrip");
    save_corpus(dir, corpus, g);
    auto back = load_corpus(dir, g);
    EXPECT_EQ(back.train, corpus.train);
    EXPECT_EQ(back.val, corpus.val);
    EXPECT_EQ(back.test, corpus.test);
    EXPECT_EQ(std::filesystem::file_size(dir / "test.features.bin"), 8u + 4u + 24u + 4u * 31u * 6u * 8u);
    std::filesystem::remove_all(dir);
}

TEST(Persistence, RejectsCorruptFiles) {
    auto g = EventGrammar::standard(4, 1);
    auto clips = generate_split(g, 1, opts(2, 1, 0.0));
    auto dir = scratch("corrupt");
    std::filesystem::create_directories(dir);
    write_features(dir / "f.bin", clips);
    write_captions(dir / "c.jsonl", clips, g);
    std::filesystem::resize_file(dir / "f.bin", std::filesystem::file_size(dir / "f.bin") - 8);
    EXPECT_THROW(read_split(dir / "f.bin", dir / "c.jsonl", g), std::runtime_error);
    std::ofstream(dir / "g.bin") << "NOTAFEATUREFILE";
    EXPECT_THROW(read_split(dir / "g.bin", dir / "c.jsonl", g), std::runtime_error);
    std::filesystem::remove_all(dir);
}

TEST(Learnability, ProbeDetectsEventsWithoutNoise) {
    auto g = EventGrammar::standard(64, 7);
    auto train = generate_split(g, 1, opts(512, 1, 0.0));
    auto test = generate_split(g, 2, opts(128, 1, 0.0));
    auto r = linear_probe(train, test, g.size());
    EXPECT_GT(r.event_accuracy, 0.95);
    EXPECT_GT(r.exact_set_accuracy, 0.8);
}
