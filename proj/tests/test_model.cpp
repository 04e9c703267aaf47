#include <gtest/gtest.h>

#include <cmath>

#include "aac/decoding.hpp"
#include "aac/model.hpp"
#include "aac/objectives.hpp"
#include "aac/optim.hpp"

using namespace aac;
using namespace aac::model;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.d_model = 16;
    c.layers = 2;
    c.heads = 4;
    c.ffn_dim = 24;
    c.dropout = 0.2;
    c.d_enc = 6;
    c.d_sent = 12;
    c.max_len = 8;
    c.vocab_size = 11;
    c.sent_layers = 2;
    c.sent_heads = 4;
    c.sent_ffn_dim = 20;
    return c;
}

Tensor random_features(std::size_t t, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(t * d);
    for (auto& x : v) x = n(rng);
    return Tensor::from({t, d}, std::move(v));
}

std::vector<double> row(const Tensor& t, std::size_t r) {
    auto d = t.data();
    return {d.begin() + static_cast<std::ptrdiff_t>(r * t.cols()), d.begin() + static_cast<std::ptrdiff_t>((r + 1) * t.cols())};
}

text::Vocabulary sent_vocab() { return text::Vocabulary(text::VocabKind::word, {"a", "dog", "barks", "yaps", "cat"}); }

}  // namespace

TEST(Config, Validation) {
    auto c = small_config();
    EXPECT_NO_THROW(c.validate());
    c.heads = 5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config();
    c.vocab_size = 4;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(EncodeProject, ZeroFeaturesGiveBiasRows) {
    Captioner m(small_config(), 1);
    auto st = m.state();
    for (std::size_t i = 0; i < st["enc_proj.bias"].size(); ++i) st["enc_proj.bias"][i] = 0.1 * static_cast<double>(i);
    m.load_state(st);
    auto out = m.encode_project(Tensor::zeros({3, 6}));
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(row(out, r), st["enc_proj.bias"]);
}

TEST(EncodeProject, IdentityProjectionPassesFramesThrough) {
    auto c = small_config();
    c.d_enc = c.d_model;
    Captioner m(c, 1);
    auto st = m.state();
    auto& w = st["enc_proj.weight"];
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < c.d_model; ++i) w[i * c.d_model + i] = 1.0;
    m.load_state(st);
    Tensor f = random_features(1, c.d_model, 3);
    EXPECT_EQ(row(m.encode_project(f), 0), row(f, 0));
}

TEST(EncodeProject, WrongFeatureDimThrows) {
    Captioner m(small_config(), 1);
    EXPECT_THROW(m.encode_project(Tensor::zeros({3, 7})), std::invalid_argument);
}

TEST(Decoder, CausalMaskIsExact) {
    Captioner m(small_config(), 2);
    Tensor mem = m.encode_project(random_features(5, 6, 4));
    const TokenSequence a{text::kBos, 5, 6, 7, 8};
    for (std::size_t t = 1; t < a.size(); ++t) {
        TokenSequence b = a;
        for (std::size_t j = t; j < b.size(); ++j) b[j] = 9;
        auto la = m.decode_teacher_forced(mem, a).logits;
        auto lb = m.decode_teacher_forced(mem, b).logits;
        for (std::size_t r = 0; r < t; ++r) EXPECT_EQ(row(la, r), row(lb, r)) << "perturbed from " << t;
    }
}

TEST(Decoder, MemoryReachesOutput) {
    Captioner m(small_config(), 2);
    const TokenSequence toks{text::kBos, 5};
    auto a = m.decode_teacher_forced(m.encode_project(random_features(5, 6, 4)), toks).logits;
    auto b = m.decode_teacher_forced(m.encode_project(random_features(5, 6, 5)), toks).logits;
    EXPECT_NE(row(a, 0), row(b, 0));
}

TEST(Decoder, OverLengthThrows) {
    Captioner m(small_config(), 2);
    Tensor mem = m.encode_project(random_features(3, 6, 1));
    TokenSequence toks(10, 5);
    toks[0] = text::kBos;
    EXPECT_THROW(m.decode_teacher_forced(mem, toks), std::length_error);
    toks.resize(9);
    EXPECT_NO_THROW(m.decode_teacher_forced(mem, toks));
}

TEST(Decoder, StepLogitsMatchTeacherForcedAndCache) {
    Captioner m(small_config(), 3);
    Tensor mem = m.encode_project(random_features(4, 6, 7));
    const TokenSequence toks{text::kBos, 5, 4, 9, 6};
    auto full = m.decode_teacher_forced(mem, toks).logits;
    auto cache = m.start_cache(mem);
    for (std::size_t i = 0; i < toks.size(); ++i) {
        const TokenSequence prefix(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(i + 1));
        const auto step = m.step_logits(mem, prefix);
        EXPECT_EQ(step, row(full, i));
        EXPECT_EQ(m.advance(cache, toks[i]), step);
    }
    EXPECT_EQ(m.step_logits(mem, toks), m.step_logits(mem, toks));
}

TEST(Decoder, DropoutOnlyInTraining) {
    Captioner m(small_config(), 3);
    Tensor mem = m.encode_project(random_features(4, 6, 7));
    const TokenSequence toks{text::kBos, 5, 4};
    Rng rng(1);
    auto eval1 = m.decode_teacher_forced(mem, toks).logits;
    auto train = m.decode_teacher_forced(mem, toks, {true, &rng}).logits;
    auto eval2 = m.decode_teacher_forced(mem, toks).logits;
    EXPECT_EQ(row(eval1, 2), row(eval2, 2));
    EXPECT_NE(row(eval1, 2), row(train, 2));
}

TEST(Decoder, HandSetOneLayerModel) {
    // Everything except embeddings and classifier is zeroed, so each
    // position's output is three stacked layer norms of embedding + PE.
    ModelConfig c;
    c.d_model = 2;
    c.layers = 1;
    c.heads = 1;
    c.ffn_dim = 2;
    c.d_enc = 2;
    c.d_sent = 2;
    c.sent_heads = 1;
    c.vocab_size = 5;
    c.max_len = 4;
    Captioner m(c, 9);
    auto st = m.state();
    for (auto& [name, v] : st) {
        if (name.find(".weight") != std::string::npos && name.find(".ln") != std::string::npos)
            std::fill(v.begin(), v.end(), 1.0);
        else
            std::fill(v.begin(), v.end(), 0.0);
    }
    st["tok_emb.weight"] = {0, 0, 0.5, 2.0, 0, 0, 0, 0, 0, 0};  // bos row = [0.5, 2]
    st["classifier.weight"] = {1, 0, 0, 0, -1, 0, 1, 0, 0, 2};  // [2 x 5]
    st["classifier.bias"] = {0, 0.25, 0, 0, 0};
    m.load_state(st);
    // position 0: PE = [sin 0, cos 0] = [0, 1] -> x = [0.5, 3]
    auto ln = [](double a, double b) {
        const double mu = (a + b) / 2, var = ((a - mu) * (a - mu) + (b - mu) * (b - mu)) / 2;
        const double s = 1.0 / std::sqrt(var + 1e-5);
        return std::pair{(a - mu) * s, (b - mu) * s};
    };
    auto [h1, h2] = ln(0.5, 3.0);
    std::tie(h1, h2) = ln(h1, h2);
    std::tie(h1, h2) = ln(h1, h2);
    auto logits = m.step_logits(Tensor::zeros({1, 2}), {text::kBos});
    EXPECT_NEAR(logits[0], h1, 1e-12);
    EXPECT_NEAR(logits[1], h2 + 0.25, 1e-12);
    EXPECT_EQ(logits[2], 0.0);
    EXPECT_EQ(logits[3], 0.0);
    EXPECT_NEAR(logits[4], -h1 + 2.0 * h2, 1e-12);
}

TEST(Parameters, BiasesAreDecayExempt) {
    Captioner m(small_config(), 1);
    std::size_t exempt = 0;
    for (const auto& p : m.parameters()) {
        const bool is_bias = p.name.size() > 5 && p.name.ends_with(".bias");
        EXPECT_EQ(p.decay_exempt, is_bias) << p.name;
        exempt += p.decay_exempt;
    }
    EXPECT_GT(exempt, 10u);
}

TEST(Parameters, SerHeadDoesNotShiftOtherInitialization) {
    Captioner with(small_config(), 42, true), without(small_config(), 42, false);
    auto a = with.state(), b = without.state();
    EXPECT_EQ(a.size(), b.size() + 2);
    for (const auto& [name, v] : b) EXPECT_EQ(a.at(name), v) << name;
}

TEST(Parameters, StateRoundTripAndClone) {
    Captioner m(small_config(), 5);
    Captioner other(small_config(), 6);
    other.load_state(m.state());
    EXPECT_EQ(other.state(), m.state());
    EXPECT_EQ(m.clone().state(), m.state());
    auto bad = m.state();
    bad.erase("classifier.bias");
    EXPECT_THROW(other.load_state(bad), std::runtime_error);
}

TEST(SerProject, DefaultShapeAndZeroInput) {
    ModelConfig c;
    c.vocab_size = 10;
    Captioner m(c, 1);
    auto out = m.ser_project(Tensor::zeros({3, 256}));
    EXPECT_EQ(out.shape(), (Shape{3, 768}));
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
    Captioner no_head(small_config(), 1, false);
    EXPECT_THROW(no_head.ser_project(Tensor::zeros({1, 16})), std::logic_error);
}

TEST(SentenceEncoder, BypassIdentityIsExact) {
    SentenceEncoder enc(small_config(), sent_vocab());
    const TokenSequence ids{4, 5, 6, text::kEos};
    auto full = enc.from_tokens(ids);
    auto bypass = enc.from_vectors(enc.embed_tokens(ids));
    EXPECT_EQ(std::vector<double>(full.data().begin(), full.data().end()),
              std::vector<double>(bypass.data().begin(), bypass.data().end()));
    EXPECT_EQ(full.shape(), (Shape{1, 12}));
}

TEST(SentenceEncoder, DeterministicAndOrderSensitive) {
    SentenceEncoder a(small_config(), sent_vocab()), b(small_config(), sent_vocab());
    EXPECT_EQ(a.parameter_hash(), b.parameter_hash());
    EXPECT_EQ(a.embed_text("a dog barks"), b.embed_text("a dog barks"));
    EXPECT_NE(a.embed_text("a dog barks"), a.embed_text("barks dog a"));
}

TEST(SentenceEncoder, SynonymGroupsAreCloser) {
    LexicalGroups groups{{"barks", 0}, {"yaps", 0}};
    auto c = small_config();
    c.d_sent = 64;
    SentenceEncoder enc(c, sent_vocab(), groups);
    auto cos = [](const std::vector<double>& x, const std::vector<double>& y) {
        double d = 0, a = 0, b = 0;
        for (std::size_t i = 0; i < x.size(); ++i) d += x[i] * y[i], a += x[i] * x[i], b += y[i] * y[i];
        return d / std::sqrt(a * b);
    };
    auto e = [&](const char* w) {
        auto t = enc.embed_tokens({enc.vocabulary().id(w)});
        return std::vector<double>(t.data().begin(), t.data().end());
    };
    EXPECT_GT(cos(e("barks"), e("yaps")), 0.4);
    EXPECT_LT(std::abs(cos(e("barks"), e("cat"))), 0.4);
}

TEST(SentenceEncoder, GradientReachesInputsOnly) {
    SentenceEncoder enc(small_config(), sent_vocab());
    Tensor v = Tensor::parameter({3, 12}, std::vector<double>(36, 0.1));
    for (std::size_t i = 0; i < 36; ++i) v.mutable_data()[i] = std::sin(static_cast<double>(i));
    sum(enc.from_vectors(v)).backward();
    bool nonzero = false;
    for (double g : v.grad()) nonzero |= g != 0.0;
    EXPECT_TRUE(nonzero);
    for (const auto& p : enc.parameters()) {
        EXPECT_FALSE(p.tensor.requires_grad()) << p.name;
        EXPECT_FALSE(p.tensor.has_grad()) << p.name;
    }
}

TEST(SentenceEncoder, HashUnchangedByTraining) {
    auto c = small_config();
    Captioner m(c, 1);
    SentenceEncoder enc(c, sent_vocab());
    const auto before = enc.parameter_hash();
    auto params = m.parameters();
    optim::AdamWState st;
    for (int step = 0; step < 3; ++step) {
        Tensor mem = m.encode_project(random_features(4, 6, static_cast<std::uint64_t>(step)));
        auto out = m.decode_teacher_forced(mem, {text::kBos, 5, 6});
        const std::vector<int> tgt{5, 6, text::kEos};
        Tensor target = enc.from_tokens({4, 5, text::kEos}).detach();
        auto l = loss::combined_loss(loss::cross_entropy_smoothed(out.logits, tgt, 0.1),
                                     loss::smooth_l1(enc.from_vectors(m.ser_project(out.token_embeddings)), target, 1.0),
                                     100.0);
        optim::zero_grad(params);
        l.backward();
        optim::clip_global_norm(params, 10.0);
        optim::adamw_step(params, st, 1e-3, {});
    }
    EXPECT_EQ(enc.parameter_hash(), before);
}

TEST(Stepper, CachedDecodingMatchesStepLogits) {
    Captioner m(small_config(), 8);
    Tensor mem = m.encode_project(random_features(4, 6, 2));
    decode::CaptionerStepper stepper(m, mem);
    for (const TokenSequence& p : {TokenSequence{text::kBos}, TokenSequence{text::kBos, 7}, TokenSequence{text::kBos, 7, 4},
                                   TokenSequence{text::kBos, 8}})
        EXPECT_EQ(stepper.logits(p), m.step_logits(mem, p));
    decode::DecodeConfig c;
    c.max_len = 6;
    auto h = decode::decode_features(m, random_features(4, 6, 2), c);
    EXPECT_EQ(h.tokens.front(), text::kBos);
    EXPECT_EQ(h.tokens.back(), text::kEos);
}
