#include "aac/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "aac/text.hpp"

namespace aac::synth {

namespace {

static_assert(std::endian::native == std::endian::little, "feature files are written in host byte order");

constexpr char kFeatureMagic[8] = {'A', 'A', 'C', 'F', 'E', 'A', 'T', '\0'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint64_t kTrainStream = 1, kValStream = 2, kTestStream = 3;
constexpr std::size_t kDistinctTries = 64;

template <class T>
T pick(const std::vector<T>& v, Rng& rng) {
    std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
    return v[d(rng)];
}

std::string clause(const EventGrammar& g, const ActiveEvent& e, Rng& rng) {
    const auto& spec = g.events()[e.event];
    std::string out = pick(spec.subjects, rng) + " " + pick(spec.verbs, rng);
    const auto& adv = EventGrammar::adverbs(e.intensity);
    if (!adv.empty()) out += " " + pick(adv, rng);
    return out;
}

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error(path.string() + ": truncated header");
    return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return d / std::sqrt(na * nb);
}

struct Inventory {
    const char* name;
    std::vector<std::string> subjects, verbs;
};

const std::vector<Inventory>& inventory() {
    static const std::vector<Inventory> inv{
        {"dog_bark", {"a dog", "a puppy"}, {"barks", "yaps", "woofs"}},
        {"man_speak", {"a man", "a guy"}, {"speaks", "talks", "narrates"}},
        {"woman_speak", {"a woman", "a lady"}, {"speaks", "talks", "chats"}},
        {"door_squeak", {"a door", "a wooden door"}, {"squeaks", "creaks", "squeals"}},
        {"car_pass", {"a car", "a vehicle"}, {"passes", "zooms", "accelerates"}},
        {"engine_idle", {"an engine", "a motor"}, {"idles", "hums", "rumbles"}},
        {"bird_chirp", {"a bird", "a songbird"}, {"chirps", "tweets", "sings"}},
        {"rain_fall", {"the rain", "heavy rain"}, {"falls", "patters", "pours"}},
        {"baby_cry", {"a baby", "an infant"}, {"cries", "wails", "sobs"}},
        {"water_flow", {"running water", "a stream"}, {"flows", "trickles", "splashes"}},
        {"wind_blow", {"the wind", "a gust"}, {"blows", "howls", "whistles"}},
        {"phone_ring", {"a phone", "a telephone"}, {"rings", "beeps", "buzzes"}},
    };
    return inv;
}

}  // namespace

std::string to_string(Intensity i) {
    switch (i) {
        case Intensity::soft: return "soft";
        case Intensity::normal: return "normal";
        case Intensity::loud: return "loud";
    }
    return "normal";
}

Intensity intensity_from_string(std::string_view s) {
    if (s == "soft") return Intensity::soft;
    if (s == "normal") return Intensity::normal;
    if (s == "loud") return Intensity::loud;
    throw std::invalid_argument("unknown intensity '" + std::string(s) + "'");
}

double amplitude(Intensity i) {
    switch (i) {
        case Intensity::soft: return 0.5;
        case Intensity::normal: return 1.0;
        case Intensity::loud: return 1.5;
    }
    return 1.0;
}

EventGrammar EventGrammar::standard(std::size_t d_enc, std::uint64_t seed) {
    Rng rng(mix(seed, 0x6576656e7473ULL));
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<EventSpec> events;
    for (const auto& inv : inventory()) {
        EventSpec e{inv.name, inv.subjects, inv.verbs, {}};
        // redraw until clearly non-collinear with every earlier signature
        for (bool ok = false; !ok;) {
            e.signature.assign(d_enc, 0.0);
            for (auto& v : e.signature) v = n(rng);
            ok = std::all_of(events.begin(), events.end(),
                             [&](const EventSpec& o) { return std::abs(cosine(o.signature, e.signature)) < 0.9; });
        }
        events.push_back(std::move(e));
    }
    return EventGrammar(std::move(events), d_enc);
}

EventGrammar::EventGrammar(std::vector<EventSpec> events, std::size_t d_enc) : events_(std::move(events)), d_enc_(d_enc) {
    if (events_.size() < 3) throw std::invalid_argument("EventGrammar: need at least 3 events");
    for (std::size_t i = 0; i < events_.size(); ++i) {
        const auto& e = events_[i];
        if (e.signature.size() != d_enc_) throw std::invalid_argument("EventGrammar: signature of " + e.name + " has wrong size");
        if (e.subjects.size() * e.verbs.size() < 2)
            throw std::invalid_argument("EventGrammar: " + e.name + " needs at least 2 surface realizations");
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(cosine(events_[j].signature, e.signature)) > 1.0 - 1e-9)
                throw std::invalid_argument("EventGrammar: signatures of " + events_[j].name + " and " + e.name + " are collinear");
    }
}

std::size_t EventGrammar::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < events_.size(); ++i)
        if (events_[i].name == name) return i;
    throw std::invalid_argument("unknown event '" + std::string(name) + "'");
}

const std::vector<std::string>& EventGrammar::adverbs(Intensity i) {
    static const std::vector<std::string> soft{"softly", "quietly", "faintly"}, none{}, loud{"loudly", "noisily"};
    return i == Intensity::soft ? soft : i == Intensity::loud ? loud : none;
}

const std::vector<std::string>& EventGrammar::conjunctions() {
    static const std::vector<std::string> c{"and", "while", "as", "then"};
    return c;
}

model::LexicalGroups EventGrammar::lexical_groups() const {
    model::LexicalGroups g;
    for (std::size_t e = 0; e < events_.size(); ++e) {
        for (const auto& s : events_[e].subjects) g.emplace(text::split_words(s).back(), static_cast<int>(3 * e));
        for (const auto& v : events_[e].verbs) g.emplace(v, static_cast<int>(3 * e + 1));
    }
    const int base = static_cast<int>(3 * events_.size());
    for (const auto& a : adverbs(Intensity::soft)) g.emplace(a, base);
    for (const auto& a : adverbs(Intensity::loud)) g.emplace(a, base + 1);
    return g;
}

Tensor CaptionedClip::feature_tensor() const { return Tensor::from({frames, d_enc}, features); }

std::string realize_caption(const EventGrammar& grammar, const std::vector<ActiveEvent>& events, Rng& rng) {
    if (events.empty()) throw std::invalid_argument("realize_caption: no events");
    std::string out = clause(grammar, events.front(), rng);
    for (std::size_t i = 1; i < events.size(); ++i)
        out += " " + pick(EventGrammar::conjunctions(), rng) + " " + clause(grammar, events[i], rng);
    return out;
}

std::vector<CaptionedClip> generate_split(const EventGrammar& grammar, std::uint64_t seed, const SplitOptions& options) {
    if (options.n_clips < 1) throw std::invalid_argument("generate_split: n_clips must be >= 1");
    if (options.refs_per_clip != 1 && options.refs_per_clip != 5)
        throw std::invalid_argument("generate_split: refs_per_clip must be 1 or 5");
    if (options.frames < 1) throw std::invalid_argument("generate_split: frames must be >= 1");
    if (options.noise_sigma < 0.0) throw std::invalid_argument("generate_split: noise_sigma must be >= 0");

    const std::size_t T = options.frames, D = grammar.d_enc();
    std::vector<CaptionedClip> clips(options.n_clips);
    for (std::size_t c = 0; c < options.n_clips; ++c) {
        Rng rng(mix(seed, c));
        auto& clip = clips[c];
        char id[32];
        std::snprintf(id, sizeof id, "_%05zu", c);
        clip.id = options.id_prefix + id;
        clip.frames = T;
        clip.d_enc = D;

        std::vector<std::size_t> order(grammar.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
        const std::size_t min_span = std::max<std::size_t>(1, T / 4);
        for (std::size_t i = 0; i < k; ++i) {
            ActiveEvent e;
            e.event = order[i];
            const std::size_t len = std::uniform_int_distribution<std::size_t>(min_span, T)(rng);
            e.start = std::uniform_int_distribution<std::size_t>(0, T - len)(rng);
            e.end = e.start + len;
            e.intensity = static_cast<Intensity>(std::uniform_int_distribution<int>(0, 2)(rng));
            clip.events.push_back(e);
        }
        std::sort(clip.events.begin(), clip.events.end(), [](const ActiveEvent& a, const ActiveEvent& b) {
            return a.start != b.start ? a.start < b.start : a.event < b.event;
        });

        clip.features.assign(T * D, 0.0);
        for (const auto& e : clip.events) {
            const auto& sig = grammar.events()[e.event].signature;
            const double amp = amplitude(e.intensity);
            for (std::size_t t = e.start; t < e.end; ++t)
                for (std::size_t d = 0; d < D; ++d) clip.features[t * D + d] += amp * sig[d];
        }
        if (options.noise_sigma > 0.0) {
            std::normal_distribution<double> noise(0.0, options.noise_sigma);
            for (auto& v : clip.features) v += noise(rng);
        }

        std::set<std::string> seen;
        for (std::size_t r = 0; r < options.refs_per_clip; ++r) {
            std::string cap = realize_caption(grammar, clip.events, rng);
            for (std::size_t tries = 1; seen.contains(cap) && tries < kDistinctTries; ++tries)
                cap = realize_caption(grammar, clip.events, rng);
            seen.insert(cap);
            clip.captions.push_back(std::move(cap));
        }
    }
    return clips;
}

Corpus generate_corpus(const CorpusConfig& config) {
    const auto grammar = EventGrammar::standard(config.d_enc, config.seed);
    auto split = [&](std::uint64_t stream, std::size_t n, std::size_t refs, const char* prefix) {
        SplitOptions o;
        o.n_clips = n;
        o.refs_per_clip = refs;
        o.noise_sigma = config.noise_sigma;
        o.frames = config.frames;
        o.id_prefix = prefix;
        return generate_split(grammar, mix(config.seed, stream), o);
    };
    Corpus c;
    c.train = split(kTrainStream, config.n_train, config.train_refs, "train");
    c.val = split(kValStream, config.n_val, config.eval_refs, "val");
    c.test = split(kTestStream, config.n_test, config.eval_refs, "test");
    return c;
}

std::vector<std::string> all_captions(const std::vector<CaptionedClip>& clips) {
    std::vector<std::string> out;
    for (const auto& c : clips) out.insert(out.end(), c.captions.begin(), c.captions.end());
    return out;
}

DatasetStats dataset_stats(const std::vector<CaptionedClip>& clips, const EventGrammar& grammar) {
    if (clips.empty()) throw std::invalid_argument("dataset_stats: empty corpus");
    DatasetStats s;
    s.n_clips = clips.size();
    const auto caps = all_captions(clips);
    s.n_captions = caps.size();
    text::VocabOptions vo;
    vo.kind = text::VocabKind::word;
    vo.min_count = 1;
    s.vocab_size = text::build_vocab(caps, vo).size() - 4;
    for (const auto& c : caps) ++s.caption_lengths[text::split_words(c).size()];
    for (const auto& e : grammar.events()) s.event_counts[e.name] = 0;
    for (const auto& c : clips)
        for (const auto& e : c.events) ++s.event_counts[grammar.events()[e.event].name];
    return s;
}

nlohmann::json DatasetStats::to_json() const {
    nlohmann::json j;
    j["n_clips"] = n_clips;
    j["n_captions"] = n_captions;
    j["vocab_size"] = vocab_size;
    nlohmann::json lens = nlohmann::json::object();
    for (const auto& [k, v] : caption_lengths) lens[std::to_string(k)] = v;
    j["caption_lengths"] = std::move(lens);
    j["event_counts"] = event_counts;
    return j;
}

void write_features(const std::filesystem::path& path, const std::vector<CaptionedClip>& clips) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::uint64_t n = clips.size(), T = clips.empty() ? 0 : clips[0].frames, D = clips.empty() ? 0 : clips[0].d_enc;
    out.write(kFeatureMagic, sizeof kFeatureMagic);
    put(out, kFeatureVersion);
    put(out, n);
    put(out, T);
    put(out, D);
    for (const auto& c : clips) {
        if (c.frames != T || c.d_enc != D || c.features.size() != T * D)
            throw std::invalid_argument("write_features: clip " + c.id + " has a different shape");
        out.write(reinterpret_cast<const char*>(c.features.data()), static_cast<std::streamsize>(c.features.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_captions(const std::filesystem::path& path, const std::vector<CaptionedClip>& clips,
                    const EventGrammar& grammar) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& c : clips) {
        nlohmann::json j;
        j["id"] = c.id;
        j["captions"] = c.captions;
        auto ev = nlohmann::json::array();
        for (const auto& e : c.events)
            ev.push_back({{"event", grammar.events().at(e.event).name},
                          {"start", e.start},
                          {"end", e.end},
                          {"intensity", to_string(e.intensity)}});
        j["events"] = std::move(ev);
        out << j.dump() << '\n';
    }
}

std::vector<CaptionedClip> read_split(const std::filesystem::path& features, const std::filesystem::path& captions,
                                      const EventGrammar& grammar) {
    std::ifstream fin(features, std::ios::binary);
    if (!fin) throw std::runtime_error("cannot read " + features.string());
    char magic[8];
    if (!fin.read(magic, sizeof magic) || std::memcmp(magic, kFeatureMagic, sizeof magic) != 0)
        throw std::runtime_error(features.string() + ": not a feature file");
    const auto version = get<std::uint32_t>(fin, features);
    if (version != kFeatureVersion)
        throw std::runtime_error(features.string() + ": unsupported version " + std::to_string(version));
    const auto n = get<std::uint64_t>(fin, features);
    const auto T = get<std::uint64_t>(fin, features);
    const auto D = get<std::uint64_t>(fin, features);

    std::vector<CaptionedClip> clips(n);
    for (auto& c : clips) {
        c.frames = T;
        c.d_enc = D;
        c.features.resize(T * D);
        if (!fin.read(reinterpret_cast<char*>(c.features.data()), static_cast<std::streamsize>(T * D * sizeof(double))))
            throw std::runtime_error(features.string() + ": truncated data");
    }
    if (fin.peek() != std::char_traits<char>::eof()) throw std::runtime_error(features.string() + ": trailing bytes");

    std::ifstream cin(captions);
    if (!cin) throw std::runtime_error("cannot read " + captions.string());
    std::string line;
    std::size_t i = 0;
    while (std::getline(cin, line)) {
        if (line.empty()) continue;
        if (i >= n) throw std::runtime_error(captions.string() + ": more records than feature rows");
        const auto j = nlohmann::json::parse(line);
        auto& c = clips[i++];
        c.id = j.at("id").get<std::string>();
        c.captions = j.at("captions").get<std::vector<std::string>>();
        for (const auto& e : j.at("events"))
            c.events.push_back({grammar.index_of(e.at("event").get<std::string>()), e.at("start").get<std::size_t>(),
                                e.at("end").get<std::size_t>(), intensity_from_string(e.at("intensity").get<std::string>())});
    }
    if (i != n) throw std::runtime_error(captions.string() + ": " + std::to_string(i) + " records for " + std::to_string(n) + " clips");
    return clips;
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus, const EventGrammar& grammar) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, split] : {std::pair{"train", &corpus.train}, {"val", &corpus.val}, {"test", &corpus.test}}) {
        write_features(dir / (std::string(name) + ".features.bin"), *split);
        write_captions(dir / (std::string(name) + ".captions.jsonl"), *split, grammar);
    }
}

Corpus load_corpus(const std::filesystem::path& dir, const EventGrammar& grammar) {
    auto split = [&](const std::string& name) {
        return read_split(dir / (name + ".features.bin"), dir / (name + ".captions.jsonl"), grammar);
    };
    return {split("train"), split("val"), split("test")};
}

ProbeResult linear_probe(const std::vector<CaptionedClip>& train, const std::vector<CaptionedClip>& test,
                         std::size_t n_events, std::size_t iterations, double lr) {
    if (train.empty() || test.empty()) throw std::invalid_argument("linear_probe: empty split");
    const std::size_t D = train[0].d_enc;
    auto pooled = [&](const CaptionedClip& c) {
        std::vector<double> x(D, 0.0);
        for (std::size_t t = 0; t < c.frames; ++t)
            for (std::size_t d = 0; d < D; ++d) x[d] += c.features[t * D + d] / static_cast<double>(c.frames);
        return x;
    };
    std::vector<std::vector<double>> xtr, xte;
    for (const auto& c : train) xtr.push_back(pooled(c));
    for (const auto& c : test) xte.push_back(pooled(c));

    // standardize with train statistics
    std::vector<double> mu(D, 0.0), sd(D, 0.0);
    for (const auto& x : xtr)
        for (std::size_t d = 0; d < D; ++d) mu[d] += x[d] / static_cast<double>(xtr.size());
    for (const auto& x : xtr)
        for (std::size_t d = 0; d < D; ++d) sd[d] += (x[d] - mu[d]) * (x[d] - mu[d]) / static_cast<double>(xtr.size());
    for (auto& s : sd) s = std::sqrt(s) + 1e-12;
    for (auto* set : {&xtr, &xte})
        for (auto& x : *set)
            for (std::size_t d = 0; d < D; ++d) x[d] = (x[d] - mu[d]) / sd[d];

    auto present = [](const CaptionedClip& c, std::size_t e) {
        return std::any_of(c.events.begin(), c.events.end(), [&](const ActiveEvent& a) { return a.event == e; });
    };
    std::vector<std::vector<bool>> predicted(test.size(), std::vector<bool>(n_events));
    for (std::size_t e = 0; e < n_events; ++e) {
        std::vector<double> w(D + 1, 0.0);
        for (std::size_t it = 0; it < iterations; ++it) {
            std::vector<double> g(D + 1, 0.0);
            for (std::size_t i = 0; i < xtr.size(); ++i) {
                double z = w[D];
                for (std::size_t d = 0; d < D; ++d) z += w[d] * xtr[i][d];
                const double err = 1.0 / (1.0 + std::exp(-z)) - (present(train[i], e) ? 1.0 : 0.0);
                for (std::size_t d = 0; d < D; ++d) g[d] += err * xtr[i][d];
                g[D] += err;
            }
            for (std::size_t d = 0; d <= D; ++d) w[d] -= lr * g[d] / static_cast<double>(xtr.size());
        }
        for (std::size_t i = 0; i < xte.size(); ++i) {
            double z = w[D];
            for (std::size_t d = 0; d < D; ++d) z += w[d] * xte[i][d];
            predicted[i][e] = z > 0.0;
        }
    }
    std::size_t right = 0, exact = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        bool all = true;
        for (std::size_t e = 0; e < n_events; ++e) {
            const bool ok = predicted[i][e] == present(test[i], e);
            right += ok;
            all &= ok;
        }
        exact += all;
    }
    ProbeResult r;
    r.event_accuracy = static_cast<double>(right) / static_cast<double>(test.size() * n_events);
    r.exact_set_accuracy = static_cast<double>(exact) / static_cast<double>(test.size());
    return r;
}

}  // namespace aac::synth
