#include "aac/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

namespace aac::harness {

using text::TokenSequence;

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696eULL;

struct Example {
    Tensor features;
    TokenSequence prev, targets;
    Tensor ser_target;  // [1 × d_sent], empty when the SER branch is off
};

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

text::Vocabulary decoder_vocab(const ExperimentConfig& c, const synth::Corpus& corpus, const text::Vocabulary& sent_vocab) {
    // the subword decoder shares the sentence encoder's vocabulary
    if (c.tokenizer == text::VocabKind::subword) return sent_vocab;
    text::VocabOptions o;
    o.kind = text::VocabKind::word;
    o.min_count = c.min_count;
    return text::build_vocab(synth::all_captions(corpus.train), o);
}

std::vector<Example> make_examples(const Experiment& exp) {
    const auto& cfg = exp.config;
    const std::size_t limit = exp.model_config().max_len + 1;
    std::vector<Example> out;
    for (const auto& clip : exp.corpus.train) {
        const Tensor feats = clip.feature_tensor();
        for (const auto& cap : clip.captions) {
            const auto ids = text::encode(exp.vocab, cap);
            if (ids.size() - 1 > limit)
                throw std::invalid_argument("caption of " + clip.id + " has " + std::to_string(ids.size() - 2) +
                                            " tokens, more than model.max_len allows");
            Example e;
            e.features = feats;
            e.prev.assign(ids.begin(), ids.end() - 1);
            e.targets.assign(ids.begin() + 1, ids.end());
            if (cfg.loss.ser_enabled) {
                NoGradGuard g;
                e.ser_target = exp.encoder->from_tokens(exp.encoder->sentence_ids(cap)).detach();
            }
            out.push_back(std::move(e));
        }
    }
    return out;
}

std::string rng_to_string(const Rng& rng) {
    std::ostringstream ss;
    ss << rng;
    return ss.str();
}

Rng rng_from_string(const std::string& s) {
    Rng rng;
    std::istringstream ss(s);
    ss >> rng;
    if (!ss) throw std::runtime_error("corrupt RNG state in checkpoint");
    return rng;
}

bool all_finite(const std::vector<model::NamedParameter>& params) {
    for (const auto& p : params)
        if (p.tensor.has_grad())
            for (double g : p.tensor.grad())
                if (!std::isfinite(g)) return false;
    return true;
}

}  // namespace

model::ModelConfig Experiment::model_config() const {
    auto m = config.model;
    m.vocab_size = vocab.size();
    m.d_enc = grammar.d_enc();
    return m;
}

Experiment prepare(const ExperimentConfig& config, const std::optional<std::filesystem::path>& corpus_dir) {
    config.validate();
    auto grammar = synth::EventGrammar::standard(config.data.d_enc, config.data.seed);
    synth::Corpus corpus = corpus_dir ? synth::load_corpus(*corpus_dir, grammar) : synth::generate_corpus(config.data);
    if (!corpus.train.empty() && corpus.train[0].d_enc != config.data.d_enc)
        throw std::invalid_argument("corpus feature width " + std::to_string(corpus.train[0].d_enc) +
                                    " does not match data.d_enc");

    text::VocabOptions so;
    so.kind = text::VocabKind::subword;
    so.min_count = config.min_count;
    so.subword_size = config.subword_size;
    auto sent_vocab = text::build_vocab(synth::all_captions(corpus.train), so);
    auto vocab = decoder_vocab(config, corpus, sent_vocab);

    auto mc = config.model;
    mc.vocab_size = vocab.size();
    mc.d_enc = grammar.d_enc();
    auto encoder = std::make_shared<const model::SentenceEncoder>(mc, sent_vocab, grammar.lexical_groups());

    auto dc = config.decode_config();
    dc.stopword_ids = decode::stopword_ids(vocab, text::StopwordSet::english());
    return Experiment{config, std::move(grammar), std::move(corpus), std::move(vocab), std::move(sent_vocab),
                      std::move(encoder), std::move(dc)};
}

Experiment with_config(const Experiment& base, const ExperimentConfig& config) {
    config.validate();
    auto kv_a = to_key_values(base.config), kv_b = to_key_values(config);
    for (const auto& [k, v] : kv_a) {
        const bool shared = k.starts_with("data.") || k.starts_with("model.sent_") || k == "model.d_sent" ||
                            k == "text.min_count" || k == "text.subword_size";
        if (shared && kv_b.at(k) != v) throw std::invalid_argument("with_config: " + k + " must match the base experiment");
    }
    Experiment e{config, base.grammar, base.corpus, {}, base.sent_vocab, base.encoder, {}};
    e.vocab = config.tokenizer == base.config.tokenizer ? base.vocab : decoder_vocab(config, e.corpus, e.sent_vocab);
    e.decode = config.decode_config();
    e.decode.stopword_ids = decode::stopword_ids(e.vocab, text::StopwordSet::english());
    return e;
}

nlohmann::json manifest(const Experiment& exp) {
    nlohmann::json j;
    j["config"] = to_key_values(exp.config);
    const model::Captioner probe(exp.model_config(), exp.config.train.seed, exp.config.loss.ser_enabled);
    nlohmann::json d;
    d["decoder_vocab_size"] = exp.vocab.size();
    d["sentence_vocab_size"] = exp.sent_vocab.size();
    d["d_enc"] = exp.grammar.d_enc();
    d["n_events"] = exp.grammar.size();
    d["parameter_count"] = probe.parameter_count();
    d["sentence_encoder_hash"] = hex(exp.encoder->parameter_hash());
    d["decoder_vocab"] = exp.vocab.tokens();
    j["derived"] = std::move(d);
    nlohmann::json c;
    c["train"] = synth::dataset_stats(exp.corpus.train, exp.grammar).to_json();
    c["val"] = synth::dataset_stats(exp.corpus.val, exp.grammar).to_json();
    c["test"] = synth::dataset_stats(exp.corpus.test, exp.grammar).to_json();
    j["corpus"] = std::move(c);
    return j;
}

double mean_ce(const model::Captioner& model, const Experiment& exp, const std::vector<synth::CaptionedClip>& clips) {
    NoGradGuard g;
    double sum = 0.0;
    std::size_t tokens = 0;
    for (const auto& clip : clips) {
        const Tensor memory = model.encode_project(clip.feature_tensor());
        for (const auto& cap : clip.captions) {
            const auto ids = text::encode(exp.vocab, cap);
            const TokenSequence prev(ids.begin(), ids.end() - 1), targets(ids.begin() + 1, ids.end());
            const auto out = model.decode_teacher_forced(memory, prev);
            const double ce = loss::cross_entropy_smoothed(out.logits, targets, exp.config.loss.label_smoothing).item();
            sum += ce * static_cast<double>(targets.size());
            tokens += targets.size();
        }
    }
    return sum / static_cast<double>(tokens);
}

std::vector<std::string> decode_clips(const model::Captioner& model, const Experiment& exp,
                                      const std::vector<synth::CaptionedClip>& clips) {
    std::vector<std::string> out;
    out.reserve(clips.size());
    for (const auto& clip : clips)
        out.push_back(text::decode(exp.vocab, decode::decode_features(model, clip.feature_tensor(), exp.decode).tokens));
    return out;
}

std::vector<metrics::EvalItem> eval_items(const std::vector<std::string>& candidates,
                                          const std::vector<synth::CaptionedClip>& clips) {
    if (candidates.size() != clips.size()) throw std::invalid_argument("eval_items: candidate count does not match clips");
    std::vector<metrics::EvalItem> items;
    for (std::size_t i = 0; i < clips.size(); ++i) items.push_back({candidates[i], clips[i].captions});
    return items;
}

model::Captioner restore_model(const Checkpoint& ckpt, const Experiment& exp) {
    const auto cfg = parse_config(ckpt.config);
    const auto vocab = text::Vocabulary::parse(ckpt.vocabulary);
    if (!(vocab == exp.vocab)) throw std::invalid_argument("checkpoint vocabulary differs from the experiment's");
    auto mc = cfg.model;
    mc.vocab_size = vocab.size();
    mc.d_enc = exp.grammar.d_enc();
    model::Captioner m(mc, cfg.train.seed, cfg.loss.ser_enabled);
    m.load_state(ckpt.model);
    return m;
}

TrainResult train(const Experiment& exp, const TrainOptions& options) {
    const auto& cfg = exp.config;
    const std::size_t K = cfg.optim.epochs;
    model::Captioner model(exp.model_config(), cfg.train.seed, cfg.loss.ser_enabled);
    auto params = model.parameters();
    optim::AdamWState adam;
    Rng rng(mix(cfg.train.seed, kTrainStream));

    TrainResult res;
    res.encoder_hash_before = exp.encoder->parameter_hash();
    std::size_t start = 0;
    if (options.resume) {
        const auto& ck = *options.resume;
        if (ck.config != serialize(cfg)) throw std::invalid_argument("resume: checkpoint was produced by a different config");
        if (text::Vocabulary::parse(ck.vocabulary) != exp.vocab)
            throw std::invalid_argument("resume: checkpoint vocabulary differs");
        model.load_state(ck.model);
        adam = ck.optimizer;
        rng = rng_from_string(ck.rng_state);
        res.curve = ck.curve;
        res.best_epoch = ck.best_epoch;
        res.best_fense = ck.best_fense;
        res.best_model = ck.best_model;
        start = ck.epoch;
    }
    const std::size_t stop = std::min(K, options.stop_after.value_or(K));

    const auto examples = make_examples(exp);
    std::vector<synth::CaptionedClip> val_subset = exp.corpus.val;
    if (cfg.train.val_clips > 0 && cfg.train.val_clips < val_subset.size()) val_subset.resize(cfg.train.val_clips);
    if (options.out_dir) std::filesystem::create_directories(*options.out_dir);

    auto snapshot = [&](std::size_t epoch, double fense) {
        Checkpoint c;
        c.config = serialize(cfg);
        c.vocabulary = exp.vocab.serialize();
        c.epoch = epoch;
        c.val_fense = fense;
        c.best_epoch = res.best_epoch;
        c.best_fense = res.best_fense;
        c.rng_state = rng_to_string(rng);
        c.model = model.state();
        c.best_model = res.best_model;
        c.optimizer = adam;
        c.curve = res.curve;
        return c;
    };
    auto abort = [&](std::size_t epoch, const std::string& why) {
        if (options.out_dir) save_checkpoint(*options.out_dir / "aborted.ckpt", snapshot(epoch, 0.0));
        throw TrainingAborted("training aborted in epoch " + std::to_string(epoch + 1) + ": " + why);
    };

    const model::ForwardMode train_mode{true, &rng};
    for (std::size_t epoch = start; epoch < stop; ++epoch) {
        const double lr = optim::cosine_lr(epoch, K, cfg.optim.lr0);
        std::vector<std::size_t> order(examples.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.train.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + cfg.train.batch_size);
            std::size_t n_tokens = 0;
            for (std::size_t i = b0; i < b1; ++i) n_tokens += examples[order[i]].targets.size();
            const double batch = static_cast<double>(b1 - b0);

            optim::zero_grad(params);
            double batch_loss = 0.0;
            for (std::size_t i = b0; i < b1; ++i) {
                const auto& ex = examples[order[i]];
                const Tensor memory = model.encode_project(ex.features);
                const auto out = model.decode_teacher_forced(memory, ex.prev, train_mode);
                const Tensor ce = loss::cross_entropy_smoothed(out.logits, ex.targets, cfg.loss.label_smoothing);
                // per-example share of the batch means: token-weighted CE, clip-averaged SER
                Tensor term = scale(ce, static_cast<double>(ex.targets.size()) / static_cast<double>(n_tokens));
                if (cfg.loss.ser_enabled) {
                    const Tensor predicted = exp.encoder->from_vectors(model.ser_project(out.token_embeddings));
                    const Tensor ls = loss::ser_loss(predicted, ex.ser_target, cfg.loss);
                    term = loss::combined_loss(term, scale(ls, 1.0 / batch), cfg.loss.lambda);
                }
                const double v = term.item();
                if (!std::isfinite(v)) abort(epoch, "non-finite loss");
                term.backward();
                batch_loss += v;
            }
            if (!all_finite(params)) abort(epoch, "non-finite gradient");
            optim::clip_global_norm(params, cfg.optim.clip_norm);
            optim::adamw_step(params, adam, lr, cfg.optim);
            loss_sum += batch_loss;
            ++n_batches;
        }

        CurveRow row;
        row.epoch = static_cast<double>(epoch + 1);
        row.train_loss = loss_sum / static_cast<double>(n_batches);
        row.val_ce = mean_ce(model, exp, exp.corpus.val);
        {
            const auto items = eval_items(decode_clips(model, exp, val_subset), val_subset);
            const auto sb = metrics::sbert_similarity(items, *exp.encoder);
            std::vector<metrics::FluencyFlags> flags;
            for (const auto& it : items) flags.push_back(metrics::fluency_errors(it.candidate));
            row.val_sbert = sb.score;
            row.val_fense = metrics::fense(sb, flags).score;
        }
        row.lr = lr;
        res.curve.push_back(row);
        if (res.best_epoch == 0 || row.val_fense > res.best_fense) {
            res.best_epoch = epoch + 1;
            res.best_fense = row.val_fense;
            res.best_model = model.state();
        }
        if (options.verbose)
            std::fprintf(stderr, "epoch %3zu  loss %.4f  val_ce %.4f  val_sbert %.4f  val_fense %.4f  lr %.3g\n",
                         epoch + 1, row.train_loss, row.val_ce, row.val_sbert, row.val_fense, lr);
        if (options.out_dir) {
            save_checkpoint(*options.out_dir / "last.ckpt", snapshot(epoch + 1, row.val_fense));
            if (res.best_epoch == epoch + 1) {
                auto best = snapshot(epoch + 1, row.val_fense);
                best.best_model.clear();
                best.optimizer = {};
                save_checkpoint(*options.out_dir / "best.ckpt", best);
            }
            write_curve_csv(*options.out_dir / "curve.csv", res.curve);
        }
    }

    res.last = snapshot(std::max(start, stop), res.curve.empty() ? 0.0 : res.curve.back().val_fense);
    res.final_decayed_norm = model::decayed_parameter_norm(params);
    res.final_exempt_norm = model::exempt_parameter_norm(params);
    res.encoder_hash_after = exp.encoder->parameter_hash();
    if (res.encoder_hash_after != res.encoder_hash_before)
        throw std::logic_error("sentence encoder parameters changed during training");
    return res;
}

// ---- learning curves ------------------------------------------------------

void write_curve_csv(const std::filesystem::path& path, const LearningCurve& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "epoch,train_loss,val_ce,val_sbert,val_fense,lr\n";
    for (const auto& r : curve)
        out << fmt(r.epoch) << ',' << fmt(r.train_loss) << ',' << fmt(r.val_ce) << ',' << fmt(r.val_sbert) << ','
            << fmt(r.val_fense) << ',' << fmt(r.lr) << '\n';
}

LearningCurve read_curve_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "epoch,train_loss,val_ce,val_sbert,val_fense,lr")
        throw std::runtime_error(path.string() + ": unexpected header");
    LearningCurve curve;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        std::vector<double> v;
        std::istringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            try {
                v.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
        }
        if (v.size() != 6) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 6 columns");
        curve.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
    }
    return curve;
}

std::string curves_csv(const std::vector<CurveSeries>& series) {
    std::ostringstream out;
    out << "run,row,epoch,train_loss,val_ce,val_sbert,val_fense,lr\n";
    for (const auto& s : series)
        for (const auto& r : s.curve)
            out << s.label << ',' << s.row << ',' << fmt(r.epoch) << ',' << fmt(r.train_loss) << ',' << fmt(r.val_ce)
                << ',' << fmt(r.val_sbert) << ',' << fmt(r.val_fense) << ',' << fmt(r.lr) << '\n';
    return out.str();
}

std::string curves_svg(const std::vector<CurveSeries>& series) {
    if (series.empty()) throw std::invalid_argument("curves_svg: no series");
    std::vector<std::string> rows;
    for (const auto& s : series)
        if (std::find(rows.begin(), rows.end(), s.row) == rows.end()) rows.push_back(s.row);
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    const double pw = 380, ph = 240, ml = 60, mt = 36, gap = 30;
    const double W = 2 * (pw + ml) + gap, H = static_cast<double>(rows.size()) * (ph + mt + 40) + 20;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
        for (int col = 0; col < 2; ++col) {
            auto value = [col](const CurveRow& r) { return col == 0 ? r.val_ce : r.val_sbert; };
            double x_max = 1, y_min = INFINITY, y_max = -INFINITY;
            for (const auto& s : series) {
                if (s.row != rows[ri]) continue;
                for (const auto& r : s.curve) {
                    x_max = std::max(x_max, r.epoch);
                    y_min = std::min(y_min, value(r));
                    y_max = std::max(y_max, value(r));
                }
            }
            if (!std::isfinite(y_min)) y_min = 0, y_max = 1;
            if (y_max - y_min < 1e-12) y_max = y_min + 1;
            const double x0 = ml + col * (pw + ml + gap), y0 = mt + static_cast<double>(ri) * (ph + mt + 40);
            auto px = [&](double e) { return x0 + (e - 1) / std::max(1.0, x_max - 1) * pw; };
            auto py = [&](double v) { return y0 + ph - (v - y_min) / (y_max - y_min) * ph; };
            svg << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\"" << ph
                << "\" fill=\"none\" stroke=\"#444\"/>\n";
            svg << "<text x=\"" << x0 << "\" y=\"" << y0 - 8 << "\">" << (col == 0 ? "validation CE" : "validation SBERT cosine")
                << (rows[ri].empty() ? "" : " (" + rows[ri] + ")") << "</text>\n";
            char tick[64];
            for (int t = 0; t <= 4; ++t) {
                const double v = y_min + (y_max - y_min) * t / 4.0;
                std::snprintf(tick, sizeof tick, "%.3g", v);
                svg << "<text x=\"" << x0 - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << tick << "</text>\n";
            }
            svg << "<text x=\"" << x0 + pw / 2 << "\" y=\"" << y0 + ph + 18 << "\" text-anchor=\"middle\">epoch (1.."
                << x_max << ")</text>\n";
            std::size_t k = 0;
            for (std::size_t si = 0; si < series.size(); ++si) {
                const auto& s = series[si];
                if (s.row != rows[ri]) continue;
                const char* colour = palette[si % std::size(palette)];
                svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
                for (const auto& r : s.curve) svg << px(r.epoch) << ',' << py(value(r)) << ' ';
                svg << "\"/>\n";
                svg << "<text x=\"" << x0 + pw - 4 << "\" y=\"" << y0 + 14 + 13 * static_cast<double>(k++)
                    << "\" text-anchor=\"end\" fill=\"" << colour << "\">" << s.label << "</text>\n";
            }
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

// ---- ablation -------------------------------------------------------------

std::string cell_label(text::VocabKind tokenizer, double lambda) {
    const bool ser = lambda > 0.0;
    if (tokenizer == text::VocabKind::word) return ser ? "baseline +SER loss" : "baseline";
    return ser ? "+SBERT tokens +SER loss" : "+SBERT tokens";
}

AblationReport run_ablation(const Experiment& base, const AblationOptions& options) {
    AblationReport rep;
    rep.n_seeds = options.n_seeds;
    for (auto wd : options.weight_decays)
        for (auto tok : options.tokenizers)
            for (auto lambda : options.lambdas) {
                AblationCell cell;
                cell.tokenizer = tok;
                cell.lambda = lambda;
                cell.weight_decay = wd;
                cell.label = cell_label(tok, lambda);
                std::vector<metrics::MetricReport> reports;
                double dn = 0, en = 0, rise = 0;
                for (std::size_t s = 0; s < options.n_seeds; ++s) {
                    auto cfg = base.config;
                    cfg.tokenizer = tok;
                    cfg.loss.lambda = lambda;
                    cfg.optim.weight_decay = wd;
                    cfg.train.seed = base.config.train.seed + s;
                    try {
                        const auto exp = with_config(base, cfg);
                        TrainOptions to;
                        to.verbose = options.verbose;
                        if (options.out_dir) {
                            char dir[96];
                            std::snprintf(dir, sizeof dir, "%s_lambda%g_wd%g_seed%zu", text::to_string(tok).c_str(), lambda, wd, s);
                            to.out_dir = *options.out_dir / dir;
                        }
                        const auto r = train(exp, to);
                        Checkpoint best = r.last;
                        best.model = r.best_model;
                        const auto m = restore_model(best, exp);
                        reports.push_back(metrics::evaluate(eval_items(decode_clips(m, exp, exp.corpus.test), exp.corpus.test), *exp.encoder));
                        dn += r.final_decayed_norm;
                        en += r.final_exempt_norm;
                        double lo = INFINITY;
                        for (const auto& row : r.curve) lo = std::min(lo, row.val_ce);
                        rise += r.curve.back().val_ce - lo;
                    } catch (const std::exception& e) {
                        cell.errors.push_back("seed " + std::to_string(cfg.train.seed) + ": " + e.what());
                    }
                    if (options.verbose)
                        std::fprintf(stderr, "[ablate] %s wd=%g seed %zu done\n", cell.label.c_str(), wd, s);
                }
                cell.seeds_ok = reports.size();
                if (!reports.empty()) {
                    cell.mean = metrics::average_reports(reports);
                    const double k = static_cast<double>(reports.size());
                    cell.final_decayed_norm = dn / k;
                    cell.final_exempt_norm = en / k;
                    cell.ce_rise = rise / k;
                }
                rep.cells.push_back(std::move(cell));
            }
    std::vector<metrics::EvalItem> items;
    for (const auto& c : base.corpus.test) items.push_back({"", c.captions});
    if (std::all_of(items.begin(), items.end(), [](const auto& it) { return it.references.size() == 5; }))
        rep.cross_reference = metrics::cross_reference(items, *base.encoder).report;
    return rep;
}

nlohmann::json AblationReport::to_json() const {
    nlohmann::json j;
    j["n_seeds"] = n_seeds;
    auto cells_j = nlohmann::json::array();
    for (const auto& c : cells) {
        nlohmann::json e;
        e["label"] = c.label;
        e["tokenizer"] = text::to_string(c.tokenizer);
        e["lambda"] = c.lambda;
        e["weight_decay"] = c.weight_decay;
        e["seeds_ok"] = c.seeds_ok;
        e["status"] = c.failed() ? "failed" : "ok";
        e["errors"] = c.errors;
        if (c.seeds_ok > 0) {
            e["metrics"] = c.mean.to_json(false);
            e["final_decayed_norm"] = metrics::round6(c.final_decayed_norm);
            e["final_exempt_norm"] = metrics::round6(c.final_exempt_norm);
            e["val_ce_rise"] = metrics::round6(c.ce_rise);
        }
        cells_j.push_back(std::move(e));
    }
    j["cells"] = std::move(cells_j);
    if (cross_reference) j["cross_reference"] = cross_reference->to_json(false);
    return j;
}

std::string AblationReport::to_markdown() const {
    std::ostringstream md;
    char buf[512];
    md << "| System | wd | CIDEr-D | SBERT | FluErr | FENSE | #words | decayed L2 | val CE rise | seeds | status |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& c : cells) {
        if (c.seeds_ok == 0) {
            std::snprintf(buf, sizeof buf, "| %s | %g | - | - | - | - | - | - | - | 0/%zu | failed |\n", c.label.c_str(),
                          c.weight_decay, n_seeds);
        } else {
            std::snprintf(buf, sizeof buf, "| %s | %g | %.3f | %.3f | %.3f | %.3f | %.1f | %.3f | %.4f | %zu/%zu | %s |\n",
                          c.label.c_str(), c.weight_decay, c.mean.cider_d, c.mean.sbert, c.mean.flu_err, c.mean.fense,
                          c.mean.n_words, c.final_decayed_norm, c.ce_rise, c.seeds_ok, n_seeds,
                          c.failed() ? "failed" : "ok");
        }
        md << buf;
    }
    if (cross_reference) {
        std::snprintf(buf, sizeof buf, "| Cross-referencing | - | %.3f | %.3f | %.3f | %.3f | %.1f | - | - | - | ok |\n",
                      cross_reference->cider_d, cross_reference->sbert, cross_reference->flu_err, cross_reference->fense,
                      cross_reference->n_words);
        md << buf;
    }
    for (const auto& c : cells)
        for (const auto& e : c.errors) md << "\n- " << c.label << " (wd " << c.weight_decay << "): " << e;
    md << '\n';
    return md.str();
}

}  // namespace aac::harness
